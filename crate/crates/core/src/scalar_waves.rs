//! Scalar Helmholtz Green functions in 2D/3D and their Cartesian derivative
//! tensors up to order 4.
//!
//! The outgoing free-space kernels are
//! - 2D: `G(r) = -(i/4) H0^(1)(κ r)` with `H0^(1)` the first-kind Hankel function,
//! - 3D: `G(r) = -e^{iκr} / (4π r)`.
//!
//! Cartesian derivatives of a radial function `G(x) = g(|x|)` are assembled
//! from the radial ladder `f_0 = g`, `f_{m+1}(r) = f_m'(r)/r`:
//!
//! ```text
//! ∂_i G            = f1 x_i
//! ∂_ij G           = f2 x_i x_j + f1 δ_ij
//! ∂_ijk G          = f3 x_i x_j x_k + f2 (δ_ij x_k + δ_ik x_j + δ_jk x_i)
//! ∂_ijkl G         = f4 xxxx + f3 (six δ·xx terms) + f2 (three δδ terms)
//! ```
//!
//! so every tensor is fully symmetric by construction. The imaginary parts of
//! `G` and all its derivatives are smooth through `x = 0`; they are evaluated
//! by dedicated small-argument even power series to avoid the catastrophic
//! cancellation of subtracting the singular real parts.

use crate::error::{Error, Result};
use crate::C64;
use std::f64::consts::PI;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series/asymptotic switch point for the Bessel evaluations. Below the
/// switch the ascending power series are accurate to ~2e-12 relative; above
/// it the large-argument expansion is accurate to ~1e-11 and improving. The
/// two branches agree to ~1e-11 over [12, 13] (tested).
const BESSEL_SWITCH: f64 = 12.0;

/// κr below which imaginary-part kernels use the even power series.
const IM_SERIES_SWITCH: f64 = 1.0;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Digamma function at a positive integer: ψ(m) = −γ + Σ_{i<m} 1/i.
fn digamma_int(m: usize) -> f64 {
    -EULER_GAMMA + (1..m).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Ascending series for J_n, n ≤ 5, accurate for x below the switch point.
fn bessel_j_series(n: usize, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut t = (0.5 * x).powi(n as i32) / factorial(n);
    let mut s = t;
    for k in 1..60 {
        t *= -q / (k as f64 * (n + k) as f64);
        s += t;
        if t.abs() < 1e-18 * s.abs() + 1e-300 {
            break;
        }
    }
    s
}

/// Ascending series for Y_n, n ≤ 5 (log + digamma form).
fn bessel_y_series(n: usize, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let log_term = (2.0 / PI) * (0.5 * x).ln() * bessel_j_series(n, x);

    // Finite singular sum: (1/π) Σ_{k=0}^{n-1} (n-k-1)!/k! (x/2)^{2k-n}.
    let mut singular = 0.0;
    if n > 0 {
        let mut t = factorial(n - 1) * (0.5 * x).powi(-(n as i32));
        singular = t;
        for k in 1..n {
            t *= q / (k as f64 * (n - k) as f64);
            singular += t;
        }
        singular /= PI;
    }

    // Regular sum: (1/π) Σ_k (-1)^k (ψ(k+1)+ψ(n+k+1)) (x/2)^{2k+n} / (k!(n+k)!).
    let mut t = (0.5 * x).powi(n as i32) / factorial(n);
    let mut regular = (digamma_int(1) + digamma_int(n + 1)) * t;
    for k in 1..60 {
        t *= -q / (k as f64 * (n + k) as f64);
        regular += (digamma_int(k + 1) + digamma_int(n + k + 1)) * t;
        if t.abs() * 30.0 < 1e-18 * regular.abs() + 1e-300 {
            break;
        }
    }
    log_term - singular - regular / PI
}

/// Large-argument expansion: (J_n, Y_n) = sqrt(2/(πx)) (P cos χ − Q sin χ,
/// P sin χ + Q cos χ), χ = x − (2n+1)π/4, with the P/Q series truncated at
/// the smallest term.
fn bessel_jy_asymptotic(n: usize, x: f64) -> (f64, f64) {
    let mu = 4.0 * (n * n) as f64;
    let mut terms = Vec::with_capacity(24);
    let mut a = 1.0f64;
    terms.push(a);
    for k in 1..40usize {
        let next = a * (mu - (2 * k as i32 - 1).pow(2) as f64) / (k as f64 * 8.0 * x);
        if next.abs() >= a.abs() && k > 2 {
            break; // divergent tail reached; stop at the minimal term
        }
        a = next;
        terms.push(a);
        if a.abs() < 1e-18 {
            break;
        }
    }
    let (mut p, mut q) = (0.0, 0.0);
    for (k, &ak) in terms.iter().enumerate() {
        if k % 2 == 0 {
            p += if k % 4 == 0 { ak } else { -ak };
        } else {
            q += if k % 4 == 1 { ak } else { -ak };
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    let (s, c) = chi.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

fn bessel_j(n: usize, x: f64) -> f64 {
    if x < BESSEL_SWITCH {
        bessel_j_series(n, x)
    } else {
        bessel_jy_asymptotic(n, x).0
    }
}

fn bessel_y(n: usize, x: f64) -> f64 {
    if x < BESSEL_SWITCH {
        bessel_y_series(n, x)
    } else {
        bessel_jy_asymptotic(n, x).1
    }
}

/// First-kind Hankel function H_n^(1)(x) = J_n(x) + i Y_n(x), n ≤ 5, x > 0.
pub fn hankel1(n: usize, x: f64) -> Result<C64> {
    if n > 5 {
        return Err(Error::Domain(format!("hankel1: order {n} > 5 unsupported")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("hankel1: argument {x} must be > 0")));
    }
    Ok(C64::new(bessel_j(n, x), bessel_y(n, x)))
}

/// Scalar outgoing Helmholtz Green function at radius `r > 0`.
pub fn green_scalar(d: usize, kappa: f64, r: f64) -> Result<C64> {
    check_dim(d)?;
    check_kappa(kappa)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("green_scalar: r={r} must be > 0")));
    }
    Ok(match d {
        2 => C64::new(0.0, -0.25) * hankel1(0, kappa * r)?,
        _ => -(C64::new(0.0, kappa * r)).exp() / (4.0 * PI * r),
    })
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::Domain(format!("dimension {d} must be 2 or 3")))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("wavenumber {kappa} must be finite and > 0")))
    }
}

/// Radial derivatives g, g', g'', g''', g'''' of the Green function at r > 0.
///
/// 2D uses the H0 derivative ladder expressed in H0..H4; 3D differentiates
/// `e^{iκr}·(polynomial in 1/r)` exactly.
pub fn radial_green_derivs(d: usize, kappa: f64, r: f64) -> Result<[C64; 5]> {
    check_dim(d)?;
    check_kappa(kappa)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radial_green_derivs: r={r} must be > 0")));
    }
    let x = kappa * r;
    if d == 2 {
        let h: Vec<C64> = (0..5).map(|n| hankel1(n, x)).collect::<Result<_>>()?;
        // Successive derivatives of H0 with respect to its argument.
        let d0 = h[0];
        let d1 = -h[1];
        let d2 = (h[2] - h[0]) * 0.5;
        let d3 = (h[1] * 3.0 - h[3]) * 0.25;
        let d4 = (h[4] - h[2] * 4.0 + h[0] * 3.0) * 0.125;
        let pref = C64::new(0.0, -0.25);
        let mut out = [C64::new(0.0, 0.0); 5];
        for (m, dm) in [d0, d1, d2, d3, d4].into_iter().enumerate() {
            out[m] = pref * kappa.powi(m as i32) * dm;
        }
        Ok(out)
    } else {
        // g^(m)(r) = -(1/4π) e^{iκr} Σ_p c_p r^{-(p+1)}; differentiating a term
        // c_p r^{-(p+1)} produces iκ c_p r^{-(p+1)} − (p+1) c_p r^{-(p+2)}.
        let ik = C64::new(0.0, kappa);
        let phase = -(C64::new(0.0, x)).exp() / (4.0 * PI);
        let mut coeffs: Vec<C64> = vec![C64::new(1.0, 0.0)];
        let mut out = [C64::new(0.0, 0.0); 5];
        for m in 0..5 {
            let mut val = C64::new(0.0, 0.0);
            for (p, c) in coeffs.iter().enumerate() {
                val += c * r.powi(-(p as i32 + 1));
            }
            out[m] = phase * val;
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (p, c) in coeffs.iter().enumerate() {
                next[p] += ik * c;
                next[p + 1] -= c * (p as f64 + 1.0);
            }
            coeffs = next;
        }
        Ok(out)
    }
}

/// The radial ladder f_0..f_4 (full complex values) at r > 0.
pub fn radial_fs(d: usize, kappa: f64, r: f64) -> Result<[C64; 5]> {
    let g = radial_green_derivs(d, kappa, r)?;
    let (r1, r2, r3, r4, r5, r6, r7) = {
        let r2 = r * r;
        let r3 = r2 * r;
        (r, r2, r3, r2 * r2, r2 * r3, r3 * r3, r3 * r3 * r)
    };
    Ok([
        g[0],
        g[1] / r1,
        g[2] / r2 - g[1] / r3,
        g[3] / r3 - g[2] * 3.0 / r4 + g[1] * 3.0 / r5,
        g[4] / r4 - g[3] * 6.0 / r5 + g[2] * 15.0 / r6 - g[1] * 15.0 / r7,
    ])
}

/// Leading coefficient and term ratio of the even series Im g(r) = Σ a_j r^{2j}.
fn im_series_coeffs(d: usize, kappa: f64) -> (f64, Box<dyn Fn(usize) -> f64>) {
    let k2 = kappa * kappa;
    if d == 2 {
        (-0.25, Box::new(move |j: usize| -k2 / (4.0 * (j * j) as f64)))
    } else {
        (
            -kappa / (4.0 * PI),
            Box::new(move |j: usize| -k2 / ((2 * j) as f64 * (2 * j + 1) as f64)),
        )
    }
}

/// The radial ladder of the imaginary part, valid for all r ≥ 0.
///
/// For κr below [`IM_SERIES_SWITCH`] the even power series of Im g is used
/// (f_m(0) = a_m 2^m m!), otherwise the imaginary part of [`radial_fs`].
pub fn radial_fs_im(d: usize, kappa: f64, r: f64) -> Result<[f64; 5]> {
    check_dim(d)?;
    check_kappa(kappa)?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radial_fs_im: r={r} must be >= 0")));
    }
    if kappa * r >= IM_SERIES_SWITCH {
        let fs = radial_fs(d, kappa, r)?;
        return Ok(std::array::from_fn(|m| fs[m].im));
    }
    let (a0, ratio) = im_series_coeffs(d, kappa);
    let p = r * r;
    let mut out = [0.0f64; 5];
    let mut a = a0;
    for j in 0..=34usize {
        // a_j contributes a_j · 2^m j!/(j−m)! · r^{2(j−m)} to f_m for m ≤ j.
        let mut coef = 1.0; // 2^m j!/(j-m)! built incrementally over m
        for m in 0..=j.min(4) {
            out[m] += a * coef * p.powi((j - m) as i32); // 0^0 = 1, so r = 0 is fine
            coef *= 2.0 * (j - m) as f64;
        }
        a *= ratio(j + 1);
        if a.abs() * p.max(1.0).powi(j as i32 + 1) < 1e-25 * out[0].abs().max(1e-30) {
            break;
        }
    }
    Ok(out)
}

/// Cartesian derivative tensors of G up to order 4 (fully symmetric).
#[derive(Debug, Clone)]
pub struct DerivTensors<const D: usize> {
    pub order: usize,
    pub t0: C64,
    pub t1: [C64; D],
    pub t2: [[C64; D]; D],
    pub t3: [[[C64; D]; D]; D],
    pub t4: [[[[C64; D]; D]; D]; D],
}

/// Real (imaginary-part) counterpart of [`DerivTensors`], defined at x = 0 too.
#[derive(Debug, Clone)]
pub struct ImDerivTensors<const D: usize> {
    pub t0: f64,
    pub t1: [f64; D],
    pub t2: [[f64; D]; D],
    pub t3: [[[f64; D]; D]; D],
    pub t4: [[[[f64; D]; D]; D]; D],
}

/// Scalar abstraction so tensor assembly is shared between the complex
/// kernels and their real imaginary parts.
pub(crate) trait Scalar:
    Copy + std::ops::Add<Output = Self> + std::ops::Mul<f64, Output = Self>
{
}

impl Scalar for f64 {}

impl Scalar for C64 {}

fn kron(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn sym_t1<S: Scalar, const D: usize>(fs: &[S; 5], x: &[f64; D]) -> [S; D] {
    std::array::from_fn(|i| fs[1] * x[i])
}

pub(crate) fn sym_t2<S: Scalar, const D: usize>(fs: &[S; 5], x: &[f64; D]) -> [[S; D]; D] {
    std::array::from_fn(|i| std::array::from_fn(|j| fs[2] * (x[i] * x[j]) + fs[1] * kron(i, j)))
}

pub(crate) fn sym_t3<S: Scalar, const D: usize>(fs: &[S; 5], x: &[f64; D]) -> [[[S; D]; D]; D] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                fs[3] * (x[i] * x[j] * x[k])
                    + fs[2] * (kron(i, j) * x[k] + kron(i, k) * x[j] + kron(j, k) * x[i])
            })
        })
    })
}

pub(crate) fn sym_t4<S: Scalar, const D: usize>(
    fs: &[S; 5],
    x: &[f64; D],
) -> [[[[S; D]; D]; D]; D] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| {
                    fs[4] * (x[i] * x[j] * x[k] * x[l])
                        + fs[3]
                            * (kron(i, j) * x[k] * x[l]
                                + kron(i, k) * x[j] * x[l]
                                + kron(i, l) * x[j] * x[k]
                                + kron(j, k) * x[i] * x[l]
                                + kron(j, l) * x[i] * x[k]
                                + kron(k, l) * x[i] * x[j])
                        + fs[2]
                            * (kron(i, j) * kron(k, l)
                                + kron(i, k) * kron(j, l)
                                + kron(i, l) * kron(j, k))
                })
            })
        })
    })
}

/// All Cartesian derivative tensors of G up to `order` at `x ≠ 0`.
pub fn green_derivs<const D: usize>(
    kappa: f64,
    x: [f64; D],
    order: usize,
) -> Result<DerivTensors<D>> {
    if order > 4 {
        return Err(Error::Domain(format!("green_derivs: order {order} > 4")));
    }
    let r = crate::geom::norm(x);
    let fs = radial_fs(D, kappa, r)?;
    let zero = C64::new(0.0, 0.0);
    let mut out = DerivTensors {
        order,
        t0: fs[0],
        t1: [zero; D],
        t2: [[zero; D]; D],
        t3: [[[zero; D]; D]; D],
        t4: [[[[zero; D]; D]; D]; D],
    };
    if order >= 1 {
        out.t1 = sym_t1(&fs, &x);
    }
    if order >= 2 {
        out.t2 = sym_t2(&fs, &x);
    }
    if order >= 3 {
        out.t3 = sym_t3(&fs, &x);
    }
    if order >= 4 {
        out.t4 = sym_t4(&fs, &x);
    }
    Ok(out)
}

/// Imaginary-part derivative tensors up to order 4, valid at every `x`
/// including the origin.
pub fn green_derivs_im<const D: usize>(kappa: f64, x: [f64; D]) -> Result<ImDerivTensors<D>> {
    let r = crate::geom::norm(x);
    let fs = radial_fs_im(D, kappa, r)?;
    Ok(ImDerivTensors {
        t0: fs[0],
        t1: sym_t1(&fs, &x),
        t2: sym_t2(&fs, &x),
        t3: sym_t3(&fs, &x),
        t4: sym_t4(&fs, &x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// High-precision (J_n, Y_n) reference values (30-digit arithmetic).
    const JY_REF: &[(usize, f64, f64, f64)] = &[
        (0, 0.3, 0.97762624653829609, -0.80727357780451947),
        (0, 1.0, 0.76519768655796655, 0.088256964215676958),
        (0, 2.5, -0.048383776468197996, 0.49807035961523189),
        (0, 5.0, -0.1775967713143383, -0.30851762524903378),
        (0, 8.0, 0.17165080713755391, 0.22352148938756622),
        (0, 11.5, -0.067653948111665228, -0.22523211169118787),
        (0, 12.5, 0.1468840547004211, -0.17121430684466929),
        (0, 20.0, 0.16702466434058315, 0.062640596809383831),
        (0, 50.0, 0.055812327669251815, -0.098064995470077079),
        (1, 0.3, 0.14831881627310401, -2.293105138388529),
        (1, 1.0, 0.44005058574493352, -0.78121282130028872),
        (1, 2.5, 0.49709410246427404, 0.1459181379667858),
        (1, 5.0, -0.32757913759146522, 0.14786314339122684),
        (1, 8.0, 0.23463634685391462, -0.15806046173124749),
        (1, 11.5, -0.22837862066532347, 0.057942547143000822),
        (1, 12.5, -0.16548380461475972, -0.15383825653750118),
        (1, 20.0, 0.066833124175850046, -0.1655116143625213),
        (1, 50.0, -0.097511828125175138, -0.056795668562014768),
        (2, 0.3, 0.011165861949063964, -14.480094011452341),
        (2, 1.0, 0.11490348493190048, -1.6506826068162544),
        (2, 2.5, 0.44605905843961723, -0.38133584924180325),
        (2, 5.0, 0.046565116277752216, 0.36766288260552452),
        (2, 8.0, -0.11299172042407525, -0.26303660482037809),
        (2, 11.5, 0.027935927126391581, 0.23530907641170975),
        (2, 12.5, -0.17336146343878266, 0.1466001857986691),
        (2, 20.0, -0.16034135192299815, -0.079191758245635961),
        (2, 50.0, -0.059712800794258821, 0.095793168727596488),
        (3, 0.3, 0.00055934304774884612, -190.77481501430935),
        (3, 1.0, 0.019563353982668406, -5.8215176059647288),
        (3, 2.5, 0.21660039103911352, -0.756055496753671),
        (3, 5.0, 0.36483123061366699, 0.14626716269319277),
        (3, 8.0, -0.29113220706595225, 0.026542159321058447),
        (3, 11.5, 0.23809546488319881, 0.023904088130637351),
        (3, 12.5, 0.11000813631434927, 0.20075031599307529),
        (3, 20.0, -0.098901394560449676, 0.1496732627133941),
        (3, 50.0, 0.092734804061634432, 0.064459122060222487),
        (4, 0.3, 2.0999005912958371e-5, -3801.0162062747346),
        (4, 1.0, 0.002476638964109955, -33.278423028972119),
        (4, 2.5, 0.073781880054255233, -1.4331973429670071),
        (4, 5.0, 0.39123236045864818, -0.19214228737369319),
        (4, 8.0, -0.10535743487538894, 0.28294322431117193),
        (4, 11.5, 0.096287793682233884, -0.22283737825659461),
        (4, 12.5, 0.22616536886967031, -0.050240034121992959),
        (4, 20.0, 0.13067093355486325, 0.12409373705965419),
        (4, 50.0, 0.070840977281654952, -0.08805807408036979),
        (5, 0.3, 6.3044326337710723e-7, -101169.65735231195),
        (5, 1.0, 0.00024975773021123443, -260.40586662581222),
        (5, 2.5, 0.01950162513450322, -3.8301760007407519),
        (5, 5.0, 0.26114054612017009, -0.45369482249110188),
        (5, 8.0, 0.18577477219056331, 0.25640106499011348),
        (5, 11.5, -0.17111265188686219, -0.17892139474392056),
        (5, 12.5, 0.034737699762239728, -0.23290393783115079),
        (5, 20.0, 0.15116976798239497, -0.10003576788953243),
        (5, 50.0, -0.08140024769656964, -0.078548413913081653),
    ];

    #[test]
    fn hankel_matches_reference_table() {
        for &(n, x, j, y) in JY_REF {
            let h = hankel1(n, x).unwrap();
            assert!(
                (h.re - j).abs() <= 1e-10 * j.abs(),
                "J_{n}({x}): got {}, want {j}",
                h.re
            );
            assert!(
                (h.im - y).abs() <= 1e-10 * y.abs(),
                "Y_{n}({x}): got {}, want {y}",
                h.im
            );
        }
    }

    #[test]
    fn hankel_branch_overlap() {
        // Both evaluation branches agree over [12, 13] to 1e-11 relative.
        for n in 0..=5usize {
            let mut x = 12.0;
            while x <= 13.0 {
                let s = C64::new(bessel_j_series(n, x), bessel_y_series(n, x));
                let (ja, ya) = bessel_jy_asymptotic(n, x);
                let a = C64::new(ja, ya);
                assert!(
                    (s - a).norm() <= 5e-11 * a.norm(),
                    "branch mismatch n={n} x={x}: {s} vs {a}"
                );
                x += 0.1;
            }
        }
    }

    #[test]
    fn hankel_domain_errors() {
        assert!(hankel1(6, 1.0).is_err());
        assert!(hankel1(0, 0.0).is_err());
        assert!(hankel1(0, -1.0).is_err());
    }

    #[test]
    fn hankel_log_divergence_near_zero() {
        // Y0(x) ~ (2/π)(ln(x/2) + γ) as x → 0+.
        let x = 1e-8;
        let h = hankel1(0, x).unwrap();
        assert!(h.im < -10.0);
        assert_relative_eq!(
            h.im,
            (2.0 / PI) * ((0.5 * x).ln() + EULER_GAMMA),
            max_relative = 1e-12
        );
    }

    #[test]
    fn green_scalar_examples() {
        let g3 = green_scalar(3, 1.0, 1.0).unwrap();
        let want = -C64::new(1.0f64.cos(), 1.0f64.sin()) / (4.0 * PI);
        assert_relative_eq!(g3.re, want.re, max_relative = 1e-12);
        assert_relative_eq!(g3.im, want.im, max_relative = 1e-12);

        let g2 = green_scalar(2, 1.0, 1.0).unwrap();
        assert_relative_eq!(g2.re, 0.088256964215676958 / 4.0, max_relative = 1e-12);
        assert_relative_eq!(g2.im, -0.76519768655796655 / 4.0, max_relative = 1e-12);

        // 3D imaginary part tends to −κ/(4π) as r → 0.
        let kappa = 2.0;
        let g = green_scalar(3, kappa, 1e-6).unwrap();
        assert_relative_eq!(g.im, -kappa / (4.0 * PI), max_relative = 1e-9);

        assert!(green_scalar(2, 1.0, 0.0).is_err());
        assert!(green_scalar(4, 1.0, 1.0).is_err());
    }

    /// Central finite difference of a complex-valued function of one coordinate.
    fn fd<const D: usize>(f: impl Fn([f64; D]) -> C64, x: [f64; D], i: usize, h: f64) -> C64 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        (f(xp) - f(xm)) / (2.0 * h)
    }

    #[test]
    fn derivative_tensors_match_finite_differences() {
        let h = 1e-4;
        for (kappa, x2) in [(1.0, [0.9, 0.55]), (3.0, [-0.4, 1.3]), (6.28, [2.0, -0.7])] {
            let t = green_derivs::<2>(kappa, x2, 4).unwrap();
            // order 1 vs FD of order 0
            for i in 0..2 {
                let num = fd(|y| green_derivs::<2>(kappa, y, 0).unwrap().t0, x2, i, h);
                assert_relative_eq!(t.t1[i].re, num.re, max_relative = 1e-6, epsilon = 1e-9);
                assert_relative_eq!(t.t1[i].im, num.im, max_relative = 1e-6, epsilon = 1e-9);
            }
            // order k vs FD of order k−1
            for i in 0..2 {
                for j in 0..2 {
                    let num = fd(|y| green_derivs::<2>(kappa, y, 1).unwrap().t1[j], x2, i, h);
                    let diff = (t.t2[i][j] - num).norm();
                    assert!(diff <= 1e-5 * t.t2[i][j].norm().max(1.0));
                    for k in 0..2 {
                        let num =
                            fd(|y| green_derivs::<2>(kappa, y, 2).unwrap().t2[j][k], x2, i, h);
                        assert!((t.t3[i][j][k] - num).norm() <= 1e-5 * num.norm().max(1.0));
                        for l in 0..2 {
                            let num = fd(
                                |y| green_derivs::<2>(kappa, y, 3).unwrap().t3[j][k][l],
                                x2,
                                i,
                                h,
                            );
                            assert!((t.t4[i][j][k][l] - num).norm() <= 1e-5 * num.norm().max(1.0));
                        }
                    }
                }
            }
        }
        // 3D spot check on gradient and Hessian.
        let x3 = [0.6, -0.8, 0.3];
        let t = green_derivs::<3>(2.0, x3, 2).unwrap();
        for i in 0..3 {
            let num = fd(|y| green_derivs::<3>(2.0, y, 0).unwrap().t0, x3, i, 1e-5);
            assert!((t.t1[i] - num).norm() <= 1e-6 * num.norm().max(1.0));
            for j in 0..3 {
                let num = fd(|y| green_derivs::<3>(2.0, y, 1).unwrap().t1[j], x3, i, 1e-5);
                assert!((t.t2[i][j] - num).norm() <= 1e-5 * num.norm().max(1.0));
            }
        }
    }

    #[test]
    fn helmholtz_equation_holds_off_origin() {
        for (kappa, r) in [(1.0, 0.5), (4.0, 1.7), (2.0, 5.0)] {
            for d in [2usize, 3] {
                let resid = if d == 2 {
                    let x = [r, 0.31];
                    let t = green_derivs::<2>(kappa, x, 2).unwrap();
                    let lap = t.t2[0][0] + t.t2[1][1];
                    (lap + t.t0 * kappa * kappa).norm() / t.t0.norm()
                } else {
                    let x = [r, 0.31, -0.4];
                    let t = green_derivs::<3>(kappa, x, 2).unwrap();
                    let lap = t.t2[0][0] + t.t2[1][1] + t.t2[2][2];
                    (lap + t.t0 * kappa * kappa).norm() / t.t0.norm()
                };
                assert!(resid <= 1e-8 * kappa * kappa, "residual {resid} d={d}");
            }
        }
    }

    #[test]
    fn tensors_symmetric_under_index_permutation() {
        let t = green_derivs::<2>(3.0, [0.7, -1.1], 4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(t.t2[i][j], t.t2[j][i]);
                for k in 0..2 {
                    assert_eq!(t.t3[i][j][k], t.t3[k][i][j]);
                    assert_eq!(t.t3[i][j][k], t.t3[j][i][k]);
                    for l in 0..2 {
                        assert_eq!(t.t4[i][j][k][l], t.t4[l][k][j][i]);
                        assert_eq!(t.t4[i][j][k][l], t.t4[j][i][l][k]);
                    }
                }
            }
        }
    }

    #[test]
    fn imaginary_parts_continuous_at_origin() {
        for d in [2usize, 3] {
            let kappa = 2.5;
            let at0 = radial_fs_im(d, kappa, 0.0).unwrap();
            // 2D: Im G(0) = −1/4; 3D: Im G(0) = −κ/(4π).
            let want0 = if d == 2 { -0.25 } else { -kappa / (4.0 * PI) };
            assert_relative_eq!(at0[0], want0, max_relative = 1e-14);
            // Sequence r → 0 converges to the limit values for every ladder entry.
            for m in 0..5 {
                let mut prev_gap = f64::INFINITY;
                for r in [1e-1, 1e-2, 1e-3] {
                    let v = radial_fs_im(d, kappa, r).unwrap();
                    let gap = (v[m] - at0[m]).abs();
                    assert!(gap <= prev_gap + 1e-12, "m={m} r={r}");
                    prev_gap = gap;
                }
                let v = radial_fs_im(d, kappa, 1e-4).unwrap();
                assert!((v[m] - at0[m]).abs() <= 1e-8 * at0[m].abs().max(1.0));
            }
        }
    }

    #[test]
    fn imaginary_series_matches_complex_branch_at_switch() {
        for d in [2usize, 3] {
            for kappa in [0.7, 2.0, 6.28] {
                let r_lo = 0.999 / kappa;
                let r_hi = 1.001 / kappa;
                let lo = radial_fs_im(d, kappa, r_lo).unwrap();
                let hi = radial_fs_im(d, kappa, r_hi).unwrap();
                // Also: series evaluated just below the switch agrees with the
                // complex branch evaluated at the same point.
                let complex_lo = radial_fs(d, kappa, r_lo).unwrap();
                for m in 0..5 {
                    let scale = lo[m].abs().max(1e-12);
                    assert!((lo[m] - complex_lo[m].im).abs() <= 1e-9 * scale);
                    assert!((lo[m] - hi[m]).abs() <= 1e-2 * scale); // plain continuity
                }
            }
        }
    }
}
