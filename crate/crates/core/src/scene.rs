//! Problem geometry and probing fields: inclusion description, boundary
//! quadrature grids on a disk/ball of radius `R`, uniform direction sets, and
//! elastic plane waves.

use crate::elastic_moment::{emt_from_iso, Emt4, IsoEmt};
use crate::error::{Error, Result};
use crate::geom::{dot, norm, CMat, CVec, RMat};
use crate::kupradze::{im_gamma_alpha, Medium, Mode};
use crate::C64;
use std::f64::consts::PI;

/// Heuristic validity threshold on the nondimensional inclusion size δκS:
/// the leading-order forward model degrades beyond it (warning, not error).
pub const DELTA_KAPPA_WARN: f64 = 0.2;

/// A small inclusion of characteristic size δ centered at `za`.
///
/// The contrast enters the data through `ω²(ρ0−ρ1)|B|` (density part) and the
/// elastic moment tensor `emt` (elasticity part); a zero tensor gives a pure
/// density contrast.
#[derive(Debug, Clone)]
pub struct Inclusion<const D: usize> {
    pub za: [f64; D],
    pub delta: f64,
    pub volume_b: f64,
    pub rho1: f64,
    pub emt: Emt4<D>,
    /// Isotropic coefficients when the EMT has the disk/ball form; closed-form
    /// predictions require this.
    pub iso: Option<IsoEmt>,
}

impl<const D: usize> Inclusion<D> {
    pub fn new_iso(za: [f64; D], delta: f64, volume_b: f64, rho1: f64, iso: IsoEmt) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta={delta} must be > 0")));
        }
        if !(rho1 > 0.0) {
            return Err(Error::Config(format!("rho1={rho1} must be > 0")));
        }
        Ok(Inclusion {
            za,
            delta,
            volume_b,
            rho1,
            emt: emt_from_iso(iso),
            iso: Some(iso),
        })
    }

    /// Pure density contrast (zero EMT).
    pub fn new_density(za: [f64; D], delta: f64, volume_b: f64, rho1: f64) -> Result<Self> {
        let mut inc = Self::new_iso(za, delta, volume_b, rho1, IsoEmt { a: 0.0, b: 0.0 })?;
        inc.iso = Some(IsoEmt { a: 0.0, b: 0.0 });
        Ok(inc)
    }

    /// Non-fatal model-validity warnings for this inclusion in `med`.
    pub fn validity_warnings(&self, med: &Medium) -> Vec<String> {
        let mut out = Vec::new();
        let dk = self.delta * med.kappa_s();
        if dk > DELTA_KAPPA_WARN {
            out.push(format!(
                "delta*kappaS = {dk:.3} exceeds {DELTA_KAPPA_WARN}; leading-order data model may be inaccurate"
            ));
        }
        out
    }
}

/// Trial inclusion parameters used by the imaging functionals.
#[derive(Debug, Clone)]
pub struct TrialInclusion<const D: usize> {
    pub rho1p: f64,
    pub volume_bp: f64,
    pub emtp: Emt4<D>,
    pub isop: Option<IsoEmt>,
}

impl<const D: usize> TrialInclusion<D> {
    pub fn new_iso(rho1p: f64, volume_bp: f64, isop: IsoEmt) -> Self {
        TrialInclusion {
            rho1p,
            volume_bp,
            emtp: emt_from_iso(isop),
            isop: Some(isop),
        }
    }

    /// The density contrasts of trial and true inclusion must not have
    /// opposite signs for the peak analysis to apply.
    pub fn check_contrast_sign(&self, rho0: f64, rho1: f64) -> Result<()> {
        if (rho0 - self.rho1p) * (rho0 - rho1) < 0.0 {
            return Err(Error::Config(format!(
                "(rho0-rho1')(rho0-rho1) = ({} - {})({} - {}) < 0; trial and true density contrasts must agree in sign",
                rho0, self.rho1p, rho0, rho1
            )));
        }
        Ok(())
    }
}

/// Quadrature discretization of the measurement boundary ∂Ω.
#[derive(Debug, Clone)]
pub struct BoundaryGrid<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub normals: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    /// Radius of the disk/ball Ω.
    pub radius: f64,
}

impl<const D: usize> BoundaryGrid<D> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from an interior point to ∂Ω (negative if outside).
    pub fn boundary_distance(&self, x: [f64; D]) -> f64 {
        self.radius - norm(x)
    }
}

/// Equiangular nodes on the circle of radius `R` with trapezoid weights.
pub fn circle_boundary(r: f64, n: usize) -> Result<BoundaryGrid<2>> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("boundary radius {r} must be > 0")));
    }
    if n < 8 {
        return Err(Error::Config(format!("boundary node count {n} must be >= 8")));
    }
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let w = 2.0 * PI * r / n as f64;
    for j in 0..n {
        let th = 2.0 * PI * j as f64 / n as f64;
        let e = [th.cos(), th.sin()];
        points.push([r * e[0], r * e[1]]);
        normals.push(e);
    }
    Ok(BoundaryGrid {
        points,
        normals,
        weights: vec![w; n],
        radius: r,
    })
}

/// Latitude–longitude nodes on the sphere of radius `R` with sin-weighted
/// quadrature: `ntheta` polar rings (midpoint rule in θ), `nphi` azimuthal
/// nodes per ring.
pub fn sphere_boundary(r: f64, ntheta: usize, nphi: usize) -> Result<BoundaryGrid<3>> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("boundary radius {r} must be > 0")));
    }
    if ntheta < 4 || nphi < 8 {
        return Err(Error::Config(format!(
            "sphere grid {ntheta}x{nphi} too coarse (need ntheta >= 4, nphi >= 8)"
        )));
    }
    let mut points = Vec::with_capacity(ntheta * nphi);
    let mut normals = Vec::with_capacity(ntheta * nphi);
    let mut weights = Vec::with_capacity(ntheta * nphi);
    let dth = PI / ntheta as f64;
    let dph = 2.0 * PI / nphi as f64;
    for it in 0..ntheta {
        let th = (it as f64 + 0.5) * dth;
        let (sth, cth) = th.sin_cos();
        // Exact ∫ sinθ dθ over the ring's θ-interval, so Σ weights = 4πr².
        let w = r * r * ((it as f64 * dth).cos() - ((it + 1) as f64 * dth).cos()) * dph;
        for ip in 0..nphi {
            let ph = ip as f64 * dph;
            let e = [sth * ph.cos(), sth * ph.sin(), cth];
            points.push([r * e[0], r * e[1], r * e[2]]);
            normals.push(e);
            weights.push(w);
        }
    }
    Ok(BoundaryGrid {
        points,
        normals,
        weights,
        radius: r,
    })
}

/// `n` approximately uniform unit directions: equiangular in 2D, Fibonacci
/// sphere in 3D.
pub fn uniform_directions<const D: usize>(n: usize) -> Result<Vec<[f64; D]>> {
    if n == 0 {
        return Err(Error::Config("direction count must be >= 1".into()));
    }
    match D {
        2 => Ok((0..n)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / n as f64;
                let mut e = [0.0; D];
                e[0] = th.cos();
                e[1] = th.sin();
                e
            })
            .collect()),
        3 => {
            let golden = PI * (3.0 - 5.0f64.sqrt());
            Ok((0..n)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / n as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let ph = golden * j as f64;
                    let mut e = [0.0; D];
                    e[0] = rho * ph.cos();
                    e[1] = rho * ph.sin();
                    e[2] = z;
                    e
                })
                .collect())
        }
        _ => Err(Error::Domain(format!("dimension {D} must be 2 or 3"))),
    }
}

/// An elastic plane wave probe `U(x) = e^{iκ_mode x·e} p`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave<const D: usize> {
    pub mode: Mode,
    pub direction: [f64; D],
    pub polarization: [f64; D],
}

impl<const D: usize> PlaneWave<D> {
    /// P wave traveling along `e` (longitudinal polarization).
    pub fn pressure(e: [f64; D]) -> Result<Self> {
        check_unit(e)?;
        Ok(PlaneWave {
            mode: Mode::P,
            direction: e,
            polarization: e,
        })
    }

    /// S wave traveling along `e` with the given transverse polarization.
    pub fn shear(e: [f64; D], pol: [f64; D]) -> Result<Self> {
        check_unit(e)?;
        check_unit(pol)?;
        if dot(e, pol).abs() > 1e-12 {
            return Err(Error::Config(
                "shear polarization must be orthogonal to the direction".into(),
            ));
        }
        Ok(PlaneWave {
            mode: Mode::S,
            direction: e,
            polarization: pol,
        })
    }
}

fn check_unit<const D: usize>(e: [f64; D]) -> Result<()> {
    if (norm(e) - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("vector {e:?} must be unit length")));
    }
    Ok(())
}

/// Transverse polarization(s) for direction `e`: one in 2D (the +90°
/// rotation), two in 3D (deterministic Gram–Schmidt rule).
pub fn shear_polarizations<const D: usize>(e: [f64; D]) -> Result<Vec<[f64; D]>> {
    check_unit(e)?;
    match D {
        2 => {
            let mut p = [0.0; D];
            p[0] = -e[1];
            p[1] = e[0];
            Ok(vec![p])
        }
        3 => {
            // Seed with the coordinate axis least aligned with e, then
            // orthonormalize; fully deterministic in e.
            let mut axis = 0;
            for i in 1..3 {
                if e[i].abs() < e[axis].abs() {
                    axis = i;
                }
            }
            let mut seed = [0.0; D];
            seed[axis] = 1.0;
            let proj = dot(seed, e);
            let mut p1 = [0.0; D];
            for i in 0..3 {
                p1[i] = seed[i] - proj * e[i];
            }
            let n1 = norm(p1);
            for v in &mut p1 {
                *v /= n1;
            }
            let mut p2 = [0.0; D];
            p2[0] = e[1] * p1[2] - e[2] * p1[1];
            p2[1] = e[2] * p1[0] - e[0] * p1[2];
            p2[2] = e[0] * p1[1] - e[1] * p1[0];
            Ok(vec![p1, p2])
        }
        _ => Err(Error::Domain(format!("dimension {D} must be 2 or 3"))),
    }
}

/// Plane-wave value and gradient at `x`: `U_j = e^{iκ x·e} p_j`,
/// `(∇U)_{ij} = ∂_i U_j = iκ e_i p_j e^{iκ x·e}`.
pub fn plane_wave_value<const D: usize>(
    pw: &PlaneWave<D>,
    med: &Medium,
    x: [f64; D],
) -> (CVec<D>, CMat<D>) {
    let kappa = med.kappa(pw.mode);
    let phase = (C64::new(0.0, kappa * dot(x, pw.direction))).exp();
    let u: CVec<D> = std::array::from_fn(|j| phase * pw.polarization[j]);
    let ik = C64::new(0.0, kappa);
    let grad: CMat<D> =
        std::array::from_fn(|i| std::array::from_fn(|j| ik * pw.direction[i] * u[j]));
    (u, grad)
}

/// Direction-averaged plane-wave outer products versus the imaginary-part
/// kernel they approximate.
///
/// Returns `lhs = (1/n) Σ_j e^{iκ x·e_j} Σ_pol p⊗p` and the closed-form
/// `rhs = −4μ0 (π/κ_mode)^{d−2} (κS/κ_mode)² Im Γ_mode(x)` (the mode factor
/// `(κS/κ_mode)²` is 1 for S).
pub fn planewave_sum_check<const D: usize>(
    n: usize,
    mode: Mode,
    med: &Medium,
    x: [f64; D],
) -> Result<(CMat<D>, RMat<D>)> {
    if n < 16 {
        return Err(Error::Config(format!("direction count {n} must be >= 16")));
    }
    let kappa = med.kappa(mode);
    let dirs = uniform_directions::<D>(n)?;
    let mut lhs = crate::geom::czero_mat::<D>();
    for e in dirs {
        let phase = (C64::new(0.0, kappa * dot(x, e))).exp() / n as f64;
        let pols = match mode {
            Mode::P => vec![e],
            Mode::S => shear_polarizations(e)?,
        };
        for p in pols {
            for i in 0..D {
                for j in 0..D {
                    lhs[i][j] += phase * p[i] * p[j];
                }
            }
        }
    }
    let img = im_gamma_alpha(med, mode, x)?;
    let ratio = med.kappa_s() / kappa;
    let pref = -4.0 * med.mu0 * (PI / kappa).powi(D as i32 - 2) * ratio * ratio;
    let rhs: RMat<D> = std::array::from_fn(|i| std::array::from_fn(|j| pref * img[i][j]));
    Ok((lhs, rhs))
}
