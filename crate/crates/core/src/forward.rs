//! Leading-order synthesis of the filtered boundary data produced by a small
//! inclusion, plus measurement-noise injection.
//!
//! For a probe field `U` and an inclusion of size δ at `z_a`, the data sampled
//! at a boundary point `x` is
//!
//! ```text
//! data(x) = δ^d [ ∇U(z_a) : M ∇_{z_a}Γ(x−z_a)  +  ω²(ρ0−ρ1)|B| Γ(x−z_a) U(z_a) ]
//! ```
//!
//! with `M` the elastic moment tensor and `∇_{z_a}Γ(x−z_a) = −(∇Γ)(x−z_a)`.
//! The omitted remainder is one order higher in δ.

use crate::elastic_moment::emt_apply;
use crate::error::{Error, Result};
use crate::geom::{cmatvec, sub, CVec};
use crate::kupradze::{gamma_full, grad_gamma_alpha, Medium, Mode};
use crate::rng::Stream;
use crate::scene::{plane_wave_value, BoundaryGrid, Inclusion, PlaneWave};
use crate::C64;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Minimum inclusion–boundary separation, in shear wavelengths.
pub const BOUNDARY_MARGIN_WAVELENGTHS: f64 = 2.0;

/// A complex d-vector field sampled on a boundary grid.
#[derive(Debug, Clone)]
pub struct ComplexVecField<const D: usize> {
    pub values: Vec<CVec<D>>,
}

impl<const D: usize> ComplexVecField<D> {
    pub fn zeros(n: usize) -> Self {
        ComplexVecField {
            values: vec![[C64::new(0.0, 0.0); D]; n],
        }
    }
}

/// Check that the inclusion sits inside Ω, at least the margin away from ∂Ω.
fn check_separation<const D: usize>(
    med: &Medium,
    grid: &BoundaryGrid<D>,
    za: [f64; D],
) -> Result<()> {
    let margin = BOUNDARY_MARGIN_WAVELENGTHS * 2.0 * PI / med.kappa_s();
    let dist = grid.boundary_distance(za);
    if dist < margin {
        return Err(Error::Config(format!(
            "inclusion at distance {dist:.3} from the boundary; needs >= {margin:.3} (inside, {} shear wavelengths away)",
            BOUNDARY_MARGIN_WAVELENGTHS
        )));
    }
    Ok(())
}

/// Synthesize the filtered boundary data for one probe wave.
pub fn filtered_data<const D: usize>(
    med: &Medium,
    inc: &Inclusion<D>,
    probe: &PlaneWave<D>,
    grid: &BoundaryGrid<D>,
) -> Result<ComplexVecField<D>> {
    med.validate(D)?;
    check_separation(med, grid, inc.za)?;
    let (u_za, grad_u) = plane_wave_value(probe, med, inc.za);
    // (M ∇U)(z_a): constant across boundary points.
    let m_grad_u = emt_apply(&inc.emt, &grad_u);
    let density_coef = med.omega * med.omega * (med.rho0 - inc.rho1) * inc.volume_b;
    let delta_d = inc.delta.powi(D as i32);

    let mut values = Vec::with_capacity(grid.len());
    for &x in &grid.points {
        let y = sub(x, inc.za);
        let gam = gamma_full(med, y)?;
        // Density term: ω²(ρ0−ρ1)|B| Γ(x−z_a) U(z_a).
        let dens = cmatvec(&gam, u_za);
        // Elastic term: Σ_pq (M∇U)_pq ∂_{z_a,p} Γ_qk = −Σ_pq (M∇U)_pq (∇Γ)_pqk.
        let mut elast = [C64::new(0.0, 0.0); D];
        let grad_p = grad_gamma_alpha(med, Mode::P, y)?;
        let grad_s = grad_gamma_alpha(med, Mode::S, y)?;
        for k in 0..D {
            let mut s = C64::new(0.0, 0.0);
            for p in 0..D {
                for q in 0..D {
                    s += m_grad_u[p][q] * (grad_p[p][q][k] + grad_s[p][q][k]);
                }
            }
            elast[k] = -s;
        }
        values.push(std::array::from_fn(|k| {
            delta_d * (elast[k] + dens[k] * density_coef)
        }));
    }
    Ok(ComplexVecField { values })
}

/// Add circular Gaussian measurement noise in place of the clean data.
///
/// Each boundary point gets an independent complex Gaussian vector whose
/// per-component variance is `(σ²/4)/w_k`, so boundary-integral statistics of
/// the discretized noise match a white noise of strength σ²/4 regardless of N.
pub fn add_measurement_noise<const D: usize>(
    data: &ComplexVecField<D>,
    grid: &BoundaryGrid<D>,
    sigma: f64,
    rng: &mut Stream,
) -> Result<ComplexVecField<D>> {
    if sigma < 0.0 {
        return Err(Error::Config(format!("noise level sigma={sigma} must be >= 0")));
    }
    if data.values.len() != grid.len() {
        return Err(Error::Config(format!(
            "data length {} does not match grid length {}",
            data.values.len(),
            grid.len()
        )));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(data.values.len());
    for (v, &w) in data.values.iter().zip(&grid.weights) {
        // Per-component complex variance (σ²/4)/w ⇒ each real part has half.
        let sd = (sigma * sigma / (8.0 * w)).sqrt();
        values.push(std::array::from_fn(|k| {
            v[k] + C64::new(sd * unit.sample(rng), sd * unit.sample(rng))
        }));
    }
    Ok(ComplexVecField { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic_moment::IsoEmt;
    use crate::scene::{circle_boundary, shear_polarizations, uniform_directions};

    fn med() -> Medium {
        Medium::new(9.0, 1.0, 1.0, 2.0 * PI).unwrap()
    }

    fn grid(m: &Medium) -> BoundaryGrid<2> {
        let lam_s = 2.0 * PI / m.kappa_s();
        circle_boundary(10.0 * lam_s, 128).unwrap()
    }

    #[test]
    fn zero_contrast_gives_zero_data() {
        let m = med();
        let g = grid(&m);
        let inc = Inclusion::<2>::new_density([0.1, -0.2], 0.05, PI, m.rho0).unwrap();
        let pw = PlaneWave::pressure([1.0, 0.0]).unwrap();
        let data = filtered_data(&m, &inc, &pw, &g).unwrap();
        assert!(data
            .values
            .iter()
            .flatten()
            .all(|v| v.norm() == 0.0));
    }

    #[test]
    fn density_term_matches_hand_assembly() {
        let m = med();
        let g = grid(&m);
        let inc = Inclusion::<2>::new_density([0.3, 0.45], 0.05, PI, 3.0).unwrap();
        let pw = PlaneWave::pressure([0.6, 0.8]).unwrap();
        let data = filtered_data(&m, &inc, &pw, &g).unwrap();
        let (u_za, _) = plane_wave_value(&pw, &m, inc.za);
        let coef = inc.delta.powi(2)
            * m.omega
            * m.omega
            * (m.rho0 - inc.rho1)
            * inc.volume_b;
        for k in (0..g.len()).step_by(13) {
            let gam = gamma_full(&m, sub(g.points[k], inc.za)).unwrap();
            let want = cmatvec(&gam, u_za);
            for j in 0..2 {
                let w = want[j] * coef;
                assert!((data.values[k][j] - w).norm() <= 1e-12 * w.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn linearity_in_volume_and_emt() {
        let m = med();
        let g = grid(&m);
        let pw = PlaneWave::pressure([1.0, 0.0]).unwrap();
        let mk = |vol: f64, a: f64| {
            let inc =
                Inclusion::<2>::new_iso([0.2, 0.1], 0.05, vol, 2.0, IsoEmt { a, b: 0.0 })
                    .unwrap();
            filtered_data(&m, &inc, &pw, &g).unwrap()
        };
        // Doubling |B| doubles the density-only part.
        let d1 = {
            let inc = Inclusion::<2>::new_density([0.2, 0.1], 0.05, PI, 2.0).unwrap();
            filtered_data(&m, &inc, &pw, &g).unwrap()
        };
        let d2 = {
            let inc = Inclusion::<2>::new_density([0.2, 0.1], 0.05, 2.0 * PI, 2.0).unwrap();
            filtered_data(&m, &inc, &pw, &g).unwrap()
        };
        for (a, b) in d1.values.iter().zip(&d2.values) {
            for j in 0..2 {
                assert!((b[j] - a[j] * 2.0).norm() <= 1e-12 * a[j].norm().max(1e-12));
            }
        }
        // Doubling the EMT coefficient doubles the elastic increment.
        let base = mk(PI, 0.0);
        let e1 = mk(PI, 1.0);
        let e2 = mk(PI, 2.0);
        for i in 0..g.len() {
            for j in 0..2 {
                let inc1 = e1.values[i][j] - base.values[i][j];
                let inc2 = e2.values[i][j] - base.values[i][j];
                assert!((inc2 - inc1 * 2.0).norm() <= 1e-12 * inc1.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn direction_flip_transforms_by_phase() {
        let m = med();
        let g = grid(&m);
        let e = [0.6, 0.8];
        let za = [0.27, -0.33];
        let (u, _) = plane_wave_value(&PlaneWave::pressure(e).unwrap(), &m, za);
        let ph2 = (u[0] / e[0]).powi(2); // e^{2iκP za·e}

        // Pure density contrast: data(−e) · ph² = −data(e).
        let inc = Inclusion::<2>::new_density(za, 0.05, PI, 2.0).unwrap();
        let fwd = filtered_data(&m, &inc, &PlaneWave::pressure(e).unwrap(), &g).unwrap();
        let rev =
            filtered_data(&m, &inc, &PlaneWave::pressure([-e[0], -e[1]]).unwrap(), &g).unwrap();
        for (a, b) in fwd.values.iter().zip(&rev.values) {
            for j in 0..2 {
                assert!((b[j] * ph2 + a[j]).norm() <= 1e-10 * a[j].norm().max(1e-12));
            }
        }
        // Pure elastic contrast: data(−e) · ph² = +data(e).
        let inc =
            Inclusion::<2>::new_iso(za, 0.05, PI, m.rho0, IsoEmt { a: 1.0, b: 0.7 }).unwrap();
        let fwd = filtered_data(&m, &inc, &PlaneWave::pressure(e).unwrap(), &g).unwrap();
        let rev =
            filtered_data(&m, &inc, &PlaneWave::pressure([-e[0], -e[1]]).unwrap(), &g).unwrap();
        for (a, b) in fwd.values.iter().zip(&rev.values) {
            for j in 0..2 {
                assert!((b[j] * ph2 - a[j]).norm() <= 1e-10 * a[j].norm().max(1e-12));
            }
        }
    }

    #[test]
    fn inclusion_too_close_to_boundary_rejected() {
        let m = med();
        let g = grid(&m);
        let near = [g.radius - 0.5, 0.0];
        let inc = Inclusion::<2>::new_density(near, 0.05, PI, 2.0).unwrap();
        let pw = PlaneWave::pressure([1.0, 0.0]).unwrap();
        assert!(filtered_data(&m, &inc, &pw, &g).is_err());
        let outside = [g.radius + 1.0, 0.0];
        let inc = Inclusion::<2>::new_density(outside, 0.05, PI, 2.0).unwrap();
        assert!(filtered_data(&m, &inc, &pw, &g).is_err());
    }

    #[test]
    fn noise_statistics() {
        let m = med();
        let g = circle_boundary(10.0 * 2.0 * PI / m.kappa_s(), 16).unwrap();
        let clean = ComplexVecField::<2>::zeros(g.len());
        let sigma = 0.7;

        // σ = 0 is the identity.
        let mut rng = crate::rng::stream(1, "noise", 0);
        let same = add_measurement_noise(&clean, &g, 0.0, &mut rng).unwrap();
        assert!(same.values.iter().flatten().all(|v| v.norm() == 0.0));

        // Per-point per-component complex variance ≈ (σ²/4)/w_k.
        let trials = 20_000usize;
        let mut mean = C64::new(0.0, 0.0);
        let mut var = vec![0.0f64; g.len()];
        let mut cross = C64::new(0.0, 0.0); // E[ν_A conj(ν_B)] across probe streams
        for t in 0..trials {
            let mut ra = crate::rng::stream(42, "noise-probe", 2 * t as u64);
            let mut rb = crate::rng::stream(42, "noise-probe", 2 * t as u64 + 1);
            let na = add_measurement_noise(&clean, &g, sigma, &mut ra).unwrap();
            let nb = add_measurement_noise(&clean, &g, sigma, &mut rb).unwrap();
            for k in 0..g.len() {
                var[k] += na.values[k][0].norm_sqr() / trials as f64;
                mean += na.values[k][0] / (trials * g.len()) as f64;
            }
            cross += na.values[0][0] * nb.values[0][0].conj() / trials as f64;
        }
        for k in 0..g.len() {
            let want = sigma * sigma / (4.0 * g.weights[k]);
            assert!(
                (var[k] - want).abs() <= 0.05 * want,
                "point {k}: {} vs {want}",
                var[k]
            );
        }
        let scale = sigma * sigma / (4.0 * g.weights[0]);
        assert!(mean.norm() <= 3.0 * scale.sqrt() / ((trials * g.len()) as f64).sqrt() * 3.0);
        assert!(cross.norm() <= 0.05 * scale);
    }

    #[test]
    fn shear_probe_data_finite() {
        let m = med();
        let g = grid(&m);
        let e = uniform_directions::<2>(8).unwrap()[3];
        let pol = shear_polarizations::<2>(e).unwrap()[0];
        let pw = PlaneWave::shear(e, pol).unwrap();
        let inc =
            Inclusion::<2>::new_iso([0.0, 0.0], 0.05, PI, 2.0, IsoEmt { a: 1.0, b: 1.0 })
                .unwrap();
        let data = filtered_data(&m, &inc, &pw, &g).unwrap();
        assert!(data.values.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite()));
        assert!(data.values.iter().flatten().any(|v| v.norm() > 0.0));
    }
}
