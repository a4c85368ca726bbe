//! Imaging functionals — classical topological-derivative images, the
//! wave-speed-weighted mode-separated variant, multi-probe averages — and
//! their closed-form peak predictions.
//!
//! Sign and weight conventions: both functionals are normalized so that the
//! image peaks *positive* at the inclusion when the trial and true density
//! contrasts agree in sign,
//!
//! ```text
//! I_TD(z) = Re{ ∇U(z) : M′ ∇w(z) + ω²(ρ0−ρ1′)|B′| U(z)·w(z) },
//! I_W(z)  = c_α Re{ ∇U(z) : M′ ∇w^α(z) + ω²(ρ0−ρ1′)|B′| U(z)·w^α(z) }
//! ```
//!
//! for a pure mode-α plane-wave probe (the mode projection of a plane wave is
//! itself for its own mode and zero for the other, so only one branch of I_W
//! survives). The density weight is `(ρ0−ρ1′)` in both functionals; this is
//! the convention under which the multi-probe averages reproduce the
//! closed-form predictions below, which the tests verify end to end.

use crate::backprop::{BackField, ModalBackFields, SearchGrid};
use crate::elastic_moment::{emt_apply, Emt4};
use crate::error::{Error, Result};
use crate::geom::{sub, RMat, RT4};
use crate::kupradze::{im_gamma_alpha, im_hess_gamma_alpha, Medium, Mode};
use crate::scalar_waves::green_derivs_im;
use crate::scene::{plane_wave_value, Inclusion, PlaneWave, TrialInclusion};
use crate::C64;
use std::f64::consts::PI;

/// Real-valued image on a search grid.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub values: Vec<f64>,
    /// Probe mode the image was formed with, when single-mode.
    pub mode: Option<Mode>,
    /// Number of probes averaged.
    pub n_probes: usize,
}

impl ImageGrid {
    pub fn zeros(n: usize) -> Self {
        ImageGrid {
            values: vec![0.0; n],
            mode: None,
            n_probes: 0,
        }
    }

    /// Index of the maximal value.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

fn other(mode: Mode) -> Mode {
    match mode {
        Mode::P => Mode::S,
        Mode::S => Mode::P,
    }
}

fn check_len<const D: usize>(targets: &SearchGrid<D>, field: &BackField<D>) -> Result<()> {
    if field.w.len() != targets.len() {
        return Err(Error::Config(format!(
            "backpropagated field has {} points, search grid has {}",
            field.w.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// The pointwise functional core shared by `itd` and `iw`.
fn functional_value<const D: usize>(
    med: &Medium,
    trial: &TrialInclusion<D>,
    probe: &PlaneWave<D>,
    z: [f64; D],
    w: &[C64; D],
    gradw: &[[C64; D]; D],
) -> f64 {
    let (u, grad_u) = plane_wave_value(probe, med, z);
    let m_grad_u = emt_apply(&trial.emtp, &grad_u);
    let mut s = C64::new(0.0, 0.0);
    for p in 0..D {
        for q in 0..D {
            s += m_grad_u[p][q] * gradw[p][q];
        }
    }
    let dens_coef = med.omega * med.omega * (med.rho0 - trial.rho1p) * trial.volume_bp;
    for q in 0..D {
        s += u[q] * w[q] * dens_coef;
    }
    s.re
}

/// Classical topological-derivative image from the full-kernel backfield.
pub fn itd<const D: usize>(
    med: &Medium,
    trial: &TrialInclusion<D>,
    probe: &PlaneWave<D>,
    wfield: &BackField<D>,
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    check_len(targets, wfield)?;
    let values = targets
        .points
        .iter()
        .enumerate()
        .map(|(t, &z)| functional_value(med, trial, probe, z, &wfield.w[t], &wfield.gradw[t]))
        .collect();
    Ok(ImageGrid {
        values,
        mode: Some(probe.mode),
        n_probes: 1,
    })
}

/// Weighted (mode-separated) image for a single pure-mode plane-wave probe.
///
/// Only the probe's own modal branch contributes: the mode projection of a
/// plane wave is the wave itself for its own mode and zero for the other.
pub fn iw<const D: usize>(
    med: &Medium,
    trial: &TrialInclusion<D>,
    probe: &PlaneWave<D>,
    modal: &ModalBackFields<D>,
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    let field = match probe.mode {
        Mode::P => &modal.p,
        Mode::S => &modal.s,
    };
    check_len(targets, field)?;
    let c = med.wave_speed(probe.mode);
    let values = targets
        .points
        .iter()
        .enumerate()
        .map(|(t, &z)| c * functional_value(med, trial, probe, z, &field.w[t], &field.gradw[t]))
        .collect();
    Ok(ImageGrid {
        values,
        mode: Some(probe.mode),
        n_probes: 1,
    })
}

fn averaged<const D: usize, F>(
    probes: &[PlaneWave<D>],
    fields_len: usize,
    targets: &SearchGrid<D>,
    mut one: F,
) -> Result<ImageGrid>
where
    F: FnMut(usize) -> Result<ImageGrid>,
{
    if probes.is_empty() {
        return Err(Error::Config("probe list is empty".into()));
    }
    if probes.len() != fields_len {
        return Err(Error::Config(format!(
            "{} probes but {} backpropagated fields",
            probes.len(),
            fields_len
        )));
    }
    let mut out = ImageGrid::zeros(targets.len());
    let mut mode = Some(probes[0].mode);
    for j in 0..probes.len() {
        let img = one(j)?;
        for (o, v) in out.values.iter_mut().zip(&img.values) {
            *o += v / probes.len() as f64;
        }
        if probes[j].mode != probes[0].mode {
            mode = None;
        }
    }
    out.mode = mode;
    out.n_probes = probes.len();
    Ok(out)
}

/// Multi-probe average of the weighted functional.
pub fn iwf<const D: usize>(
    med: &Medium,
    trial: &TrialInclusion<D>,
    probes: &[PlaneWave<D>],
    modal_fields: &[ModalBackFields<D>],
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    averaged(probes, modal_fields.len(), targets, |j| {
        iw(med, trial, &probes[j], &modal_fields[j], targets)
    })
}

/// Multi-probe average of the classical functional.
pub fn itd_avg<const D: usize>(
    med: &Medium,
    trial: &TrialInclusion<D>,
    probes: &[PlaneWave<D>],
    modal_fields: &[ModalBackFields<D>],
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    let fulls: Vec<BackField<D>> = modal_fields.iter().map(|m| m.full()).collect();
    averaged(probes, fulls.len(), targets, |j| {
        itd(med, trial, &probes[j], &fulls[j], targets)
    })
}

fn frob_sq<const D: usize>(a: &RMat<D>) -> f64 {
    let mut s = 0.0;
    for row in a {
        for v in row {
            s += v * v;
        }
    }
    s
}

/// Closed-form peak profile of the weighted multi-probe image in the density
/// case: `4 μ0 C ω³ (π/κ_α)^{d−2} (κS/κ_α)² |Im Γ_α(z−z_a)|²`.
pub fn predicted_peak<const D: usize>(
    med: &Medium,
    mode: Mode,
    c_const: f64,
    za: [f64; D],
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    let kappa = med.kappa(mode);
    let ratio = med.kappa_s() / kappa;
    let pref = 4.0
        * med.mu0
        * c_const
        * med.omega.powi(3)
        * (PI / kappa).powi(D as i32 - 2)
        * ratio
        * ratio;
    let values = targets
        .points
        .iter()
        .map(|&z| {
            let img = im_gamma_alpha(med, mode, sub(z, za))?;
            Ok(pref * frob_sq(&img))
        })
        .collect::<Result<_>>()?;
    Ok(ImageGrid {
        values,
        mode: Some(mode),
        n_probes: 0,
    })
}

/// The peak constant `C = δ^d (ρ0−ρ1′)(ρ0−ρ1)|B′||B|` of the density case.
pub fn peak_constant<const D: usize>(
    med: &Medium,
    inc: &Inclusion<D>,
    trial: &TrialInclusion<D>,
) -> f64 {
    inc.delta.powi(D as i32)
        * (med.rho0 - trial.rho1p)
        * (med.rho0 - inc.rho1)
        * trial.volume_bp
        * inc.volume_b
}

/// Contrast classification used by the closed-form predictions.
enum ContrastKind {
    Density,
    Elasticity,
}

fn classify<const D: usize>(
    med: &Medium,
    inc: &Inclusion<D>,
    trial: &TrialInclusion<D>,
) -> Result<ContrastKind> {
    let emt_zero = |e: &Emt4<D>| e.to_flat().iter().all(|v| *v == 0.0);
    let density = med.rho0 != inc.rho1;
    let elastic = !emt_zero(&inc.emt) || !emt_zero(&trial.emtp);
    match (density, elastic) {
        (true, false) => Ok(ContrastKind::Density),
        (false, true) => Ok(ContrastKind::Elasticity),
        _ => Err(Error::Config(
            "closed-form prediction needs a pure density or pure elasticity contrast".into(),
        )),
    }
}

/// Closed-form prediction of the multi-probe *classical* image
/// `(1/n) Σ_j I_TD[U_j^mode]`, including the mode-coupling term.
pub fn predicted_td_sum<const D: usize>(
    med: &Medium,
    mode: Mode,
    inc: &Inclusion<D>,
    trial: &TrialInclusion<D>,
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    let kind = classify(med, inc, trial)?;
    let kappa = med.kappa(mode);
    let ratio = med.kappa_s() / kappa;
    let geom = (PI / kappa).powi(D as i32 - 2) * ratio * ratio;
    let beta = other(mode);
    let (ca, cb) = (med.wave_speed(mode), med.wave_speed(beta));
    let values = targets
        .points
        .iter()
        .map(|&z| {
            let y = sub(z, inc.za);
            match kind {
                ContrastKind::Density => {
                    let pref =
                        4.0 * med.mu0 * peak_constant(med, inc, trial) * med.omega.powi(3) * geom;
                    let ga = im_gamma_alpha(med, mode, y)?;
                    let gb = im_gamma_alpha(med, beta, y)?;
                    let mut same = 0.0;
                    let mut cross = 0.0;
                    for i in 0..D {
                        for j in 0..D {
                            same += ga[i][j] * ga[i][j];
                            cross += ga[i][j] * gb[i][j];
                        }
                    }
                    Ok(pref * (same / ca + cross / cb))
                }
                ContrastKind::Elasticity => {
                    let pref = 4.0 * inc.delta.powi(D as i32) * (med.mu0 / med.omega) * geom;
                    let j_same = j_tensor_mixed(med, &trial.emtp, &inc.emt, mode, mode, y)?;
                    let j_cross = j_tensor_mixed(med, &trial.emtp, &inc.emt, beta, mode, y)?;
                    Ok(pref * (j_same / ca + j_cross / cb))
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(ImageGrid {
        values,
        mode: Some(mode),
        n_probes: 0,
    })
}

/// Closed-form prediction of the multi-probe *weighted* image
/// `(1/n) Σ_j I_W[U_j^mode]` (coupling-free).
pub fn predicted_wtd_sum<const D: usize>(
    med: &Medium,
    mode: Mode,
    inc: &Inclusion<D>,
    trial: &TrialInclusion<D>,
    targets: &SearchGrid<D>,
) -> Result<ImageGrid> {
    let kind = classify(med, inc, trial)?;
    match kind {
        ContrastKind::Density => {
            predicted_peak(med, mode, peak_constant(med, inc, trial), inc.za, targets)
        }
        ContrastKind::Elasticity => {
            let kappa = med.kappa(mode);
            let ratio = med.kappa_s() / kappa;
            let pref = 4.0
                * inc.delta.powi(D as i32)
                * (med.mu0 / med.omega)
                * (PI / kappa).powi(D as i32 - 2)
                * ratio
                * ratio;
            let values = targets
                .points
                .iter()
                .map(|&z| {
                    let y = sub(z, inc.za);
                    Ok(pref * j_tensor_mixed(med, &trial.emtp, &inc.emt, mode, mode, y)?)
                })
                .collect::<Result<_>>()?;
            Ok(ImageGrid {
                values,
                mode: Some(mode),
                n_probes: 0,
            })
        }
    }
}

/// Apply an EMT over the first index pair of a rank-4 tensor:
/// `(M H)_{ijkl} = Σ_pq m_ijpq H_{pqkl}`.
fn emt_apply_first<const D: usize>(emt: &Emt4<D>, h: &RT4<D>) -> RT4<D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| {
                    let mut s = 0.0;
                    for p in 0..D {
                        for q in 0..D {
                            s += emt.m[i][j][p][q] * h[p][q][k][l];
                        }
                    }
                    s
                })
            })
        })
    })
}

/// The coupling tensor contraction
/// `J_{αβ}(x) = Σ_ijkl (M₁ Im∇²Γ_α)_{ijkl} (M₂ Im∇²Γ_β)_{klij}`.
pub fn j_tensor_mixed<const D: usize>(
    med: &Medium,
    emt1: &Emt4<D>,
    emt2: &Emt4<D>,
    alpha: Mode,
    beta: Mode,
    x: [f64; D],
) -> Result<f64> {
    let ha = im_hess_gamma_alpha(med, alpha, x)?;
    let hb = im_hess_gamma_alpha(med, beta, x)?;
    // Reorder so the EMT contracts the (∂-index, row-index) pair of each
    // Hessian: A_{ijkl} = ∂_i∂_k Γ_jl viewed as H[(i,j)][(k,l)].
    let a = emt_apply_first(emt1, &ha);
    let b = emt_apply_first(emt2, &hb);
    let mut s = 0.0;
    for i in 0..D {
        for j in 0..D {
            for k in 0..D {
                for l in 0..D {
                    s += a[i][j][k][l] * b[k][l][i][j];
                }
            }
        }
    }
    Ok(s)
}

/// `J_{αβ}` with the same EMT on both factors.
pub fn j_tensor<const D: usize>(
    med: &Medium,
    emt: &Emt4<D>,
    alpha: Mode,
    beta: Mode,
    x: [f64; D],
) -> Result<f64> {
    j_tensor_mixed(med, emt, emt, alpha, beta, x)
}

/// Closed form of `J_{PP}` for an isotropic EMT:
/// `a²|∇²ImΓ_P|² + 2ab|Δ ImΓ_P|² + b²(Δ Tr ImΓ_P)²`.
pub fn j_pp_closed<const D: usize>(med: &Medium, a: f64, b: f64, x: [f64; D]) -> Result<f64> {
    let h = im_hess_gamma_alpha(med, Mode::P, x)?;
    let mut full = 0.0;
    for i in 0..D {
        for j in 0..D {
            for k in 0..D {
                for l in 0..D {
                    full += h[i][j][k][l] * h[i][j][k][l];
                }
            }
        }
    }
    // (Δ ImΓ_P)_jl = Σ_i ∂_i∂_i (ImΓ_P)_jl.
    let mut lap = [[0.0; D]; D];
    for j in 0..D {
        for l in 0..D {
            for i in 0..D {
                lap[j][l] += h[i][j][i][l];
            }
        }
    }
    let mut lap_sq = 0.0;
    let mut lap_tr = 0.0;
    for j in 0..D {
        lap_tr += lap[j][j];
        for l in 0..D {
            lap_sq += lap[j][l] * lap[j][l];
        }
    }
    Ok(a * a * full + 2.0 * a * b * lap_sq + b * b * lap_tr * lap_tr)
}

/// Closed form of `J_{SS}` for an isotropic EMT (independent of `b` because
/// the S kernel is divergence free):
///
/// ```text
/// (a²/μ0²) [ (1/κS⁴)|∇⁴ Im G_S|² + ((d−6)/4)|∇² Im G_S|² + (κS⁴/4)|Im G_S|² ]
/// ```
pub fn j_ss_closed<const D: usize>(med: &Medium, a: f64, x: [f64; D]) -> Result<f64> {
    let ks = med.kappa_s();
    let t = green_derivs_im::<D>(ks, x)?;
    let mut g4 = 0.0;
    for i in 0..D {
        for j in 0..D {
            for k in 0..D {
                for l in 0..D {
                    g4 += t.t4[i][j][k][l] * t.t4[i][j][k][l];
                }
            }
        }
    }
    let mut g2 = 0.0;
    for i in 0..D {
        for j in 0..D {
            g2 += t.t2[i][j] * t.t2[i][j];
        }
    }
    let k4 = ks.powi(4);
    Ok(a * a / (med.mu0 * med.mu0)
        * (g4 / k4 + (D as f64 - 6.0) / 4.0 * g2 + k4 / 4.0 * t.t0 * t.t0))
}

/// Alternative grouping of [`j_ss_closed`] that isolates the contracted
/// fourth-derivative sum `Σ_ij (Σ_k ∂_i∂_j∂_k∂_k Im G_S)²`; equal to the
/// primary form because `Δ Im G_S = −κS² Im G_S`.
pub fn j_ss_closed_alt<const D: usize>(med: &Medium, a: f64, x: [f64; D]) -> Result<f64> {
    let ks = med.kappa_s();
    let t = green_derivs_im::<D>(ks, x)?;
    let mut g4 = 0.0;
    let mut g4_contracted = 0.0;
    for i in 0..D {
        for j in 0..D {
            let mut c = 0.0;
            for k in 0..D {
                c += t.t4[i][j][k][k];
                for l in 0..D {
                    g4 += t.t4[i][j][k][l] * t.t4[i][j][k][l];
                }
            }
            g4_contracted += c * c;
        }
    }
    let mut g2 = 0.0;
    for i in 0..D {
        for j in 0..D {
            g2 += t.t2[i][j] * t.t2[i][j];
        }
    }
    let k4 = ks.powi(4);
    Ok(a * a / (med.mu0 * med.mu0)
        * ((g4 - g4_contracted) / k4 + (D as f64 - 2.0) / 4.0 * g2 + k4 / 4.0 * t.t0 * t.t0))
}

/// Frobenius overlap `Im Γ_P(x) : Im Γ_S(x)` — the mode-coupling strength
/// that limits the classical image's resolution.
pub fn coupling_strength<const D: usize>(med: &Medium, x: [f64; D]) -> Result<f64> {
    let gp = im_gamma_alpha(med, Mode::P, x)?;
    let gs = im_gamma_alpha(med, Mode::S, x)?;
    let mut s = 0.0;
    for i in 0..D {
        for j in 0..D {
            s += gp[i][j] * gs[i][j];
        }
    }
    Ok(s)
}
