//! The elastodynamic fundamental tensor of a homogeneous isotropic medium,
//! its pressure/shear (P/S) decomposition, and gradient/Hessian kernels.
//!
//! With `G_α` the scalar outgoing Helmholtz kernel at wavenumber `κ_α` and
//! `D_x` the Hessian operator,
//!
//! ```text
//! Γ_P(x) = −(1/(μ0 κS²)) D_x G_P(x)
//! Γ_S(x) =  (1/(μ0 κS²)) (κS² I + D_x) G_S(x)
//! Γ(x)   = Γ_P(x) + Γ_S(x) = (1/μ0) I G_S − (1/(ρ0 ω²)) D_x [G_P − G_S]
//! ```
//!
//! Index conventions for the derivative kernels:
//! - gradient: `(∇Γ)[k][j][l] = ∂_k Γ_jl`,
//! - Hessian:  `(∇²Γ)[i][j][k][l] = ∂_i ∂_k Γ_jl`.
//!
//! Imaginary parts of every kernel are smooth at `x = 0` and are provided by
//! separate `im_*` evaluators valid everywhere.

use crate::error::{Error, Result};
use crate::geom::{CMat, CT3, CT4, RMat, RT3, RT4};
use crate::scalar_waves::{radial_fs, radial_fs_im, sym_t2, sym_t3, sym_t4};
use crate::C64;

/// Propagation mode of the elastic wave field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    P,
    S,
}

/// Homogeneous isotropic elastic background.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Medium {
    /// First Lamé parameter.
    pub lambda0: f64,
    /// Shear modulus.
    pub mu0: f64,
    /// Mass density.
    pub rho0: f64,
    /// Angular frequency.
    pub omega: f64,
}

impl Medium {
    pub fn new(lambda0: f64, mu0: f64, rho0: f64, omega: f64) -> Result<Self> {
        let med = Medium {
            lambda0,
            mu0,
            rho0,
            omega,
        };
        med.validate(2)?;
        Ok(med)
    }

    /// Check strong ellipticity (`d λ0 + 2 μ0 > 0`, `μ0 > 0`) plus positivity
    /// of density and frequency for dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(Error::Config(format!("mu0={} must be > 0", self.mu0)));
        }
        if !(d as f64 * self.lambda0 + 2.0 * self.mu0 > 0.0) {
            return Err(Error::Config(format!(
                "d*lambda0 + 2*mu0 must be > 0 (lambda0={}, d={d})",
                self.lambda0
            )));
        }
        if !(self.rho0 > 0.0) {
            return Err(Error::Config(format!("rho0={} must be > 0", self.rho0)));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!("omega={} must be > 0", self.omega)));
        }
        Ok(())
    }

    /// Pressure wave speed `sqrt((λ0+2μ0)/ρ0)`.
    pub fn c_p(&self) -> f64 {
        ((self.lambda0 + 2.0 * self.mu0) / self.rho0).sqrt()
    }

    /// Shear wave speed `sqrt(μ0/ρ0)`.
    pub fn c_s(&self) -> f64 {
        (self.mu0 / self.rho0).sqrt()
    }

    pub fn kappa_p(&self) -> f64 {
        self.omega / self.c_p()
    }

    pub fn kappa_s(&self) -> f64 {
        self.omega / self.c_s()
    }

    pub fn wave_speed(&self, mode: Mode) -> f64 {
        match mode {
            Mode::P => self.c_p(),
            Mode::S => self.c_s(),
        }
    }

    pub fn kappa(&self, mode: Mode) -> f64 {
        match mode {
            Mode::P => self.kappa_p(),
            Mode::S => self.kappa_s(),
        }
    }

    /// The common kernel prefactor `1/(μ0 κS²) = 1/(ρ0 ω²)`.
    fn c0(&self) -> f64 {
        1.0 / (self.rho0 * self.omega * self.omega)
    }
}

fn kron(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn check_nonzero<const D: usize>(x: [f64; D]) -> Result<f64> {
    let r = crate::geom::norm(x);
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::Domain(
            "elastic kernel is singular at x = 0; use the im_* evaluator".into(),
        ))
    }
}

/// Modal part `Γ_α(x)` of the fundamental tensor, `x ≠ 0`.
pub fn gamma_alpha<const D: usize>(med: &Medium, mode: Mode, x: [f64; D]) -> Result<CMat<D>> {
    med.validate(D)?;
    let r = check_nonzero(x)?;
    let c0 = med.c0();
    let kappa = med.kappa(mode);
    let fs = radial_fs(D, kappa, r)?;
    let t2 = sym_t2(&fs, &x);
    let ks2 = med.kappa_s() * med.kappa_s();
    Ok(std::array::from_fn(|j| {
        std::array::from_fn(|l| match mode {
            Mode::P => -t2[j][l] * c0,
            Mode::S => (t2[j][l] + fs[0] * (ks2 * kron(j, l))) * c0,
        })
    }))
}

/// Full fundamental tensor `Γ(x) = Γ_P(x) + Γ_S(x)`, evaluated directly from
/// `(1/μ0) I G_S − (1/(ρ0ω²)) D_x [G_P − G_S]`.
pub fn gamma_full<const D: usize>(med: &Medium, x: [f64; D]) -> Result<CMat<D>> {
    med.validate(D)?;
    let r = check_nonzero(x)?;
    let fs_p = radial_fs(D, med.kappa_p(), r)?;
    let fs_s = radial_fs(D, med.kappa_s(), r)?;
    let diff: [C64; 5] = std::array::from_fn(|m| fs_p[m] - fs_s[m]);
    let t2 = sym_t2(&diff, &x);
    let c0 = med.c0();
    Ok(std::array::from_fn(|j| {
        std::array::from_fn(|l| fs_s[0] * (kron(j, l) / med.mu0) - t2[j][l] * c0)
    }))
}

/// Imaginary part of `Γ_α`, valid at every `x` including the origin.
pub fn im_gamma_alpha<const D: usize>(med: &Medium, mode: Mode, x: [f64; D]) -> Result<RMat<D>> {
    med.validate(D)?;
    let r = crate::geom::norm(x);
    let c0 = med.c0();
    let fs = radial_fs_im(D, med.kappa(mode), r)?;
    let t2 = sym_t2(&fs, &x);
    let ks2 = med.kappa_s() * med.kappa_s();
    Ok(std::array::from_fn(|j| {
        std::array::from_fn(|l| match mode {
            Mode::P => -c0 * t2[j][l],
            Mode::S => c0 * (t2[j][l] + ks2 * fs[0] * kron(j, l)),
        })
    }))
}

fn grad_from_fs<S: crate::scalar_waves::Scalar + std::ops::Neg<Output = S>, const D: usize>(
    mode: Mode,
    c0: f64,
    ks2: f64,
    fs: &[S; 5],
    x: [f64; D],
) -> [[[S; D]; D]; D] {
    let t3 = sym_t3(fs, &x);
    std::array::from_fn(|k| {
        std::array::from_fn(|j| {
            std::array::from_fn(|l| match mode {
                Mode::P => -(t3[k][j][l] * c0),
                Mode::S => (t3[k][j][l] + fs[1] * (ks2 * x[k] * kron(j, l))) * c0,
            })
        })
    })
}

fn hess_from_fs<S: crate::scalar_waves::Scalar + std::ops::Neg<Output = S>, const D: usize>(
    mode: Mode,
    c0: f64,
    ks2: f64,
    fs: &[S; 5],
    x: [f64; D],
) -> [[[[S; D]; D]; D]; D] {
    let t4 = sym_t4(fs, &x);
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| match mode {
                    Mode::P => -(t4[i][j][k][l] * c0),
                    Mode::S => {
                        let extra =
                            (fs[2] * (x[i] * x[k]) + fs[1] * kron(i, k)) * (ks2 * kron(j, l));
                        (t4[i][j][k][l] + extra) * c0
                    }
                })
            })
        })
    })
}

/// Gradient kernel `(∇Γ_α)[k][j][l] = ∂_k (Γ_α)_jl`, `x ≠ 0`.
pub fn grad_gamma_alpha<const D: usize>(med: &Medium, mode: Mode, x: [f64; D]) -> Result<CT3<D>> {
    med.validate(D)?;
    let r = check_nonzero(x)?;
    let fs = radial_fs(D, med.kappa(mode), r)?;
    Ok(grad_from_fs(
        mode,
        med.c0(),
        med.kappa_s() * med.kappa_s(),
        &fs,
        x,
    ))
}

/// Imaginary part of the gradient kernel, valid everywhere.
pub fn im_grad_gamma_alpha<const D: usize>(
    med: &Medium,
    mode: Mode,
    x: [f64; D],
) -> Result<RT3<D>> {
    med.validate(D)?;
    let fs = radial_fs_im(D, med.kappa(mode), crate::geom::norm(x))?;
    Ok(grad_from_fs(
        mode,
        med.c0(),
        med.kappa_s() * med.kappa_s(),
        &fs,
        x,
    ))
}

/// Hessian kernel `(∇²Γ_α)[i][j][k][l] = ∂_i ∂_k (Γ_α)_jl`, `x ≠ 0`.
pub fn hess_gamma_alpha<const D: usize>(med: &Medium, mode: Mode, x: [f64; D]) -> Result<CT4<D>> {
    med.validate(D)?;
    let r = check_nonzero(x)?;
    let fs = radial_fs(D, med.kappa(mode), r)?;
    Ok(hess_from_fs(
        mode,
        med.c0(),
        med.kappa_s() * med.kappa_s(),
        &fs,
        x,
    ))
}

/// Imaginary part of the Hessian kernel, valid everywhere.
pub fn im_hess_gamma_alpha<const D: usize>(
    med: &Medium,
    mode: Mode,
    x: [f64; D],
) -> Result<RT4<D>> {
    med.validate(D)?;
    let fs = radial_fs_im(D, med.kappa(mode), crate::geom::norm(x))?;
    Ok(hess_from_fs(
        mode,
        med.c0(),
        med.kappa_s() * med.kappa_s(),
        &fs,
        x,
    ))
}
