//! Elastic moment tensor (EMT) algebra.
//!
//! An EMT is a rank-4 real tensor `m_ijpq` with major and both minor
//! symmetries, acting on d×d matrices by double contraction over the last
//! index pair: `(M A)_ij = Σ_pq m_ijpq A_pq`. Disk/ball inclusions produce
//! the isotropic form `m_ijpq = (a/2)(δ_ip δ_jq + δ_iq δ_jp) + b δ_ij δ_pq`,
//! which acts on a matrix as `(a/2)(A + Aᵀ) + b tr(A) I`.

use crate::error::{Error, Result};
use crate::geom::CMat;
use crate::C64;

/// Isotropic EMT coefficients (`M = a I₄ + b I₂⊗I₂`).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct IsoEmt {
    pub a: f64,
    pub b: f64,
}

impl IsoEmt {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("EMT coefficients a={a}, b={b} must be finite")));
        }
        Ok(IsoEmt { a, b })
    }
}

/// General rank-4 EMT with explicit components.
#[derive(Debug, Clone)]
pub struct Emt4<const D: usize> {
    pub m: [[[[f64; D]; D]; D]; D],
}

fn kron(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Build the explicit component tensor of an isotropic EMT.
pub fn emt_from_iso<const D: usize>(iso: IsoEmt) -> Emt4<D> {
    Emt4 {
        m: std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|p| {
                    std::array::from_fn(|q| {
                        0.5 * iso.a * (kron(i, p) * kron(j, q) + kron(i, q) * kron(j, p))
                            + iso.b * kron(i, j) * kron(p, q)
                    })
                })
            })
        }),
    }
}

impl<const D: usize> Emt4<D> {
    /// Construct from a flat row-major array of d⁴ components, verifying the
    /// major and minor symmetries.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != D * D * D * D {
            return Err(Error::Config(format!(
                "EMT component array has {} entries, expected {}",
                flat.len(),
                D * D * D * D
            )));
        }
        let at = |i: usize, j: usize, p: usize, q: usize| flat[((i * D + j) * D + p) * D + q];
        for i in 0..D {
            for j in 0..D {
                for p in 0..D {
                    for q in 0..D {
                        let v = at(i, j, p, q);
                        for (w, label) in [
                            (at(p, q, i, j), "major"),
                            (at(j, i, p, q), "first minor"),
                            (at(i, j, q, p), "second minor"),
                        ] {
                            if (v - w).abs() > 1e-12 * v.abs().max(1.0) {
                                return Err(Error::Config(format!(
                                    "EMT violates {label} symmetry at ({i},{j},{p},{q})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(Emt4 {
            m: std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    std::array::from_fn(|p| std::array::from_fn(|q| at(i, j, p, q)))
                })
            }),
        })
    }

    /// Serialize to a flat row-major array of d⁴ components.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(D * D * D * D);
        for i in 0..D {
            for j in 0..D {
                for p in 0..D {
                    for q in 0..D {
                        out.push(self.m[i][j][p][q]);
                    }
                }
            }
        }
        out
    }
}

/// Apply a general EMT to a complex matrix: `(M A)_ij = Σ_pq m_ijpq A_pq`.
pub fn emt_apply<const D: usize>(emt: &Emt4<D>, a: &CMat<D>) -> CMat<D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = C64::new(0.0, 0.0);
            for p in 0..D {
                for q in 0..D {
                    s += a[p][q] * emt.m[i][j][p][q];
                }
            }
            s
        })
    })
}

/// Apply an isotropic EMT directly: `(a/2)(A + Aᵀ) + b tr(A) I`.
pub fn iso_apply<const D: usize>(iso: IsoEmt, a: &CMat<D>) -> CMat<D> {
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..D {
        tr += a[i][i];
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (a[i][j] + a[j][i]) * (0.5 * iso.a) + tr * (iso.b * kron(i, j))
        })
    })
}

/// Real-matrix variant of [`iso_apply`].
pub fn iso_apply_real<const D: usize>(iso: IsoEmt, a: &[[f64; D]; D]) -> [[f64; D]; D] {
    let mut tr = 0.0;
    for i in 0..D {
        tr += a[i][i];
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| 0.5 * iso.a * (a[i][j] + a[j][i]) + iso.b * tr * kron(i, j))
    })
}
