//! Small fixed-dimension vector/matrix helpers over plain arrays.
//!
//! Points are `[f64; D]`, complex vectors `[C64; D]`, matrices `[[C64; D]; D]`
//! indexed `[row][col]`. Rank-3/4 tensors are nested arrays; index conventions
//! are documented where the tensors are produced.

use crate::C64;

pub type CVec<const D: usize> = [C64; D];
pub type CMat<const D: usize> = [[C64; D]; D];
pub type RMat<const D: usize> = [[f64; D]; D];
pub type CT3<const D: usize> = [[[C64; D]; D]; D];
pub type CT4<const D: usize> = [[[[C64; D]; D]; D]; D];
pub type RT3<const D: usize> = [[[f64; D]; D]; D];
pub type RT4<const D: usize> = [[[[f64; D]; D]; D]; D];

pub fn sub<const D: usize>(a: [f64; D], b: [f64; D]) -> [f64; D] {
    std::array::from_fn(|i| a[i] - b[i])
}

pub fn add<const D: usize>(a: [f64; D], b: [f64; D]) -> [f64; D] {
    std::array::from_fn(|i| a[i] + b[i])
}

pub fn scale<const D: usize>(a: [f64; D], s: f64) -> [f64; D] {
    std::array::from_fn(|i| a[i] * s)
}

pub fn dot<const D: usize>(a: [f64; D], b: [f64; D]) -> f64 {
    (0..D).map(|i| a[i] * b[i]).sum()
}

pub fn norm<const D: usize>(a: [f64; D]) -> f64 {
    dot(a, a).sqrt()
}

pub fn czero_vec<const D: usize>() -> CVec<D> {
    [C64::new(0.0, 0.0); D]
}

pub fn czero_mat<const D: usize>() -> CMat<D> {
    [[C64::new(0.0, 0.0); D]; D]
}

/// Complex dot product without conjugation: Σ a_i b_i.
pub fn cdot<const D: usize>(a: CVec<D>, b: CVec<D>) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

/// Matrix–vector product.
pub fn cmatvec<const D: usize>(m: &CMat<D>, v: CVec<D>) -> CVec<D> {
    std::array::from_fn(|i| {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..D {
            s += m[i][j] * v[j];
        }
        s
    })
}

/// Frobenius inner product of real matrices: Σ a_ij b_ij.
pub fn frob<const D: usize>(a: &RMat<D>, b: &RMat<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        for j in 0..D {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Entrywise sup norm of a complex matrix.
pub fn cmat_max<const D: usize>(m: &CMat<D>) -> f64 {
    let mut s: f64 = 0.0;
    for row in m {
        for v in row {
            s = s.max(v.norm());
        }
    }
    s
}

/// Entrywise sup norm of a real matrix.
pub fn rmat_max<const D: usize>(m: &RMat<D>) -> f64 {
    let mut s: f64 = 0.0;
    for row in m {
        for v in row {
            s = s.max(v.abs());
        }
    }
    s
}
