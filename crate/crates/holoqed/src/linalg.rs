//! Dense complex linear algebra shared across the crate: matrix exponentials,
//! Hermitian eigendecompositions, Gram-Schmidt completion, Haar-random
//! unitaries, and a Lanczos ground-state solver.
//!
//! Everything here operates on `ndarray` arrays of `Complex64`; dimensions in
//! this crate are small (≤ a few thousand), so dense methods are used
//! throughout.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::Result;

/// Convenience re-export of the complex scalar used everywhere.
pub type Complex = C64;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Conjugate transpose.
pub fn dag(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Elementwise conjugate.
pub fn conj(m: &Array2<C64>) -> Array2<C64> {
    m.mapv(|z| z.conj())
}

/// Kronecker product, row-major convention: `out[(i*p + k, j*q + l)] = a[(i, j)] * b[(k, l)]`
/// for `b` of shape `(p, q)`.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    ndarray::linalg::kron(a, b)
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

pub fn trace(m: &Array2<C64>) -> C64 {
    m.diag().sum()
}

/// Largest entry magnitude (max norm).
pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// ‖U†U − I‖_max.
pub fn unitarity_residual(u: &Array2<C64>) -> f64 {
    let d = u.nrows();
    max_abs_diff(&dag(u).dot(u), &identity(d))
}

/// ‖M − M†‖_max.
pub fn hermiticity_residual(m: &Array2<C64>) -> f64 {
    max_abs_diff(m, &dag(m))
}

/// Row-major flattening of a matrix into a vector (used for superoperators).
pub fn vec_row(m: &Array2<C64>) -> Array1<C64> {
    Array1::from_iter(m.iter().cloned())
}

/// Inverse of [`vec_row`].
pub fn unvec_row(v: &Array1<C64>, d: usize) -> Array2<C64> {
    Array2::from_shape_vec((d, d), v.to_vec()).expect("unvec dimension")
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matrix of eigenvectors (columns).
///
/// Guards against the LAPACK row-/column-major mismatch for complex input
/// (which silently yields the eigenvectors of Hᵀ): whichever of V and conj(V)
/// actually diagonalizes H is returned.
pub fn herm_eig(h: &Array2<C64>) -> (Array1<f64>, Array2<C64>) {
    let (vals, vecs) = h.eigh(UPLO::Lower).expect("hermitian eigendecomposition");
    let resid = |v: &Array2<C64>| -> f64 {
        let hv = h.dot(v);
        let mut worst = 0.0f64;
        for (k, lam) in vals.iter().enumerate() {
            for (a, b) in hv.column(k).iter().zip(v.column(k).iter()) {
                worst = worst.max((a - b * *lam).norm());
            }
        }
        worst
    };
    let vecs_conj = conj(&vecs);
    if resid(&vecs_conj) < resid(&vecs) {
        (vals, vecs_conj)
    } else {
        (vals, vecs)
    }
}

/// exp(-i t H) for Hermitian H, via spectral decomposition.
pub fn expm_hermitian(h: &Array2<C64>, t: f64) -> Array2<C64> {
    let (vals, vecs) = herm_eig(h);
    let phases = vals.mapv(|e| (-I * (e * t)).exp());
    let mut scaled = vecs.clone();
    for (mut col, ph) in scaled.columns_mut().into_iter().zip(phases.iter()) {
        col.mapv_inplace(|z| z * ph);
    }
    scaled.dot(&dag(&vecs))
}

/// 1-norm (max column absolute sum).
fn one_norm(m: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for col in m.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

// Pade coefficients for degrees 3, 5, 7, 9, 13 with the matching 1-norm
// thresholds of the scaling-and-squaring method.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

fn pade_from_powers(a: &Array2<C64>, powers_even: &[&Array2<C64>], b: &[f64]) -> Array2<C64> {
    // U = A * sum_k b[2k+1] A^{2k},  V = sum_k b[2k] A^{2k}
    let d = a.nrows();
    let mut u_inner = Array2::<C64>::zeros((d, d));
    let mut v = Array2::<C64>::zeros((d, d));
    for (k, p) in powers_even.iter().enumerate() {
        u_inner = u_inner + p.mapv(|z| z * b[2 * k + 1]);
        v = v + p.mapv(|z| z * b[2 * k]);
    }
    let u = a.dot(&u_inner);
    let denom = &v - &u;
    let numer = &v + &u;
    denom.inv().expect("Pade denominator inversion").dot(&numer)
}

/// Matrix exponential by Pade approximation with scaling and squaring
/// (accuracy near machine precision for norms handled by the degree table).
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "expm requires a square matrix");
    let norm = one_norm(a);
    let id = identity(d);

    if norm <= THETA9 {
        let a2 = a.dot(a);
        if norm <= THETA3 {
            return pade_from_powers(a, &[&id, &a2], &PADE3);
        }
        let a4 = a2.dot(&a2);
        if norm <= THETA5 {
            return pade_from_powers(a, &[&id, &a2, &a4], &PADE5);
        }
        let a6 = a4.dot(&a2);
        if norm <= THETA7 {
            return pade_from_powers(a, &[&id, &a2, &a4, &a6], &PADE7);
        }
        let a8 = a6.dot(&a2);
        return pade_from_powers(a, &[&id, &a2, &a4, &a6, &a8], &PADE9);
    }

    // Degree 13 with scaling.
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as u32;
    let scaled = a.mapv(|z| z / 2f64.powi(s as i32));
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    // Degree-13 splitting: U = A[A6(b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I]
    //                      V = A6(b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let b = &PADE13;
    let w1 = a6.mapv(|z| z * b[13]) + a4.mapv(|z| z * b[11]) + a2.mapv(|z| z * b[9]);
    let w2 = a6.mapv(|z| z * b[7])
        + a4.mapv(|z| z * b[5])
        + a2.mapv(|z| z * b[3])
        + id.mapv(|z| z * b[1]);
    let u = scaled.dot(&(a6.dot(&w1) + w2));
    let z1 = a6.mapv(|z| z * b[12]) + a4.mapv(|z| z * b[10]) + a2.mapv(|z| z * b[8]);
    let v = a6.dot(&z1)
        + a6.mapv(|z| z * b[6])
        + a4.mapv(|z| z * b[4])
        + a2.mapv(|z| z * b[2])
        + id.mapv(|z| z * b[0]);

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom.inv().expect("Pade denominator inversion").dot(&numer);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Haar-random unitary: Ginibre ensemble followed by modified Gram-Schmidt
/// (which fixes the R-diagonal phases to be positive).
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> Array2<C64> {
    let mut g = Array2::<C64>::zeros((n, n));
    for z in g.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(re, im);
    }
    for j in 0..n {
        for k in 0..j {
            let prev = g.column(k).to_owned();
            let overlap: C64 = prev.iter().zip(g.column(j).iter()).map(|(p, c)| p.conj() * c).sum();
            let mut col = g.column_mut(j);
            for (c, p) in col.iter_mut().zip(prev.iter()) {
                *c -= overlap * p;
            }
        }
        let norm: f64 = g.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        g.column_mut(j).mapv_inplace(|z| z / norm);
    }
    g
}

/// Complete a set of orthonormal columns to a full unitary by Gram-Schmidt
/// against canonical basis vectors in ascending index order.
///
/// The input columns are copied verbatim into the leading columns of the
/// output, so the completion's orthogonality is limited by the orthonormality
/// of the input.
pub fn gram_schmidt_complete(cols: &Array2<C64>, independence_tol: f64) -> Result<Array2<C64>> {
    let (n, k) = cols.dim();
    assert!(k <= n, "cannot complete more columns than the dimension");
    let mut out = Array2::<C64>::zeros((n, n));
    for j in 0..k {
        out.column_mut(j).assign(&cols.column(j));
        // Verify independence of the supplied columns as we go.
        let mut v = cols.column(j).to_owned();
        for p in 0..j {
            let overlap: C64 = out.column(p).iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            for (x, a) in v.iter_mut().zip(out.column(p).iter()) {
                *x -= overlap * a;
            }
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < independence_tol {
            return Err(Error::RankDeficiency { column: j, norm });
        }
    }

    let mut filled = k;
    for cand in 0..n {
        if filled == n {
            break;
        }
        let mut v = Array1::<C64>::zeros(n);
        v[cand] = ONE;
        // Two projection passes for numerical orthogonality.
        for _ in 0..2 {
            for p in 0..filled {
                let overlap: C64 =
                    out.column(p).iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (x, a) in v.iter_mut().zip(out.column(p).iter()) {
                    *x -= overlap * a;
                }
            }
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > independence_tol {
            v.mapv_inplace(|z| z / norm);
            out.column_mut(filled).assign(&v);
            filled += 1;
        }
    }
    assert_eq!(filled, n, "canonical basis must complete the span");
    Ok(out)
}

/// Lanczos iteration for the lowest eigenpair of a Hermitian operator given
/// through its action `matvec(input, output)`.
///
/// Uses full reorthogonalization and restarts from the current Ritz vector
/// when the Krylov basis reaches `basis_cap`.
pub fn lanczos_ground<F>(
    dim: usize,
    mut matvec: F,
    v0: Array1<C64>,
    max_matvecs: usize,
    tol: f64,
) -> (f64, Array1<C64>)
where
    F: FnMut(&Array1<C64>, &mut Array1<C64>),
{
    let basis_cap = 60.min(dim);
    let mut v = v0;
    let nrm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / nrm);

    let mut used = 0usize;
    let mut last_theta = f64::INFINITY;
    let mut out = Array1::<C64>::zeros(dim);

    while used < max_matvecs {
        let mut basis: Vec<Array1<C64>> = Vec::with_capacity(basis_cap);
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        basis.push(v.clone());

        let mut converged = false;
        while basis.len() <= basis_cap && used < max_matvecs {
            let q = basis.last().unwrap().clone();
            matvec(&q, &mut out);
            used += 1;
            let alpha: f64 = q
                .iter()
                .zip(out.iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum();
            alphas.push(alpha);
            // w = out - alpha q - beta q_prev, then full reorthogonalization.
            let mut w = out.clone();
            for (x, a) in w.iter_mut().zip(q.iter()) {
                *x -= alpha * a;
            }
            if let Some(beta) = betas.last() {
                let prev = &basis[basis.len() - 2];
                for (x, a) in w.iter_mut().zip(prev.iter()) {
                    *x -= *beta * a;
                }
            }
            for b in &basis {
                let overlap: C64 = b.iter().zip(w.iter()).map(|(a, x)| a.conj() * x).sum();
                for (x, a) in w.iter_mut().zip(b.iter()) {
                    *x -= overlap * a;
                }
            }
            let beta: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

            // Check the Ritz value every few steps (and when the basis ends).
            let k = alphas.len();
            let exhausted = beta < 1e-13 || k == basis_cap || used >= max_matvecs;
            if k % 5 == 0 || exhausted {
                let (theta, s) = tridiag_ground(&alphas, &betas);
                let resid = beta * s[k - 1].abs();
                if resid < tol.max(1e-14) && (last_theta - theta).abs() < tol.max(1e-14) {
                    v = ritz_vector(&basis, &s);
                    last_theta = theta;
                    converged = true;
                    break;
                }
                last_theta = theta;
                if exhausted {
                    v = ritz_vector(&basis, &s);
                    break;
                }
            }
            if beta < 1e-13 {
                let (theta, s) = tridiag_ground(&alphas, &betas);
                v = ritz_vector(&basis, &s);
                last_theta = theta;
                converged = true;
                break;
            }
            betas.push(beta);
            basis.push(w.mapv(|z| z / beta));
        }
        if converged {
            break;
        }
    }
    (last_theta, v)
}

fn tridiag_ground(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        t[[i, i]] = alphas[i];
        if i + 1 < k {
            t[[i, i + 1]] = betas[i];
            t[[i + 1, i]] = betas[i];
        }
    }
    let (vals, vecs) = t.eigh(UPLO::Lower).expect("tridiagonal eigendecomposition");
    let s = vecs.column(0).to_vec();
    (vals[0], s)
}

fn ritz_vector(basis: &[Array1<C64>], s: &[f64]) -> Array1<C64> {
    let dim = basis[0].len();
    let mut v = Array1::<C64>::zeros(dim);
    for (b, coeff) in basis.iter().zip(s.iter()) {
        for (x, a) in v.iter_mut().zip(b.iter()) {
            *x += *coeff * a;
        }
    }
    let nrm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / nrm);
    v
}
