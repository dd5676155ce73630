//! Small dense linear-algebra helpers shared by the model and solver modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{CMat, RMat, C64};

/// Default cap on the 1-norm condition estimate before an inversion is refused.
pub const DEFAULT_COND_CAP: f64 = 1e12;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a square complex matrix, refusing matrices whose 1-norm
/// condition number exceeds `cond_cap`.
pub fn inverse_checked(m: &CMat, cond_cap: f64, context: &str) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            context: context.to_string(),
            detail: format!("{}x{} is not square", m.nrows(), m.ncols()),
        });
    }
    let inv = m.clone().lu().try_inverse().ok_or_else(|| Error::Singular {
        context: context.to_string(),
        cond: f64::INFINITY,
    })?;
    let cond = one_norm(m) * one_norm(&inv);
    if !cond.is_finite() || cond > cond_cap {
        return Err(Error::Singular {
            context: context.to_string(),
            cond,
        });
    }
    Ok(inv)
}

/// Solve `a x = b` by LU.
pub fn solve(a: &CMat, b: &CMat, context: &str) -> Result<CMat> {
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular {
        context: context.to_string(),
        cond: f64::INFINITY,
    })
}

pub fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn complexify(re: &RMat, im: &RMat) -> CMat {
    re.zip_map(im, C64::new)
}

/// Frobenius norm of `a - b` relative to the Frobenius norm of `b`
/// (absolute when `b` vanishes).
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Frobenius norm of `m - mᵀ`.
pub fn asymmetry(m: &CMat) -> f64 {
    (m - m.transpose()).norm()
}

pub fn sym_part(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Square root factors of a real symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SqrtFactors {
    pub sqrt: RMat,
    pub inv_sqrt: RMat,
    pub min_eig: f64,
}

/// Unique symmetric PD square root and inverse square root via
/// eigendecomposition. Fails when the smallest eigenvalue does not exceed
/// `floor` times the largest.
pub fn sqrt_pd(m: &RMat, floor: f64) -> Result<SqrtFactors> {
    let eig = sym_part(m).symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(min_eig > floor * max_eig.max(f64::MIN_POSITIVE)) {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    let v = &eig.eigenvectors;
    let s = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.sqrt()));
    let is = s.map(|x| 1.0 / x);
    let sqrt = sym_part(&(v * DMatrix::from_diagonal(&s) * v.transpose()));
    let inv_sqrt = sym_part(&(v * DMatrix::from_diagonal(&is) * v.transpose()));
    Ok(SqrtFactors {
        sqrt,
        inv_sqrt,
        min_eig,
    })
}

pub fn min_eigenvalue(m: &RMat) -> f64 {
    sym_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cayley transform `(y0 I + i B)⁻¹ (y0 I − i B)` of a real symmetric `B`.
///
/// The result is unitary and symmetric. `y0 I + i B` is always invertible
/// for `y0 > 0`.
pub fn cayley(bbar: &RMat, y0: f64) -> CMat {
    let n = bbar.nrows();
    let ib = bbar.map(|x| C64::new(0.0, x));
    let eye = CMat::identity(n, n) * C64::new(y0, 0.0);
    let plus = &eye + &ib;
    let minus = &eye - &ib;
    let theta = plus
        .lu()
        .solve(&minus)
        .expect("y0 I + iB is nonsingular for real symmetric B");
    // symmetric in exact arithmetic; remove rounding asymmetry
    (&theta + theta.transpose()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Returns (eigenvalues, eigenvectors as columns).
pub fn hermitian_eigen_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

/// Circularly-symmetric complex Gaussian matrix with total per-entry
/// variance `variance` (real and imaginary parts each carry half).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        C64::new(s * a, s * b)
    })
}

/// Random real symmetric matrix with N(0, scale²) entries on and above the
/// diagonal.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> RMat {
    let mut m = RMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            m[(i, j)] = scale * v;
            m[(j, i)] = scale * v;
        }
    }
    m
}

/// Unit-norm random complex vector as an n×1 matrix.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let v = complex_gaussian(rng, n, 1, 1.0);
    let nrm = v.norm();
    v / C64::new(nrm, 0.0)
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r, c0), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Make the first entry with magnitude above `tol · max|x|` real positive.
pub fn fix_phase(x: &mut CMat) {
    let max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(z) = x.iter().find(|z| z.norm() > 1e-8 * max).copied() {
        let ph = z.conj() / C64::new(z.norm(), 0.0);
        *x *= ph;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cayley_of_zero_is_identity() {
        let t = cayley(&RMat::zeros(3, 3), 0.02);
        assert!((t - CMat::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn cayley_is_unitary_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_symmetric(&mut rng, 6, 0.05);
        let t = cayley(&b, 0.02);
        let eye = CMat::identity(6, 6);
        assert!((t.adjoint() * &t - eye).norm() < 1e-10);
        assert!(asymmetry(&t) < 1e-12);
    }

    #[test]
    fn sqrt_pd_factors_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symmetric(&mut rng, 5, 1.0);
        let m = &a * a.transpose() + RMat::identity(5, 5);
        let f = sqrt_pd(&m, 1e-14).unwrap();
        assert!((&f.sqrt * &f.sqrt - &m).norm() < 1e-10);
        assert!((&f.inv_sqrt * &m * &f.inv_sqrt - RMat::identity(5, 5)).norm() < 1e-10);
    }

    #[test]
    fn sqrt_pd_rejects_indefinite() {
        let m = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sqrt_pd(&m, 1e-14), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn hermitian_eigen_sorted_descending() {
        let m = complexify(
            &RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
            &RMat::zeros(2, 2),
        );
        let (vals, vecs) = hermitian_eigen_desc(&m);
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_inverse_reports_condition() {
        let m = CMat::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(
            inverse_checked(&m, DEFAULT_COND_CAP, "t"),
            Err(Error::Singular { .. })
        ));
    }
}
