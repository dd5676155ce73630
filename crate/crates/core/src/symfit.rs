//! Masked symmetric least squares
//!
//! ```text
//! minimize  ρ/2 ‖L B R − Γ₁‖² + ξ/2 ‖L B L − Γ₂‖²   over symmetric B on a mask
//! ```
//!
//! Free variables are the masked entries with `j ≥ i`, packed row by row.

use nalgebra::{DMatrix, DVector};

use crate::channels::CompactDecomposition;
use crate::error::{Error, Result};
use crate::linalg;
use crate::topology::Topology;
use crate::{CMat, RMat, C64};

/// Condition number above which the normal equations receive a ridge.
pub const RIDGE_COND: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct SymFitProblem {
    pub l_factor: RMat,
    pub r_factor: RMat,
    pub gamma1: RMat,
    pub gamma2: RMat,
    pub rho: f64,
    pub xi: f64,
    pub topology: Topology,
}

#[derive(Debug, Clone)]
pub struct SymFitSolution {
    pub b_i: RMat,
    /// Objective value at `b_i`.
    pub objective: f64,
    /// Set when the system was rank deficient (minimal-norm or ridge solution).
    pub rank_deficient: bool,
}

impl SymFitProblem {
    fn validate(&self) -> Result<()> {
        let n = self.topology.n_i;
        let dim_err = |d: String| Error::Dimension {
            context: "symfit".into(),
            detail: d,
        };
        if self.l_factor.shape() != (n, n) {
            return Err(dim_err(format!("L must be {n}x{n}")));
        }
        if self.r_factor.nrows() != n || self.gamma1.shape() != self.r_factor.shape() {
            return Err(dim_err("R and Γ1 must be n_i x m with equal shapes".into()));
        }
        if self.xi > 0.0 && self.gamma2.shape() != (n, n) {
            return Err(dim_err(format!("Γ2 must be {n}x{n}")));
        }
        if !(self.rho >= 0.0 && self.xi >= 0.0 && self.rho + self.xi > 0.0) {
            return Err(Error::InvalidParameter("need ρ, ξ ≥ 0 with at least one positive".into()));
        }
        Ok(())
    }

    pub fn objective(&self, b: &RMat) -> f64 {
        let l = &self.l_factor;
        let mut v = 0.5 * self.rho * (l * b * &self.r_factor - &self.gamma1).norm_squared();
        if self.xi > 0.0 {
            v += 0.5 * self.xi * (l * b * l - &self.gamma2).norm_squared();
        }
        v
    }
}

/// Pack a masked symmetric matrix into its free-variable vector.
pub fn pack_free_variables(b: &RMat, topology: &Topology) -> Result<DVector<f64>> {
    let n = topology.n_i;
    if b.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "pack".into(),
            detail: format!("expected {n}x{n}"),
        });
    }
    for i in 0..n {
        for j in 0..n {
            if b[(i, j)] != b[(j, i)] {
                return Err(Error::NotSymmetric {
                    deviation: (b[(i, j)] - b[(j, i)]).abs(),
                });
            }
            if !topology.allowed(i, j) && b[(i, j)] != 0.0 {
                return Err(Error::MaskViolation { row: i, col: j });
            }
        }
    }
    let pairs = topology.free_pairs();
    Ok(DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| b[(i, j)])))
}

pub fn unpack_free_variables(x: &DVector<f64>, topology: &Topology) -> Result<RMat> {
    let pairs = topology.free_pairs();
    if x.len() != pairs.len() {
        return Err(Error::Dimension {
            context: "unpack".into(),
            detail: format!("expected {} free variables, got {}", pairs.len(), x.len()),
        });
    }
    let mut b = RMat::zeros(topology.n_i, topology.n_i);
    for (&(i, j), &v) in pairs.iter().zip(x.iter()) {
        b[(i, j)] = v;
        b[(j, i)] = v;
    }
    Ok(b)
}

/// `Σ tr(E_a P E_b Q)` for the basis matrices of two free pairs.
fn gram_entry(a: (usize, usize), b: (usize, usize), p: &RMat, q: &RMat) -> f64 {
    let terms = |(i, j): (usize, usize)| -> ([(usize, usize); 2], usize) {
        if i == j {
            ([(i, i), (i, i)], 1)
        } else {
            ([(i, j), (j, i)], 2)
        }
    };
    let (ta, na) = terms(a);
    let (tb, nb) = terms(b);
    let mut s = 0.0;
    for &(i, j) in &ta[..na] {
        for &(k, l) in &tb[..nb] {
            s += p[(j, k)] * q[(l, i)];
        }
    }
    s
}

/// `Σ E_a : M` for the basis matrix of a free pair.
fn basis_dot(a: (usize, usize), m: &RMat) -> f64 {
    let (i, j) = a;
    if i == j {
        m[(i, i)]
    } else {
        m[(i, j)] + m[(j, i)]
    }
}

/// Normal equations `(ρAᵀA + ξCᵀC) x = ρAᵀb + ξCᵀd` assembled without
/// forming Kronecker products.
pub fn normal_equations(problem: &SymFitProblem) -> Result<(RMat, DVector<f64>)> {
    problem.validate()?;
    let pairs = problem.topology.free_pairs();
    let l = &problem.l_factor;
    let p = l.transpose() * l;
    let q_r = &problem.r_factor * problem.r_factor.transpose();
    let rhs_r = l.transpose() * &problem.gamma1 * problem.r_factor.transpose();
    let (q_l, rhs_l) = if problem.xi > 0.0 {
        (l * l.transpose(), l.transpose() * &problem.gamma2 * l.transpose())
    } else {
        (RMat::zeros(0, 0), RMat::zeros(0, 0))
    };
    let nf = pairs.len();
    let mut g = RMat::zeros(nf, nf);
    for a in 0..nf {
        for b in a..nf {
            let mut v = problem.rho * gram_entry(pairs[a], pairs[b], &p, &q_r);
            if problem.xi > 0.0 {
                v += problem.xi * gram_entry(pairs[a], pairs[b], &p, &q_l);
            }
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    let rhs = DVector::from_iterator(
        nf,
        pairs.iter().map(|&a| {
            let mut v = problem.rho * basis_dot(a, &rhs_r);
            if problem.xi > 0.0 {
                v += problem.xi * basis_dot(a, &rhs_l);
            }
            v
        }),
    );
    Ok((g, rhs))
}

/// Explicit design matrix of the first term: column `a` is `vec(L E_a R)`.
pub fn design_matrix(l: &RMat, r: &RMat, topology: &Topology) -> RMat {
    let pairs = topology.free_pairs();
    let (n, m) = (l.nrows(), r.ncols());
    let mut a = RMat::zeros(n * m, pairs.len());
    for (col, &(i, j)) in pairs.iter().enumerate() {
        let mut block = l.column(i) * r.row(j);
        if i != j {
            block += l.column(j) * r.row(i);
        }
        a.column_mut(col).copy_from_slice(block.as_slice());
    }
    a
}

/// Minimal-norm least squares by SVD. Returns the solution and whether the
/// matrix was rank deficient relative to its smaller dimension.
fn min_norm_lstsq(a: RMat, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let k = a.nrows().min(a.ncols());
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let thresh = 1e-12 * smax.max(f64::MIN_POSITIVE);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let mut x = DVector::zeros(vt.ncols());
    let mut rank = 0;
    for (s_idx, &s) in svd.singular_values.iter().enumerate() {
        if s > thresh {
            rank += 1;
            let coef = u.column(s_idx).dot(b) / s;
            x += vt.row(s_idx).transpose() * coef;
        }
    }
    (x, rank < k)
}

/// Closed form for the fully connected mask with ξ > 0, in the coordinates
/// `C = L B L`: `ρ(C MMᵀ + MMᵀ C)/2 + ξC = sym(ρΓ₁Mᵀ + ξΓ₂)`, `M = L⁻¹R`.
fn solve_fully_spectral(problem: &SymFitProblem) -> Result<RMat> {
    let n = problem.topology.n_i;
    let l_inv = problem
        .l_factor
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "symfit L".into(),
            cond: f64::INFINITY,
        })?;
    let m = &l_inv * &problem.r_factor;
    let eig = linalg::sym_part(&(&m * m.transpose())).symmetric_eigen();
    let rhs = linalg::sym_part(&(&problem.gamma1 * m.transpose() * problem.rho + &problem.gamma2 * problem.xi));
    let v = &eig.eigenvectors;
    let mut ct = v.transpose() * rhs * v;
    for i in 0..n {
        for j in 0..n {
            ct[(i, j)] /= 0.5 * problem.rho * (eig.eigenvalues[i] + eig.eigenvalues[j]) + problem.xi;
        }
    }
    let c = v * ct * v.transpose();
    Ok(linalg::sym_part(&(&l_inv * c * l_inv.transpose())))
}

/// Solve the masked symmetric least-squares problem.
pub fn solve_symfit(problem: &SymFitProblem) -> Result<SymFitSolution> {
    problem.validate()?;
    let topo = &problem.topology;
    let l = &problem.l_factor;
    let l_symmetric = (l - l.transpose()).norm() <= 1e-14 * l.norm();
    if topo.is_fully() && problem.xi > 0.0 && l_symmetric {
        let b = solve_fully_spectral(problem)?;
        let objective = problem.objective(&b);
        return Ok(SymFitSolution {
            b_i: b,
            objective,
            rank_deficient: false,
        });
    }
    let (x, rank_deficient) = if problem.xi == 0.0 {
        let a = design_matrix(&problem.l_factor, &problem.r_factor, topo);
        let rhs = DVector::from_column_slice(problem.gamma1.as_slice());
        min_norm_lstsq(a, &rhs)
    } else {
        let (g, rhs) = normal_equations(problem)?;
        solve_normal(g, &rhs)?
    };
    let b = unpack_free_variables(&x, topo)?;
    let objective = problem.objective(&b);
    Ok(SymFitSolution {
        b_i: b,
        objective,
        rank_deficient,
    })
}

fn solve_normal(g: RMat, rhs: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let n = g.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), false));
    }
    let eigs = g.clone().symmetric_eigenvalues();
    let (lo, hi) = eigs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let ill = !(lo > 0.0) || hi / lo > RIDGE_COND;
    let mut g = g;
    if ill {
        let ridge = 1e-12 * g.trace() / n as f64;
        for i in 0..n {
            g[(i, i)] += ridge;
        }
    }
    let chol = g.cholesky().ok_or(Error::NotPositiveDefinite { min_eig: lo })?;
    Ok((chol.solve(rhs), ill))
}

/// `B̄_I` from `B_I` for the given decomposition.
pub fn b_to_bbar(decomp: &CompactDecomposition, b_i: &RMat) -> RMat {
    decomp.b_to_bbar(b_i)
}

/// `B_I` from `B̄_I` for the given decomposition.
pub fn bbar_to_b(decomp: &CompactDecomposition, bbar_i: &RMat) -> RMat {
    decomp.bbar_to_b(bbar_i)
}

/// Real-form data of the Cayley condition `θ̄ a = b`, i.e.
/// `B̄ (a + b) = −i Y0 (a − b)`, written for `B_I`: returns `(R, Γ₁)` with
/// `L B_I R = Γ₁` and `L = √Y0 Re(Ȳ_II)^{-1/2}`.
pub fn cayley_fit_data(decomp: &CompactDecomposition, a: &CMat, b: &CMat) -> (RMat, RMat) {
    let l = decomp.l_factor();
    let sum = a + b;
    let rhs = (a - b) * C64::new(0.0, -decomp.y0);
    let m = hstack(&linalg::re(&sum), &linalg::im(&sum));
    let g = hstack(&linalg::re(&rhs), &linalg::im(&rhs));
    let r = &l * m;
    let gamma1 = g - &l * &decomp.im_ybar_ii * &r;
    (r, gamma1)
}

pub(crate) fn hstack(a: &RMat, b: &RMat) -> RMat {
    let mut out = RMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Symmetric `X` with `X M = G` for a full-column-rank `M` when `MᵀG` is
/// symmetric: `X = G M⁺ + M⁺ᵀGᵀ − M⁺ᵀ MᵀG M⁺`.
fn symmetric_interpolant(m: &RMat, g: &RMat) -> Option<RMat> {
    let mtm = m.transpose() * m;
    let eig = mtm.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo > 1e-10 * hi) {
        return None;
    }
    let pinv = mtm.cholesky()?.solve(&m.transpose());
    let x = g * &pinv + pinv.transpose() * g.transpose() - pinv.transpose() * (m.transpose() * g) * &pinv;
    Some(linalg::sym_part(&x))
}

/// Least-squares fit of a masked `B_I` such that `θ̄(B_I) a ≈ b`
/// column-wise.
pub fn fit_unitary_map(decomp: &CompactDecomposition, topology: &Topology, a: &CMat, b: &CMat) -> Result<SymFitSolution> {
    let n = decomp.n_i();
    let (r, gamma1) = cayley_fit_data(decomp, a, b);
    if topology.is_fully() && 2 * a.ncols() < n {
        // every symmetric B̄ is reachable, so interpolate B̄ directly
        let sum = a + b;
        let rhs = (a - b) * C64::new(0.0, -decomp.y0);
        let m = hstack(&linalg::re(&sum), &linalg::im(&sum));
        let g = hstack(&linalg::re(&rhs), &linalg::im(&rhs));
        if let Some(bbar) = symmetric_interpolant(&m, &g) {
            let fit = &bbar * &m - &g;
            if fit.norm() <= 1e-10 * g.norm().max(f64::MIN_POSITIVE) {
                let b_i = decomp.bbar_to_b(&bbar);
                let objective = 0.5 * (decomp.l_factor() * &b_i * &r - &gamma1).norm_squared();
                return Ok(SymFitSolution {
                    b_i,
                    objective,
                    rank_deficient: false,
                });
            }
        }
    }
    solve_symfit(&SymFitProblem {
        l_factor: decomp.l_factor(),
        r_factor: r,
        gamma1,
        gamma2: DMatrix::zeros(n, n),
        rho: 1.0,
        xi: 0.0,
        topology: topology.clone(),
    })
}
