//! Dense solver for the complex two-constraint SDP
//!
//! ```text
//! maximize tr(Q0 X)  s.t.  tr(Q1 X) = 0,  tr(Q2 X) = 1,  X ⪰ 0
//! ```
//!
//! The Hermitian program is embedded as a real symmetric one of twice the
//! size and solved with an infeasible-start primal-dual interior-point
//! method (HKM search direction, Mehrotra predictor-corrector).

use log::{debug, warn};
use nalgebra::{Cholesky, DVector, Dyn};

use crate::channels::CompactDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::{CMat, RMat, C64};

pub const DEFAULT_GAP_TOL: f64 = 1e-9;
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub struct TwoConstraintSdp {
    pub q0: CMat,
    pub q1: CMat,
    pub q2: CMat,
}

impl TwoConstraintSdp {
    pub fn new(q0: CMat, q1: CMat, q2: CMat) -> Result<Self> {
        let n = q0.nrows();
        for (name, q) in [("Q0", &q0), ("Q1", &q1), ("Q2", &q2)] {
            if q.shape() != (n, n) {
                return Err(Error::Dimension {
                    context: "sdp".into(),
                    detail: format!("{name} must be {n}x{n}"),
                });
            }
            let dev = (q - q.adjoint()).norm();
            if dev > 1e-12 * q.norm().max(1.0) {
                return Err(Error::NotSymmetric { deviation: dev });
            }
        }
        if q2.norm() == 0.0 {
            return Err(Error::InvalidParameter("Q2 must be nonzero".into()));
        }
        Ok(Self { q0, q1, q2 })
    }

    pub fn dim(&self) -> usize {
        self.q0.nrows()
    }

    /// `tr(Q X)` for Hermitian `Q` and `X`.
    pub fn trace_product(q: &CMat, x: &CMat) -> f64 {
        q.iter().zip(x.transpose().iter()).map(|(a, b)| (a * b).re).sum()
    }

    /// `xᴴ Q x` for a column vector.
    pub fn quad_form(q: &CMat, x: &CMat) -> f64 {
        (x.adjoint() * q * x)[(0, 0)].re
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Optimal Hermitian matrix.
    pub x: CMat,
    /// Primal objective `tr(Q0 X)`.
    pub value: f64,
    /// Dual objective, an upper bound on the optimum.
    pub dual_value: f64,
    /// Multipliers of the two trace constraints.
    pub duals: [f64; 2],
    /// Relative duality gap of the normalized program.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    /// `λ₂/λ₁` of the returned `X`.
    pub eig_ratio: f64,
}

/// Real symmetric embedding `[[Re, −Im], [Im, Re]]`.
pub fn embed(q: &CMat) -> RMat {
    let n = q.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = q[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`embed`] after averaging over the complex structure.
pub fn unembed(x: &RMat) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        C64::new(re, im)
    })
}

fn dot(a: &RMat, b: &RMat) -> f64 {
    a.dot(b)
}

fn sym(m: RMat) -> RMat {
    (&m + m.transpose()) * 0.5
}

/// Largest step keeping `x + α dx` positive definite, given `chol(x)`.
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &RMat) -> f64 {
    let l = chol.l();
    let linv_dx = l.solve_lower_triangular(dx).expect("triangular");
    let w = l
        .solve_lower_triangular(&linv_dx.transpose())
        .expect("triangular");
    let lmin = sym(w).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct RealSdp {
    c: RMat,
    a: Vec<RMat>,
    b: Vec<f64>,
}

impl RealSdp {
    fn op(&self, x: &RMat) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|a| dot(a, x)))
    }

    fn adj(&self, y: &DVector<f64>) -> RMat {
        let n = self.c.nrows();
        self.a.iter().zip(y.iter()).fold(RMat::zeros(n, n), |acc, (a, &yk)| acc + a * yk)
    }
}

struct IpmResult {
    x: RMat,
    y: DVector<f64>,
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
    iterations: usize,
}

/// `min ⟨C, X⟩ s.t. ⟨A_k, X⟩ = b_k, X ⪰ 0` with the dual
/// `max bᵀy s.t. Σ y_k A_k + S = C, S ⪰ 0`.
fn ipm(p: &RealSdp, gap_tol: f64) -> Result<IpmResult> {
    let n = p.c.nrows();
    let m = p.a.len();
    let bvec = DVector::from_column_slice(&p.b);
    let mut x = RMat::identity(n, n);
    let mut s = RMat::identity(n, n);
    let mut y = DVector::zeros(m);
    let bnorm = 1.0 + bvec.norm();
    let cnorm = 1.0 + p.c.norm();
    let mut last = None;
    for it in 0..MAX_ITERS {
        let rp = &bvec - p.op(&x);
        let rd = &p.c - &s - p.adj(&y);
        let pobj = dot(&p.c, &x);
        let dobj = bvec.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / bnorm;
        let dinf = rd.norm() / cnorm;
        let mu = dot(&x, &s) / n as f64;
        debug!("sdp it {it}: pobj {pobj:.3e} dobj {dobj:.3e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");
        last = Some(IpmResult {
            x: x.clone(),
            y: y.clone(),
            pobj,
            dobj,
            gap,
            pinf,
            dinf,
            iterations: it,
        });
        if gap < gap_tol && pinf < FEAS_TOL && dinf < FEAS_TOL {
            break;
        }
        if !pobj.is_finite() || !dobj.is_finite() {
            return Err(Error::SdpInfeasible("iterates diverged".into()));
        }
        if x.norm() > 1e12 {
            return Err(Error::SdpInfeasible("primal iterates unbounded (dual infeasible)".into()));
        }
        if y.norm() > 1e12 {
            return Err(Error::SdpInfeasible("dual iterates unbounded (primal infeasible)".into()));
        }
        let (Some(cx), Some(cs)) = (x.clone().cholesky(), s.clone().cholesky()) else {
            break;
        };
        let s_inv = cs.inverse();
        // Schur complement M_ij = tr(A_i X A_j S⁻¹)
        let xa: Vec<RMat> = p.a.iter().map(|a| &x * a * &s_inv).collect();
        let mut schur = RMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = dot(&p.a[i], &xa[j]);
            }
        }
        let schur = sym(schur);
        let lu = schur.clone().lu();

        let direction = |rc: &RMat| -> Option<(RMat, DVector<f64>, RMat)> {
            // ΔX = (Rc − X ΔS) S⁻¹, ΔS = rd − Σ Δy A
            let base = (rc - &x * &rd) * &s_inv;
            let rhs = &rp - p.op(&base);
            let dy = lu.solve(&rhs)?;
            let ds = &rd - p.adj(&dy);
            let dx = sym((rc - &x * &ds) * &s_inv);
            Some((dx, dy, ds))
        };

        let xs = &x * &s;
        let rc_aff = -xs.clone();
        let Some((dx_a, _, ds_a)) = direction(&rc_aff) else {
            break;
        };
        let ap = max_step(&cx, &dx_a).min(1.0);
        let ad = max_step(&cs, &ds_a).min(1.0);
        let mu_aff = dot(&(&x + &dx_a * ap), &(&s + &ds_a * ad)) / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let rc = RMat::identity(n, n) * (sigma * mu) - xs - &dx_a * &ds_a;
        let Some((dx, dy, ds)) = direction(&rc) else {
            break;
        };
        let ap = (0.98 * max_step(&cx, &dx)).min(1.0);
        let ad = (0.98 * max_step(&cs, &ds)).min(1.0);
        x = sym(&x + &dx * ap);
        y += &dy * ad;
        s = sym(&s + &ds * ad);
    }
    let r = last.expect("at least one iteration");
    if r.gap >= gap_tol || r.pinf >= FEAS_TOL.sqrt() || r.dinf >= FEAS_TOL.sqrt() {
        return Err(Error::SdpMaxIterations {
            iterations: r.iterations,
            gap: r.gap,
            infeas: r.pinf.max(r.dinf),
        });
    }
    Ok(r)
}

/// Solve the program. `gap_tol` bounds the relative duality gap of the
/// internally normalized program.
pub fn solve(sdp: &TwoConstraintSdp, gap_tol: f64) -> Result<SdpSolution> {
    let cr = embed(&sdp.q0) * 0.5;
    let c_scale = if cr.norm() > 0.0 { cr.norm() } else { 1.0 };
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut a_scale = [0.0; 2];
    for (k, (q, bk)) in [(&sdp.q1, 0.0), (&sdp.q2, 1.0)].into_iter().enumerate() {
        let ak = embed(q) * 0.5;
        let nrm = ak.norm();
        if nrm == 0.0 {
            continue;
        }
        a_scale[k] = nrm;
        a.push(ak / nrm);
        b.push(bk / nrm);
    }
    let real = RealSdp {
        c: -cr / c_scale,
        a,
        b,
    };
    let r = ipm(&real, gap_tol)?;
    let x = unembed(&r.x);
    let value = TwoConstraintSdp::trace_product(&sdp.q0, &x);
    let dual_value = -c_scale * r.dobj;
    let mut duals = [0.0; 2];
    let mut idx = 0;
    for k in 0..2 {
        if a_scale[k] > 0.0 {
            duals[k] = -c_scale * r.y[idx] / a_scale[k];
            idx += 1;
        }
    }
    // weak duality of the normalized pair, up to the residual infeasibility
    if -c_scale * r.pobj > dual_value + 1e-7 * (1.0 + dual_value.abs()) {
        warn!("sdp primal value exceeds dual bound: {} > {}", -c_scale * r.pobj, dual_value);
    }
    let (vals, _) = linalg::hermitian_eigen_desc(&x);
    let eig_ratio = if vals[0] > 0.0 {
        vals.get(1).copied().unwrap_or(0.0).max(0.0) / vals[0]
    } else {
        0.0
    };
    Ok(SdpSolution {
        x,
        value,
        dual_value,
        duals,
        gap: r.gap,
        primal_infeasibility: r.pinf,
        dual_infeasibility: r.dinf,
        iterations: r.iterations,
        eig_ratio,
    })
}

/// Null-space direction of a few linear functionals on real vectors of
/// length `dim`, or `None` if the functionals span everything.
fn null_direction(rows: &[DVector<f64>], dim: usize) -> Option<DVector<f64>> {
    let a = RMat::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let gram = &a * a.transpose();
    let eps = 1e-12 * gram.norm().max(f64::MIN_POSITIVE);
    let pinv = gram.pseudo_inverse(eps).ok()?;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..dim {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        let proj = &e - a.transpose() * (&pinv * (&a * &e));
        let nrm = proj.norm();
        if best.as_ref().map_or(true, |(b, _)| nrm > *b) {
            best = Some((nrm, proj));
        }
    }
    best.filter(|(n, _)| *n > 1e-8).map(|(n, v)| v / n)
}

/// Hermitian basis element `p` of the `r × r` Hermitian matrices.
fn hermitian_basis(r: usize, p: usize) -> CMat {
    let mut e = CMat::zeros(r, r);
    if p < r {
        e[(p, p)] = c(1.0, 0.0);
        return e;
    }
    let mut k = p - r;
    for i in 0..r {
        for j in i + 1..r {
            if k == 0 {
                e[(i, j)] = c(1.0, 0.0);
                e[(j, i)] = c(1.0, 0.0);
                return e;
            }
            if k == 1 {
                e[(i, j)] = c(0.0, 1.0);
                e[(j, i)] = c(0.0, -1.0);
                return e;
            }
            k -= 2;
        }
    }
    unreachable!("basis index out of range")
}

/// Extract a vector `x` with `X ≈ x xᴴ`. Matrices with `λ₂/λ₁ ≥ tol` are
/// first purified: moves along the null space of the three trace
/// functionals reduce the rank while keeping constraint and objective
/// values.
pub fn rank_one_extract(sdp: &TwoConstraintSdp, x: &CMat, tol: f64) -> Result<CMat> {
    let mut cur = (x + x.adjoint()) * c(0.5, 0.0);
    for _ in 0..cur.nrows() + 1 {
        let (vals, vecs) = linalg::hermitian_eigen_desc(&cur);
        if vals[0] <= 0.0 {
            return Err(Error::Purification("matrix has no positive eigenvalue".into()));
        }
        if vals.get(1).map_or(true, |&l2| l2 / vals[0] < tol) {
            let mut v = vecs.columns(0, 1).into_owned() * c(vals[0].sqrt(), 0.0);
            linalg::fix_phase(&mut v);
            return Ok(v);
        }
        let r = vals.iter().take_while(|&&l| l > 1e-14 * vals[0]).count();
        let v = vecs.columns(0, r).into_owned();
        let lam = RMat::from_diagonal(&DVector::from_iterator(r, vals[..r].iter().copied()));
        let reduced: Vec<CMat> = [&sdp.q0, &sdp.q1, &sdp.q2]
            .iter()
            .map(|q| v.adjoint() * *q * &v)
            .collect();
        let dim = r * r;
        let rows: Vec<DVector<f64>> = reduced
            .iter()
            .map(|q| DVector::from_iterator(dim, (0..dim).map(|p| TwoConstraintSdp::trace_product(q, &hermitian_basis(r, p)))))
            .collect();
        let t = null_direction(&rows, dim)
            .ok_or_else(|| Error::Purification("no feasible rank-reducing direction".into()))?;
        let delta = (0..dim).fold(CMat::zeros(r, r), |acc, p| acc + hermitian_basis(r, p) * c(t[p], 0.0));
        // step until an eigenvalue of Λ − αΔ hits zero
        let lam_isqrt = lam.map(|l| if l > 0.0 { 1.0 / l.sqrt() } else { 0.0 });
        let lc = linalg::to_complex(&lam_isqrt);
        let (dv, _) = linalg::hermitian_eigen_desc(&(&lc * &delta * &lc));
        let (top, bottom) = (dv[0], *dv.last().unwrap());
        let (alpha, sign) = if top >= -bottom { (1.0 / top, 1.0) } else { (-1.0 / bottom, -1.0) };
        let next = linalg::to_complex(&lam) - &delta * c(sign * alpha, 0.0);
        cur = &v * next * v.adjoint();
        cur = (&cur + cur.adjoint()) * c(0.5, 0.0);
    }
    Err(Error::Purification("rank did not drop to one".into()))
}

/// How to map the SDP vector back to `(w, u)`.
#[derive(Debug, Clone)]
pub struct SdpLift {
    pub n_t: usize,
    /// `u` is stored scaled: `u = scale · ũ`.
    pub scale: f64,
    /// Right singular vectors of `H̄_RI` kept by the reduction; `None` for
    /// the full program.
    pub v_basis: Option<CMat>,
    pub u_ri: Option<CMat>,
    pub d_ri: Option<Vec<f64>>,
}

impl SdpLift {
    /// Split `x = [w; ũ]` and return `(w, u)` in physical coordinates.
    pub fn lift(&self, x: &CMat) -> (CMat, CMat) {
        let w = x.rows(0, self.n_t).into_owned();
        let tail = x.rows(self.n_t, x.nrows() - self.n_t).into_owned() * c(self.scale, 0.0);
        let u = match &self.v_basis {
            Some(v) => v * tail,
            None => tail,
        };
        (w, u)
    }
}

fn operator_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

fn constraint_blocks(hbar_it: &CMat, tail: usize, scale: f64) -> (CMat, CMat) {
    let n_t = hbar_it.ncols();
    let git = hbar_it.adjoint() * hbar_it / c(scale * scale, 0.0);
    let neg = CMat::identity(tail, tail) * c(-1.0, 0.0);
    let q1 = linalg::block_diag(&[&git, &neg]);
    let q2 = linalg::block_diag(&[&CMat::identity(n_t, n_t), &CMat::zeros(tail, tail)]);
    (q1, q2)
}

fn u_scale(decomp: &CompactDecomposition) -> f64 {
    let s = operator_norm(&decomp.hbar_it);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn gram(g: &CMat) -> CMat {
    let q = g.adjoint() * g;
    (&q + q.adjoint()) * c(0.5, 0.0)
}

/// Program in `x = [w; ũ]` of dimension `n_t + n_i`.
pub fn build_sdp_full(decomp: &CompactDecomposition) -> Result<(TwoConstraintSdp, SdpLift)> {
    let (n_t, n_i, n_r) = (decomp.n_t(), decomp.n_i(), decomp.n_r());
    let s = u_scale(decomp);
    let mut g = CMat::zeros(n_r, n_t + n_i);
    g.columns_mut(0, n_t).copy_from(&decomp.hbar_rt);
    g.columns_mut(n_t, n_i).copy_from(&(&decomp.hbar_ri * c(s, 0.0)));
    let (q1, q2) = constraint_blocks(&decomp.hbar_it, n_i, s);
    let sdp = TwoConstraintSdp::new(gram(&g), q1, q2)?;
    Ok((
        sdp,
        SdpLift {
            n_t,
            scale: s,
            v_basis: None,
            u_ri: None,
            d_ri: None,
        },
    ))
}

/// Program in `x = [w; ū]` of dimension `n_t + min(n_r, n_i)` built from the
/// SVD `H̄_RI = U D Vᴴ`.
pub fn build_sdp_reduced(decomp: &CompactDecomposition) -> Result<(TwoConstraintSdp, SdpLift)> {
    let n_t = decomp.n_t();
    let s = u_scale(decomp);
    let svd = decomp.hbar_ri.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᴴ").adjoint();
    let d: Vec<f64> = svd.singular_values.iter().copied().collect();
    let k = d.len();
    // ‖H̄_RT w + U D ū‖² with U of orthonormal columns
    let mut g = CMat::zeros(decomp.n_r(), n_t + k);
    g.columns_mut(0, n_t).copy_from(&decomp.hbar_rt);
    for i in 0..k {
        g.column_mut(n_t + i).copy_from(&(u.column(i) * c(s * d[i], 0.0)));
    }
    let (q1, q2) = constraint_blocks(&decomp.hbar_it, k, s);
    let sdp = TwoConstraintSdp::new(gram(&g), q1, q2)?;
    Ok((
        sdp,
        SdpLift {
            n_t,
            scale: s,
            v_basis: Some(v),
            u_ri: Some(u),
            d_ri: Some(d),
        },
    ))
}
