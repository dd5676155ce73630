use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channels::{make_ris_state, CompactDecomposition, RisState};
use crate::error::{Error, Result};
use crate::linalg::{self, c, complex_gaussian, hermitian_eigen_desc};
use crate::optim::sum_rate;
use crate::symfit::{solve_symfit, SymFitProblem};
use crate::topology::Topology;
use crate::{CMat, RMat, C64};

#[derive(Debug, Clone)]
pub struct AdmmOptions {
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    /// Proximal weight on `B̄` changes.
    pub xi: f64,
    pub max_iters: usize,
    /// Relative primal residual for convergence.
    pub tol_primal: f64,
    /// Relative sum-rate change for convergence.
    pub tol_obj: f64,
    /// FP/W sweeps per outer iteration.
    pub inner_fp: usize,
    /// Iterates with relative residual above this are not returned.
    pub feasibility_tol: f64,
    /// Factor applied to ρ after each iteration whose residual is above
    /// `tol_primal` (1 disables it).
    pub rho_growth: f64,
    /// Seed of the random initial precoder.
    pub seed: u64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            xi: 0.1,
            max_iters: 500,
            tol_primal: 1e-5,
            tol_obj: 1e-6,
            inner_fp: 1,
            feasibility_tol: 1e-4,
            rho_growth: 1.02,
            seed: 0,
        }
    }
}

impl AdmmOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.xi >= 0.0
            && self.max_iters > 0
            && self.tol_primal > 0.0
            && self.tol_obj >= 0.0
            && self.inner_fp > 0
            && self.feasibility_tol > 0.0
            && self.rho_growth >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid ADMM options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmTraceEntry {
    /// Augmented Lagrangian (scaled problem).
    pub al: f64,
    /// `‖(Y0 − iB̄)U − (Y0 + iB̄)H̄_RIᴴ‖_F / (Y0 ‖H̄_RI‖_F)`
    pub primal_residual: f64,
    /// Sum rate of the current `(B_I, W)` on the true channel, nats.
    pub sum_rate: f64,
}

#[derive(Debug, Clone)]
pub struct MultiuserSolution {
    /// Precoders, column `k` serves user `k`.
    pub w: CMat,
    pub ris: RisState,
    /// Auxiliary `U ≈ (H̄_RI θ̄)ᴴ` of the returned iterate.
    pub u: CMat,
    /// Nats.
    pub sum_rate: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<AdmmTraceEntry>,
}

/// SINR variables and quadratic-transform variables for fixed `(H, W)`.
fn fp_aux(h: &CMat, w: &CMat, sigma2: f64) -> (Vec<f64>, Vec<C64>) {
    let hw = h * w;
    let k = hw.nrows();
    let mut gamma = Vec::with_capacity(k);
    let mut y = Vec::with_capacity(k);
    for i in 0..k {
        let total: f64 = hw.row(i).iter().map(|x| x.norm_sqr()).sum::<f64>() + sigma2;
        let sig = hw[(i, i)].norm_sqr();
        let g = sig / (total - sig);
        gamma.push(g);
        y.push(hw[(i, i)] * ((1.0 + g).sqrt() / total));
    }
    (gamma, y)
}

/// `w_k = √(1+γ_k) y_k (Σ_j |y_j|² h_j h_jᴴ + μI)⁻¹ h_k` with the smallest
/// `μ ≥ 0` meeting the power budget.
fn w_update(h: &CMat, gamma: &[f64], y: &[C64], p_t: f64) -> CMat {
    let (k, n_t) = (h.nrows(), h.ncols());
    let mut a = CMat::zeros(n_t, n_t);
    let mut rhs = CMat::zeros(n_t, k);
    for j in 0..k {
        let hj = h.row(j).adjoint();
        a += &hj * hj.adjoint() * c(y[j].norm_sqr(), 0.0);
        rhs.set_column(j, &(&hj * (y[j] * (1.0 + gamma[j]).sqrt())));
    }
    let (vals, vecs) = hermitian_eigen_desc(&a);
    let z = vecs.adjoint() * &rhs;
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    // the right-hand side lies in the range of A; drop round-off outside it
    let keep: Vec<bool> = vals.iter().map(|&v| v > 1e-12 * top).collect();
    let weights: Vec<f64> = (0..n_t)
        .map(|i| if keep[i] { z.row(i).iter().map(|x| x.norm_sqr()).sum() } else { 0.0 })
        .collect();
    let lam: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let power = |mu: f64| -> f64 {
        weights
            .iter()
            .zip(&lam)
            .map(|(&wt, &l)| if wt == 0.0 { 0.0 } else { wt / (l + mu).powi(2) })
            .sum()
    };
    let mu = if power(0.0) <= p_t {
        0.0
    } else {
        let mut hi = (weights.iter().sum::<f64>() / p_t).sqrt().max(f64::MIN_POSITIVE);
        while power(hi) > p_t {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p_t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };
    let mut zs = z;
    for i in 0..n_t {
        let d = lam[i] + mu;
        let s = if keep[i] && d > 0.0 { 1.0 / d } else { 0.0 };
        zs.row_mut(i).scale_mut(s);
    }
    // scaling all precoders up raises every SINR, so spend the full budget
    scale_to_power(&(vecs * zs), p_t)
}

fn scale_to_power(w: &CMat, p_t: f64) -> CMat {
    let n = w.norm();
    if n == 0.0 {
        w.clone()
    } else {
        w * c(p_t.sqrt() / n, 0.0)
    }
}

struct Problem<'a> {
    decomp: &'a CompactDecomposition,
    topology: &'a Topology,
    /// Channel blocks scaled by `1/σ`.
    hrt: CMat,
    hit: CMat,
    /// `H̄_RIᴴ`
    htil: CMat,
    kappa: f64,
    y0: f64,
    rho: f64,
    xi: f64,
    l: RMat,
    l_imy_l: RMat,
    p_t: f64,
}

impl Problem<'_> {
    fn channel_from_u(&self, u: &CMat) -> CMat {
        &self.hrt + u.adjoint() * &self.hit
    }

    fn true_channel(&self, theta: &CMat) -> CMat {
        &self.hrt + &self.decomp.hbar_ri * theta * &self.hit
    }

    fn residual(&self, bbar: &RMat, u: &CMat) -> CMat {
        let e = linalg::complexify(&(RMat::identity(bbar.nrows(), bbar.nrows()) * self.y0), &(-bbar));
        let f = linalg::complexify(&(RMat::identity(bbar.nrows(), bbar.nrows()) * self.y0), bbar);
        e * u - f * &self.htil
    }

    fn rel(&self, r: &CMat) -> f64 {
        r.norm() / (self.y0 * self.kappa)
    }

    fn u_update(&self, u: &CMat, w: &CMat, bbar: &RMat, lambda: &CMat) -> Result<CMat> {
        let n = bbar.nrows();
        let h = self.channel_from_u(u);
        let (gamma, y) = fp_aux(&h, w, 1.0);
        let v = &self.hit * w;
        let t = &self.hrt * w;
        let vvh = &v * v.adjoint();
        let eye = RMat::identity(n, n);
        let d = linalg::to_complex(&((&eye * (self.y0 * self.y0) + bbar * bbar) * (0.5 * self.rho)));
        let e_h = linalg::complexify(&(&eye * self.y0), bbar);
        let mut out = CMat::zeros(n, u.ncols());
        for k in 0..u.ncols() {
            let yk2 = y[k].norm_sqr();
            let p = &vvh * c(yk2, 0.0) + &d;
            let ck = &e_h * self.htil.column(k) - lambda.column(k) / c(self.rho, 0.0);
            let tk = t.row(k).transpose().map(|x| x.conj());
            let q = v.column(k) * (y[k].conj() * (1.0 + gamma[k]).sqrt()) - &v * tk * c(yk2, 0.0)
                + &e_h * ck * c(0.5 * self.rho, 0.0);
            let chol = p.cholesky().ok_or(Error::Singular {
                context: "ADMM U-step".into(),
                cond: f64::INFINITY,
            })?;
            out.set_column(k, &chol.solve(&q));
        }
        Ok(out)
    }

    fn b_update(&self, u: &CMat, bbar: &RMat, lambda: &CMat) -> Result<RMat> {
        let i = c(0.0, 1.0);
        let m = (u + &self.htil) * i;
        let g = (u - &self.htil) * c(self.y0, 0.0) + lambda / c(self.rho, 0.0);
        let mr = hstack(&linalg::re(&m), &linalg::im(&m));
        let gr = hstack(&linalg::re(&g), &linalg::im(&g));
        let r = &self.l * &mr;
        let gamma1 = gr - &self.l_imy_l * &mr;
        let sol = solve_symfit(&SymFitProblem {
            l_factor: self.l.clone(),
            r_factor: r,
            gamma1,
            gamma2: bbar - &self.l_imy_l,
            rho: self.rho,
            xi: self.xi,
            topology: self.topology.clone(),
        })?;
        Ok(sol.b_i)
    }

    fn augmented_lagrangian(&self, u: &CMat, w: &CMat, r: &CMat, lambda: &CMat) -> f64 {
        let rate = sum_rate(&self.channel_from_u(u), w, 1.0);
        let inner: f64 = lambda.iter().zip(r.iter()).map(|(l, x)| (l.conj() * x).re).sum();
        -rate + inner + 0.5 * self.rho * r.norm_squared()
    }

    /// FP sweeps on `W` alone for a fixed channel.
    fn polish(&self, h: &CMat, mut w: CMat, sweeps: usize) -> CMat {
        let mut prev = sum_rate(h, &w, 1.0);
        for _ in 0..sweeps {
            let (gamma, y) = fp_aux(h, &w, 1.0);
            let next = w_update(h, &gamma, &y, self.p_t);
            let rate = sum_rate(h, &next, 1.0);
            if rate < prev {
                break;
            }
            w = next;
            if rate - prev <= 1e-12 * rate.abs() {
                break;
            }
            prev = rate;
        }
        w
    }
}

fn hstack(a: &RMat, b: &RMat) -> RMat {
    let mut out = RMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

struct Candidate {
    b_i: RMat,
    w: CMat,
    u: CMat,
    rate: f64,
    residual: f64,
}

/// Sum-rate maximization for single-antenna users (`n_r` users).
pub fn optimize_multiuser_admm(
    decomp: &CompactDecomposition,
    topology: &Topology,
    p_t: f64,
    sigma2: f64,
    opts: &AdmmOptions,
) -> Result<MultiuserSolution> {
    opts.validate()?;
    if !(p_t > 0.0 && sigma2 > 0.0) {
        return Err(Error::InvalidParameter("p_t and sigma2 must be positive".into()));
    }
    let n = decomp.n_i();
    if topology.n_i != n {
        return Err(Error::Dimension {
            context: "optimize_multiuser_admm".into(),
            detail: format!("mask is {}x{}, RIS has {n} ports", topology.n_i, topology.n_i),
        });
    }
    let y0 = decomp.y0;
    let inv_sigma = c(1.0 / sigma2.sqrt(), 0.0);
    let htil = decomp.hbar_ri.adjoint();
    let kappa = if htil.norm() > 0.0 { htil.norm() } else { 1.0 };
    let l = linalg::sym_part(&decomp.l_factor());
    let l_imy_l = linalg::sym_part(&(&l * &decomp.im_ybar_ii * &l));
    let mut pb = Problem {
        decomp,
        topology,
        hrt: &decomp.hbar_rt * inv_sigma,
        hit: &decomp.hbar_it * inv_sigma,
        htil,
        kappa,
        y0,
        rho: opts.rho / (y0 * kappa).powi(2),
        xi: opts.xi / (y0 * y0),
        l,
        l_imy_l,
        p_t,
    };

    let rho_cap = pb.rho * 1e6;
    let warmup = (opts.max_iters / 5).min(50);
    // short budgets still need ρ to reach ~10³ρ₀ before the end
    let growth = if opts.rho_growth > 1.0 {
        opts.rho_growth.max(1e3f64.powf(1.0 / (opts.max_iters - warmup).max(1) as f64))
    } else {
        1.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = scale_to_power(&complex_gaussian(&mut rng, decomp.n_t(), decomp.n_r(), 1.0), p_t);
    // start near θ̄ = −iI; θ̄ = I is close to an open circuit, a stationary
    // point when the direct link is blocked
    let mut b_i = RMat::from_fn(n, n, |i, j| {
        let diag = if i == j { y0 } else { 0.0 };
        if topology.allowed(i, j) {
            diag - decomp.im_ybar_ii[(i, j)]
        } else {
            0.0
        }
    });
    let mut state = make_ris_state(decomp, &b_i);
    let mut u = state.theta_bar.adjoint() * &pb.htil;
    let mut lambda = CMat::zeros(n, decomp.n_r());

    let rate0 = sum_rate(&pb.true_channel(&state.theta_bar), &w, 1.0);
    let al0 = pb.augmented_lagrangian(&u, &w, &CMat::zeros(n, decomp.n_r()), &lambda);
    let mut best = Candidate {
        b_i: b_i.clone(),
        w: w.clone(),
        u: u.clone(),
        rate: rate0,
        residual: 0.0,
    };
    let mut trace = vec![AdmmTraceEntry {
        al: al0,
        primal_residual: 0.0,
        sum_rate: rate0,
    }];
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_rate = rate0;
    for it in 1..=opts.max_iters {
        iterations = it;
        for _ in 0..opts.inner_fp {
            let h = pb.channel_from_u(&u);
            let (gamma, y) = fp_aux(&h, &w, 1.0);
            w = w_update(&h, &gamma, &y, p_t);
        }
        u = pb.u_update(&u, &w, &state.bbar_i, &lambda)?;
        b_i = pb.b_update(&u, &state.bbar_i, &lambda)?;
        state = make_ris_state(decomp, &b_i);
        let r = pb.residual(&state.bbar_i, &u);
        let al = pb.augmented_lagrangian(&u, &w, &r, &lambda);
        lambda += &r * c(pb.rho, 0.0);
        let res = pb.rel(&r);
        let rate = sum_rate(&pb.true_channel(&state.theta_bar), &w, 1.0);
        trace.push(AdmmTraceEntry {
            al,
            primal_residual: res,
            sum_rate: rate,
        });
        if !al.is_finite() || al > 10.0 * al0.abs().max(1.0) {
            return Err(Error::AdmmDivergence { iteration: it, value: al });
        }
        if res <= opts.feasibility_tol && rate > best.rate {
            best = Candidate {
                b_i: b_i.clone(),
                w: w.clone(),
                u: u.clone(),
                rate,
                residual: res,
            };
        }
        let change = (rate - prev_rate).abs() / rate.abs().max(f64::MIN_POSITIVE);
        prev_rate = rate;
        if res < opts.tol_primal && change < opts.tol_obj {
            converged = true;
            break;
        }
        if it >= warmup && res > opts.tol_primal {
            pb.rho = (pb.rho * growth).min(rho_cap);
        }
    }
    if !converged {
        warn!(
            "ADMM stopped after {iterations} iterations with residual {:.3e}",
            trace.last().map_or(0.0, |t| t.primal_residual)
        );
    }
    debug!("ADMM best rate {:.6} (initial {:.6})", best.rate, rate0);

    let ris = make_ris_state(decomp, &best.b_i);
    let h = pb.true_channel(&ris.theta_bar);
    let w = pb.polish(&h, best.w, 200);
    Ok(MultiuserSolution {
        sum_rate: sum_rate(&h, &w, 1.0),
        w,
        ris,
        u: best.u,
        primal_residual: best.residual,
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::testutil::coupled_scenario;
    use crate::topology::{make_mask, TopologyKind};

    const P_T: f64 = 0.1;
    const SIGMA2: f64 = 1e-11;

    #[test]
    fn single_user_matched_filter() {
        let mut d = coupled_scenario(1, 3, 2, 1, 0.5);
        d.hbar_ri.fill(c(0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        d.hbar_rt = complex_gaussian(&mut rng, 1, 3, 1e-6);
        let topo = make_mask(TopologyKind::Fully, 4).unwrap();
        let s = optimize_multiuser_admm(&d, &topo, P_T, SIGMA2, &AdmmOptions::default()).unwrap();
        let h = d.hbar_rt.adjoint();
        let expect = (1.0 + P_T * h.norm_squared() / SIGMA2).ln();
        assert!((s.sum_rate - expect).abs() < 1e-9 * expect);
        let mf = &h * c(P_T.sqrt() / h.norm(), 0.0);
        let phase = (mf.adjoint() * &s.w)[(0, 0)];
        let aligned = &s.w * (phase.conj() / phase.norm());
        assert!((aligned - mf).norm() < 1e-6 * P_T.sqrt());
    }

    #[test]
    fn power_budget_and_consistency() {
        let d = coupled_scenario(3, 2, 3, 2, 0.25);
        let topo = make_mask(TopologyKind::Fully, 9).unwrap();
        let s = optimize_multiuser_admm(&d, &topo, P_T, SIGMA2, &AdmmOptions::default()).unwrap();
        assert!(s.w.norm_squared() <= P_T * (1.0 + 1e-10));
        let target = s.ris.theta_bar.adjoint() * d.hbar_ri.adjoint();
        assert!((&s.u - &target).norm() / s.u.norm() < 1e-4);
        let direct = crate::optim::sum_rate(&d.channel(&s.ris), &s.w, SIGMA2);
        assert!((direct - s.sum_rate).abs() < 1e-9 * direct);
    }

    #[test]
    fn improves_over_initialization() {
        let mut better = 0;
        let trials = 20;
        for seed in 0..trials {
            let d = coupled_scenario(100 + seed, 2, 3, 2, 0.5);
            let topo = make_mask(TopologyKind::Fully, 9).unwrap();
            let opts = AdmmOptions {
                seed,
                ..AdmmOptions::default()
            };
            let s = optimize_multiuser_admm(&d, &topo, P_T, SIGMA2, &opts).unwrap();
            // same random precoder with an open-circuited RIS
            let w0 = scale_to_power(&complex_gaussian(&mut ChaCha8Rng::seed_from_u64(seed), 2, 2, 1.0), P_T);
            let open = crate::optim::sum_rate_metric(&d, &RMat::zeros(9, 9), &w0, SIGMA2);
            if s.sum_rate > s.trace[0].sum_rate && s.sum_rate >= open {
                better += 1;
            }
        }
        assert!(better as f64 >= 0.95 * trials as f64, "{better}/{trials}");
    }

    #[test]
    fn banded_mask_respected() {
        let d = coupled_scenario(7, 2, 3, 2, 0.5);
        let topo = make_mask(TopologyKind::Tridiagonal, 9).unwrap();
        let opts = AdmmOptions {
            max_iters: 100,
            ..AdmmOptions::default()
        };
        let s = optimize_multiuser_admm(&d, &topo, P_T, SIGMA2, &opts).unwrap();
        for i in 0..9usize {
            for j in 0..9usize {
                if i.abs_diff(j) > 1 {
                    assert_eq!(s.ris.b_i[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_options() {
        let d = coupled_scenario(1, 1, 2, 1, 0.5);
        let topo = make_mask(TopologyKind::Fully, 4).unwrap();
        let opts = AdmmOptions {
            rho: 0.0,
            ..AdmmOptions::default()
        };
        assert!(optimize_multiuser_admm(&d, &topo, P_T, SIGMA2, &opts).is_err());
    }
}
