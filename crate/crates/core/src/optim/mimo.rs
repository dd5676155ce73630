use log::warn;

use crate::channels::{make_ris_state, CompactDecomposition, RisState};
use crate::error::Result;
use crate::linalg::c;
use crate::optim::{recover_ris_state, top_singular};
use crate::sdpsolver::{self, build_sdp_reduced, rank_one_extract, DEFAULT_GAP_TOL, DEFAULT_RANK_TOL};
use crate::topology::{optimal_bandwidth, Topology, TopologyKind};
use crate::{CMat, RMat};

#[derive(Debug, Clone)]
pub struct MimoSolution {
    pub w: CMat,
    pub g: CMat,
    pub ris: RisState,
    /// `P_T |gᴴ H w|²`
    pub receive_power: f64,
    /// `P_T` times the dual bound of the relaxation.
    pub certificate: f64,
}

/// Receive-power maximization for one stream: reduced SDR, rank-one
/// extraction, lift, RIS-state recovery and matched combining.
pub fn optimize_mimo_single_stream(decomp: &CompactDecomposition, topology: &Topology, p_t: f64) -> Result<MimoSolution> {
    let (n_t, n_i, n_r) = (decomp.n_t(), decomp.n_i(), decomp.n_r());
    let q_opt = optimal_bandwidth(n_t, n_r, n_i);
    let covers = topology.is_fully()
        || matches!(topology.kind, TopologyKind::Band(q) | TopologyKind::Generalized { q, .. } if q >= q_opt);
    if !covers {
        warn!("topology {} is narrower than band {q_opt}; recovery may fail", topology.kind);
    }
    let (ris, certificate) = if decomp.hbar_ri.norm() == 0.0 || decomp.hbar_it.norm() == 0.0 {
        let ris = make_ris_state(decomp, &RMat::zeros(n_i, n_i));
        let (s, _, _) = top_singular(&decomp.channel(&ris));
        (ris, s * s)
    } else {
        let (sdp, lift) = build_sdp_reduced(decomp)?;
        let sol = sdpsolver::solve(&sdp, DEFAULT_GAP_TOL)?;
        let x = rank_one_extract(&sdp, &sol.x, DEFAULT_RANK_TOL)?;
        let (w, u) = lift.lift(&x);
        let w = &w / c(w.norm(), 0.0);
        let target = (&decomp.hbar_it * &w).norm();
        let u = if u.norm() > 0.0 { &u * c(target / u.norm(), 0.0) } else { u };
        (recover_ris_state(&u, &w, decomp, topology)?, sol.dual_value)
    };
    let (s, g, w) = top_singular(&decomp.channel(&ris));
    Ok(MimoSolution {
        w,
        g,
        ris,
        receive_power: p_t * s * s,
        certificate: p_t * certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::testutil::coupled_scenario;
    use crate::optim::{optimize_siso, receive_power};
    use crate::symfit::unpack_free_variables;
    use crate::topology::make_mask;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn power_meets_certificate() {
        for seed in 0..4 {
            let d = coupled_scenario(seed, 2, 3, 2, 0.25);
            let topo = make_mask(TopologyKind::Band(3), 9).unwrap();
            let s = optimize_mimo_single_stream(&d, &topo, 0.1).unwrap();
            assert!((s.w.norm() - 1.0).abs() < 1e-12 && (s.g.norm() - 1.0).abs() < 1e-12);
            let p = receive_power(&d.channel(&s.ris), &s.w, &s.g, 0.1);
            assert!((p - s.receive_power).abs() < 1e-10 * p);
            assert!((s.receive_power - s.certificate).abs() < 1e-6 * s.certificate);
        }
    }

    #[test]
    fn scalar_link_matches_siso() {
        for seed in 0..4 {
            let d = coupled_scenario(20 + seed, 1, 3, 1, 0.5);
            let topo = make_mask(TopologyKind::Tridiagonal, 9).unwrap();
            let (_, gain) = optimize_siso(&d, &topo).unwrap();
            let s = optimize_mimo_single_stream(&d, &topo, 1.0).unwrap();
            assert!((s.receive_power - gain).abs() < 1e-8 * gain);
        }
    }

    #[test]
    fn inert_ris_uses_direct_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = coupled_scenario(5, 2, 2, 3, 0.5);
        d.hbar_ri.fill(c(0.0, 0.0));
        d.hbar_rt = crate::linalg::complex_gaussian(&mut rng, 3, 2, 1.0);
        let topo = make_mask(TopologyKind::Fully, 4).unwrap();
        let s = optimize_mimo_single_stream(&d, &topo, 2.0).unwrap();
        let smax = d.hbar_rt.clone().singular_values().max();
        assert!((s.receive_power - 2.0 * smax * smax).abs() < 1e-12 * s.receive_power);
    }

    #[test]
    fn dominates_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = coupled_scenario(6, 2, 2, 2, 0.5);
        let topo = make_mask(TopologyKind::Band(3), 4).unwrap();
        let s = optimize_mimo_single_stream(&d, &topo, 1.0).unwrap();
        let nf = topo.free_pairs().len();
        let mut best = 0.0f64;
        for k in 0..100_000 {
            let sc = d.y0 * 10f64.powf(-2.0 + 3.0 * ((k % 1000) as f64 / 1000.0));
            let x = DVector::from_fn(nf, |_, _| sc * rng.sample::<f64, _>(StandardNormal));
            let b = unpack_free_variables(&x, &topo).unwrap();
            let (sv, _, _) = top_singular(&d.channel_for(&b));
            best = best.max(sv * sv);
        }
        assert!(s.receive_power >= best * (1.0 - 1e-9));
    }
}
