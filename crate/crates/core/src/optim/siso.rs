use crate::channels::{make_ris_state, CompactDecomposition, RisState};
use crate::error::{Error, Result};
use crate::linalg::c;
use crate::optim::recover_ris_state;
use crate::topology::Topology;
use crate::{CMat, RMat, C64};

/// Channel-gain maximization for a single-antenna link. The target
/// `u = θ̄ h̄_IT` aligns the RIS path with the direct path, then the state is
/// recovered on the mask.
pub fn optimize_siso(decomp: &CompactDecomposition, topology: &Topology) -> Result<(RisState, f64)> {
    if decomp.n_t() != 1 || decomp.n_r() != 1 {
        return Err(Error::Dimension {
            context: "optimize_siso".into(),
            detail: format!("needs n_t = n_r = 1, got {} and {}", decomp.n_t(), decomp.n_r()),
        });
    }
    let n = decomp.n_i();
    let h_rt = decomp.hbar_rt[(0, 0)];
    let (ri_norm, it_norm) = (decomp.hbar_ri.norm(), decomp.hbar_it.norm());
    let state = if ri_norm == 0.0 || it_norm == 0.0 {
        make_ris_state(decomp, &RMat::zeros(n, n))
    } else {
        let phase = if h_rt == C64::new(0.0, 0.0) { c(1.0, 0.0) } else { h_rt / h_rt.norm() };
        let u = decomp.hbar_ri.adjoint() * (phase * it_norm / ri_norm);
        let w = CMat::from_element(1, 1, c(1.0, 0.0));
        recover_ris_state(&u, &w, decomp, topology)?
    };
    let gain = decomp.channel(&state)[(0, 0)].norm_sqr();
    Ok((state, gain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::testutil::coupled_scenario;
    use crate::symfit::unpack_free_variables;
    use crate::topology::{make_mask, TopologyKind};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn closed_form(d: &CompactDecomposition) -> f64 {
        (d.hbar_rt[(0, 0)].norm() + d.hbar_ri.norm() * d.hbar_it.norm()).powi(2)
    }

    #[test]
    fn gain_matches_formula_on_both_masks() {
        for seed in 0..5 {
            let d = coupled_scenario(seed, 1, 4, 1, 0.25);
            for kind in [TopologyKind::Fully, TopologyKind::Tridiagonal] {
                let topo = make_mask(kind, 16).unwrap();
                let (_, gain) = optimize_siso(&d, &topo).unwrap();
                assert!((gain - closed_form(&d)).abs() < 1e-8 * gain);
            }
        }
    }

    #[test]
    fn dead_ris_path() {
        let mut d = coupled_scenario(9, 1, 2, 1, 0.5);
        d.hbar_ri.fill(c(0.0, 0.0));
        d.hbar_rt[(0, 0)] = c(0.3, 0.4);
        let topo = make_mask(TopologyKind::Fully, 4).unwrap();
        let (s, gain) = optimize_siso(&d, &topo).unwrap();
        assert!((gain - 0.25).abs() < 1e-15);
        assert_eq!(s.b_i, RMat::zeros(4, 4));
    }

    #[test]
    fn dominates_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = coupled_scenario(11, 1, 3, 1, 0.25);
        let topo = make_mask(TopologyKind::Tridiagonal, 9).unwrap();
        let (_, gain) = optimize_siso(&d, &topo).unwrap();
        let nf = topo.free_pairs().len();
        let scale = d.y0;
        for k in 0..10_000 {
            let s = scale * 10f64.powf(-2.0 + 3.0 * (k as f64 / 10_000.0));
            let x = DVector::from_fn(nf, |_, _| s * rng.sample::<f64, _>(StandardNormal));
            let b = unpack_free_variables(&x, &topo).unwrap();
            let g = d.channel_for(&b)[(0, 0)].norm_sqr();
            assert!(g <= gain * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rejects_mimo() {
        let d = coupled_scenario(1, 2, 2, 1, 0.5);
        let topo = make_mask(TopologyKind::Fully, 4).unwrap();
        assert!(optimize_siso(&d, &topo).is_err());
    }
}
