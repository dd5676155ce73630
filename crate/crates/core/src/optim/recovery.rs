use crate::channels::{make_ris_state, CompactDecomposition, RisState};
use crate::error::{Error, Result};
use crate::symfit::fit_unitary_map;
use crate::topology::Topology;
use crate::{CMat, RMat};

/// Relative residual accepted for `θ̄ H̄_IT w = u`.
pub const RECOVERY_TOL: f64 = 1e-7;

/// Find a masked `B_I` whose `θ̄` maps `a = H̄_IT w` onto `b = u`.
pub fn recover_ris_state(u_star: &CMat, w_star: &CMat, decomp: &CompactDecomposition, topology: &Topology) -> Result<RisState> {
    let a = &decomp.hbar_it * w_star;
    let (na, nb) = (a.norm(), u_star.norm());
    if (na - nb).abs() > 1e-8 * na.max(nb) {
        return Err(Error::SymmetryCondition(format!(
            "‖H̄_IT w‖ = {na:.6e} differs from ‖u‖ = {nb:.6e}"
        )));
    }
    let n = decomp.n_i();
    if nb == 0.0 {
        return Ok(make_ris_state(decomp, &RMat::zeros(n, n)));
    }
    let fit = fit_unitary_map(decomp, topology, &a, u_star)?;
    let state = make_ris_state(decomp, &fit.b_i);
    let residual = (&state.theta_bar * &a - u_star).norm() / nb;
    if residual > RECOVERY_TOL {
        return Err(Error::RecoveryResidual {
            residual,
            tolerance: RECOVERY_TOL,
            b_i: fit.b_i,
        });
    }
    Ok(state)
}
