//! Optimizers: SISO closed form, single-stream MIMO through SDR, multiuser
//! MISO through ADMM, plus the objective evaluators they share.

mod admm;
mod mimo;
mod recovery;
mod siso;

pub use admm::{optimize_multiuser_admm, AdmmOptions, AdmmTraceEntry, MultiuserSolution};
pub use mimo::{optimize_mimo_single_stream, MimoSolution};
pub use recovery::{recover_ris_state, RECOVERY_TOL};
pub use siso::optimize_siso;

use crate::channels::CompactDecomposition;
use crate::{CMat, RMat};

/// `P_T |gᴴ H w|²`
pub fn receive_power(h: &CMat, w: &CMat, g: &CMat, p_t: f64) -> f64 {
    p_t * (g.adjoint() * h * w)[(0, 0)].norm_sqr()
}

/// Sum rate in nats. Row `k` of `h` is `h_kᴴ`, column `k` of `w` serves
/// user `k`.
pub fn sum_rate(h: &CMat, w: &CMat, sigma2: f64) -> f64 {
    let hw = h * w;
    (0..hw.nrows())
        .map(|k| {
            let total: f64 = hw.row(k).iter().map(|x| x.norm_sqr()).sum::<f64>() + sigma2;
            let sig = hw[(k, k)].norm_sqr();
            (1.0 + sig / (total - sig)).ln()
        })
        .sum()
}

pub fn nats_to_bits(rate: f64) -> f64 {
    rate / std::f64::consts::LN_2
}

/// Largest singular value with its left and right singular vectors.
pub fn top_singular(h: &CMat) -> (f64, CMat, CMat) {
    let svd = h.clone().svd(true, true);
    let (mut k, mut best) = (0, -1.0);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > best {
            best = s;
            k = i;
        }
    }
    let u = svd.u.unwrap().columns(k, 1).into_owned();
    let v = svd.v_t.unwrap().rows(k, 1).adjoint();
    (best, u, v)
}

/// Receive power of a physical susceptance on a given model with the best
/// precoder and combiner, `P_T ‖H(B_I)‖₂²`.
pub fn power_metric(decomp: &CompactDecomposition, b_i: &RMat, p_t: f64) -> f64 {
    let (s, _, _) = top_singular(&decomp.channel_for(b_i));
    p_t * s * s
}

/// Sum rate of `(B_I, W)` on a given model.
pub fn sum_rate_metric(decomp: &CompactDecomposition, b_i: &RMat, w: &CMat, sigma2: f64) -> f64 {
    sum_rate(&decomp.channel_for(b_i), w, sigma2)
}

/// `100 · value / reference` in percent.
pub fn relative_performance(reference: f64, value: f64) -> f64 {
    if reference == 0.0 {
        return if value == 0.0 { 100.0 } else { f64::INFINITY };
    }
    100.0 * value / reference
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::channels::{ChannelModel, CompactDecomposition};
    use crate::coupling::{build_ris_impedance, DipoleGeometry, QuadratureSpec};
    use crate::netparams::{generate_rayleigh_scenario, PortLayout, RayleighSpec, Terminations};
    use crate::CMat;

    /// Far-field scenario with a coupled square array.
    pub fn coupled_scenario(seed: u64, n_t: usize, side: usize, n_r: usize, spacing: f64) -> CompactDecomposition {
        let geom = DipoleGeometry::square_upa(side * side, spacing, 28e9).unwrap();
        let z_ii: CMat = build_ris_impedance(&geom, 50.0, &QuadratureSpec::default()).unwrap();
        let layout = PortLayout::new(n_t, side * side, n_r).unwrap();
        let spec = RayleighSpec::far_field_defaults(50.0);
        let p = generate_rayleigh_scenario(layout, &spec, &z_ii, seed).unwrap();
        let t = Terminations::matched(&layout, 50.0);
        ChannelModel::Exact.decompose(&p, &t).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn identity_channel_power() {
        let h = CMat::identity(2, 2);
        let e1 = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((receive_power(&h, &e1, &e1, 0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_users_equal_power() {
        let (n, p, s2, g) = (3, 2.0, 0.1, 1.7);
        let h = CMat::identity(n, n) * c(g, 0.0);
        let w = CMat::identity(n, n) * c((p / n as f64).sqrt(), 0.0);
        let expect = n as f64 * (1.0 + p * g * g / (n as f64 * s2)).ln();
        assert!((sum_rate(&h, &w, s2) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_precoders_zero_rate() {
        let h = CMat::from_element(2, 3, c(1.0, -0.5));
        assert_eq!(sum_rate(&h, &CMat::zeros(3, 2), 1e-3), 0.0);
    }

    #[test]
    fn relative_performance_cases() {
        assert_eq!(relative_performance(3.0, 3.0), 100.0);
        assert_eq!(relative_performance(3.0, 0.0), 0.0);
        assert!((nats_to_bits(std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }
}
