//! Numerical check that a band-connected RIS reproduces any channel of the
//! fully connected one.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::experiment::{ris_geometry, trial_seed};
use crate::channels::{make_ris_state, ChannelModel};
use crate::coupling::{build_ris_impedance, QuadratureSpec, DEFAULT_FREQUENCY};
use crate::error::{Error, Result};
use crate::linalg::{random_symmetric, rel_err};
use crate::netparams::{generate_rayleigh_scenario_with, PortLayout, RayleighSpec, Terminations};
use crate::symfit::fit_unitary_map;
use crate::topology::{make_mask, optimal_bandwidth, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop2Row {
    pub trial: usize,
    pub q: usize,
    /// `‖H_band − H_fully‖_F / ‖H_fully‖_F`
    pub mismatch: f64,
}

/// For each trial draw a coupled scenario and a random fully connected
/// susceptance, then fit a band(`q`) susceptance that reproduces `θ̄` on the
/// smaller of the transmit or receive channel subspaces. `q` defaults to the
/// optimal bandwidth.
pub fn validate_prop2(
    n_t: usize,
    n_r: usize,
    n_i: usize,
    q: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<Vec<Prop2Row>> {
    let q = q.unwrap_or_else(|| optimal_bandwidth(n_t, n_r, n_i));
    if q >= n_i {
        return Err(Error::InvalidParameter(format!("band {q} needs more than {n_i} elements")));
    }
    let z0 = 50.0;
    let geom = ris_geometry(n_i, 0.5, DEFAULT_FREQUENCY)?;
    let z_ii = build_ris_impedance(&geom, z0, &QuadratureSpec::default())?;
    let layout = PortLayout::new(n_t, n_i, n_r)?;
    let spec = RayleighSpec::far_field_defaults(z0);
    let term = Terminations::matched(&layout, z0);
    let band = make_mask(TopologyKind::Band(q), n_i)?;
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 0, trial));
            let p = generate_rayleigh_scenario_with(layout, &spec, &z_ii, None, &mut rng)?;
            let d = ChannelModel::Exact.decompose(&p, &term)?;
            let b_full = random_symmetric(&mut rng, n_i, d.y0);
            let full = make_ris_state(&d, &b_full);
            let h_full = d.channel(&full);
            // θ̄ is symmetric, so H̄_RI θ̄ = (θ̄ H̄_RIᵀ)ᵀ
            let a = if n_r < n_t { d.hbar_ri.transpose() } else { d.hbar_it.clone() };
            let b = &full.theta_bar * &a;
            let fit = fit_unitary_map(&d, &band, &a, &b)?;
            let h_band = d.channel_for(&fit.b_i);
            Ok(Prop2Row {
                trial,
                q,
                mismatch: rel_err(&h_band, &h_full),
            })
        })
        .collect()
}

pub fn write_prop2_csv<W: Write>(rows: &[Prop2Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["trial", "q", "mismatch"]).map_err(io)?;
    for r in rows {
        w.write_record([r.trial.to_string(), r.q.to_string(), format!("{:e}", r.mismatch)])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
