//! Fast invariant checks runnable from the CLI.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::experiment::ris_geometry;
use super::prop2::validate_prop2;
use crate::channels::{channel_exact, channel_explicit, make_ris_state, ChannelModel};
use crate::coupling::{build_ris_impedance, QuadratureSpec, DEFAULT_FREQUENCY};
use crate::error::Result;
use crate::linalg::{asymmetry, random_symmetric, rel_err};
use crate::netparams::{generate_rayleigh_scenario_with, PortLayout, RayleighSpec, Terminations};
use crate::optim::optimize_siso;
use crate::sdpsolver::{build_sdp_full, build_sdp_reduced, solve, DEFAULT_GAP_TOL};
use crate::topology::{make_mask, TopologyKind};
use crate::CMat;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value against the threshold.
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64) -> Check {
    Check {
        name,
        passed: worst.is_finite() && worst < limit,
        detail: format!("worst {worst:.3e} (limit {limit:.0e})"),
    }
}

/// Small-instance versions of the library invariants.
pub fn selftest() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n_t, n_i, n_r) = (2, 6, 2);
    let geom = ris_geometry(n_i, 0.25, DEFAULT_FREQUENCY)?;
    let z_ii = build_ris_impedance(&geom, 50.0, &QuadratureSpec::default())?;
    let layout = PortLayout::new(n_t, n_i, n_r)?;
    let spec = RayleighSpec::far_field_defaults(50.0);
    let term = Terminations::matched(&layout, 50.0);

    let (mut equiv, mut min_eig, mut unitary, mut collapse, mut sdp, mut siso) =
        (0.0f64, f64::INFINITY, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let p = generate_rayleigh_scenario_with(layout, &spec, &z_ii, None, &mut rng)?;
        let d = ChannelModel::Exact.decompose(&p, &term)?;
        min_eig = min_eig.min(d.min_eig);
        let b = random_symmetric(&mut rng, n_i, d.y0);
        let h = channel_exact(&p, &term, &b)?;
        equiv = equiv
            .max(rel_err(&channel_explicit(&p, &term, &b)?, &h))
            .max(rel_err(&d.channel_for(&b), &h));
        let s = make_ris_state(&d, &b);
        let dev = (s.theta_bar.adjoint() * &s.theta_bar - CMat::identity(n_i, n_i)).norm();
        unitary = unitary.max(dev).max(asymmetry(&s.theta_bar));
        for m in [ChannelModel::App1, ChannelModel::App2, ChannelModel::App3] {
            let (pi, ti) = m.impose(&p, &term);
            collapse = collapse.max(rel_err(&m.channel(&p, &term, &b)?, &channel_exact(&pi, &ti, &b)?));
        }
        let (full, _) = build_sdp_full(&d)?;
        let (red, _) = build_sdp_reduced(&d)?;
        let (vf, vr) = (solve(&full, DEFAULT_GAP_TOL)?.value, solve(&red, DEFAULT_GAP_TOL)?.value);
        sdp = sdp.max((vf - vr).abs() / vf.abs());
    }
    let siso_layout = PortLayout::new(1, n_i, 1)?;
    let siso_term = Terminations::matched(&siso_layout, 50.0);
    let tri = make_mask(TopologyKind::Tridiagonal, n_i)?;
    for _ in 0..10 {
        let p = generate_rayleigh_scenario_with(siso_layout, &spec, &z_ii, None, &mut rng)?;
        let d = ChannelModel::Exact.decompose(&p, &siso_term)?;
        let (_, gain) = optimize_siso(&d, &tri)?;
        let bound = (d.hbar_rt[(0, 0)].norm() + d.hbar_ri.norm() * d.hbar_it.norm()).powi(2);
        siso = siso.max((gain - bound).abs() / bound);
    }
    let prop2 = validate_prop2(2, 2, 8, None, 10, 7)?
        .iter()
        .map(|r| r.mismatch)
        .fold(0.0, f64::max);

    Ok(vec![
        check("exact = explicit = compact", equiv, 1e-10),
        Check {
            name: "reduced RIS admittance PD",
            passed: min_eig > 0.0,
            detail: format!("min eigenvalue {min_eig:.3e}"),
        },
        check("virtual scattering unitary and symmetric", unitary, 1e-10),
        check("approximation collapse chain", collapse, 1e-10),
        check("full vs reduced SDP value", sdp, 1e-8),
        check("SISO tridiagonal closed form", siso, 1e-8),
        check("optimal band reproduces fully connected", prop2, 1e-7),
    ])
}
