//! Monte-Carlo runner and CSV emission.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, RateBase, Scenario, SweepVar, System};
use crate::channels::{ChannelModel, CompactDecomposition};
use crate::coupling::{build_ris_impedance, near_field_transmitter_link, DipoleGeometry, QuadratureSpec};
use crate::error::{Error, Result};
use crate::netparams::{generate_rayleigh_scenario_with, PortLayout, RayleighSpec, Terminations};
use crate::optim::{
    nats_to_bits, optimize_mimo_single_stream, optimize_multiuser_admm, optimize_siso, power_metric, relative_performance,
    sum_rate_metric,
};
use crate::topology::{make_mask, Topology, TopologyKind};
use crate::CMat;

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "sweep_var",
    "sweep_value",
    "trial",
    "model",
    "topology",
    "metric_name",
    "metric_value",
    "relative_pct",
    "wall_ms",
    "failures",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub sweep_var: String,
    pub sweep_value: String,
    /// Trial index, or `None` for the mean row.
    pub trial: Option<usize>,
    pub model: ChannelModel,
    pub topology: String,
    pub metric_name: &'static str,
    pub metric_value: f64,
    pub relative_pct: f64,
    pub wall_ms: f64,
    pub failures: usize,
}

impl Row {
    fn record(&self) -> [String; 11] {
        [
            self.experiment.clone(),
            self.sweep_var.clone(),
            self.sweep_value.clone(),
            self.trial.map_or_else(|| "mean".to_string(), |t| t.to_string()),
            self.model.name().to_string(),
            self.topology.clone(),
            self.metric_name.to_string(),
            format!("{:e}", self.metric_value),
            format!("{:.6}", self.relative_pct),
            format!("{:.3}", self.wall_ms),
            self.failures.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// splitmix64 finalizer over the seed, sweep point and trial index.
pub fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    let mut z = seed
        .wrapping_add((point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Most nearly square `nx × ny` array with `n` elements.
pub fn ris_geometry(n: usize, spacing_wavelengths: f64, frequency: f64) -> Result<DipoleGeometry> {
    let nx = (1..=((n as f64).sqrt() as usize).max(1)).rev().find(|d| n % d == 0).unwrap_or(1);
    let lam = crate::coupling::SPEED_OF_LIGHT / frequency;
    DipoleGeometry::upa(nx, n / nx, spacing_wavelengths * lam, frequency)
}

/// One sweep point with everything shared by its trials.
struct Point {
    value: String,
    n_t: usize,
    n_r: usize,
    topology: Topology,
    z_ii: CMat,
    z_it: Option<CMat>,
}

fn fmt_value(x: f64) -> String {
    format!("{x}")
}

fn points(cfg: &ExperimentConfig) -> Result<Vec<Point>> {
    let var = cfg.sweep_var();
    let count = match var {
        SweepVar::NI => cfg.n_i.len(),
        SweepVar::Spacing => cfg.spacing.len(),
        SweepVar::R => cfg.r.len(),
        SweepVar::Antennas => cfg.antennas.len(),
    };
    let quad = QuadratureSpec::default();
    let kind = TopologyKind::parse(&cfg.topology)?;
    let pick = |v: &[f64], k: usize| if v.len() > 1 { v[k] } else { v[0] };
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let n_i = if cfg.n_i.len() > 1 { cfg.n_i[k] } else { cfg.n_i[0] };
        let (n_t, n_r) = if cfg.antennas.len() > 1 { cfg.antennas[k] } else { cfg.antennas[0] };
        let spacing = pick(&cfg.spacing, k);
        let r = pick(&cfg.r, k);
        let value = match var {
            SweepVar::NI => n_i.to_string(),
            SweepVar::Spacing => fmt_value(spacing),
            SweepVar::R => fmt_value(r),
            SweepVar::Antennas => n_t.to_string(),
        };
        let t0 = Instant::now();
        let geom = ris_geometry(n_i, spacing, cfg.frequency)?;
        let z_ii = build_ris_impedance(&geom, cfg.z0, &quad)?;
        let z_it = match cfg.scenario {
            Scenario::NearfieldTx => Some(near_field_transmitter_link(&geom, r, geom.spacing, n_t, &quad)?),
            Scenario::RayleighFarfield => None,
        };
        info!("{var} = {value}: coupling model ready in {:.1?}", t0.elapsed());
        out.push(Point {
            value,
            n_t,
            n_r,
            topology: make_mask(kind.clone(), n_i)?,
            z_ii,
            z_it,
        });
    }
    Ok(out)
}

/// Optimize on `model_decomp` and score the result on `exact`.
fn solve_and_score(
    cfg: &ExperimentConfig,
    exact: &CompactDecomposition,
    model_decomp: &CompactDecomposition,
    topo: &Topology,
    admm_seed: u64,
) -> Result<f64> {
    let (p_t, s2) = (cfg.p_t(), cfg.sigma2());
    match cfg.system {
        System::Siso => {
            let (state, _) = optimize_siso(model_decomp, topo)?;
            Ok(p_t * exact.channel_for(&state.b_i)[(0, 0)].norm_sqr())
        }
        System::MimoSingleStream => {
            let sol = optimize_mimo_single_stream(model_decomp, topo, p_t)?;
            Ok(power_metric(exact, &sol.ris.b_i, p_t))
        }
        System::MultiuserMiso => {
            let opts = crate::optim::AdmmOptions {
                seed: admm_seed,
                ..cfg.admm.clone()
            };
            let sol = optimize_multiuser_admm(model_decomp, topo, p_t, s2, &opts)?;
            Ok(sum_rate_metric(exact, &sol.ris.b_i, &sol.w, s2))
        }
    }
}

fn metric_name(cfg: &ExperimentConfig) -> &'static str {
    match (cfg.system, cfg.rate_base) {
        (System::MultiuserMiso, RateBase::Bits) => "sum_rate_bits",
        (System::MultiuserMiso, RateBase::Nats) => "sum_rate_nats",
        _ => "receive_power_w",
    }
}

/// Exact-model reference metric and per-model `(metric, wall_ms)`.
type TrialResult = Result<(f64, Vec<Result<(f64, f64)>>)>;

fn run_trial(cfg: &ExperimentConfig, pt: &Point, point_idx: usize, trial: usize) -> TrialResult {
    let seed = trial_seed(cfg.seed, point_idx, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = PortLayout::new(pt.n_t, pt.topology.n_i, pt.n_r)?;
    let spec = RayleighSpec::far_field_defaults(cfg.z0);
    let params = generate_rayleigh_scenario_with(layout, &spec, &pt.z_ii, pt.z_it.as_ref(), &mut rng)?;
    let term = Terminations::matched(&layout, cfg.z0);
    let exact = ChannelModel::Exact.decompose(&params, &term)?;
    let score = |m: ChannelModel| -> Result<(f64, f64)> {
        let t0 = Instant::now();
        let f = if m == ChannelModel::Exact {
            solve_and_score(cfg, &exact, &exact, &pt.topology, seed)?
        } else {
            solve_and_score(cfg, &exact, &m.decompose(&params, &term)?, &pt.topology, seed)?
        };
        let ms = if cfg.timing { t0.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        Ok((f, ms))
    };
    let reference = score(ChannelModel::Exact)?;
    let per_model = cfg
        .models
        .iter()
        .map(|&m| if m == ChannelModel::Exact { Ok(reference) } else { score(m) })
        .collect();
    Ok((reference.0, per_model))
}

/// Run the experiment and return every row in deterministic order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    let body = || -> Result<Vec<Row>> {
        let pts = points(cfg)?;
        let var = cfg.sweep_var().to_string();
        let name = metric_name(cfg);
        let report = |x: f64| match (cfg.system, cfg.rate_base) {
            (System::MultiuserMiso, RateBase::Bits) => nats_to_bits(x),
            _ => x,
        };
        let mut rows = Vec::new();
        for (pi, pt) in pts.iter().enumerate() {
            let results: Vec<TrialResult> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(cfg, pt, pi, t))
                .collect();
            let nm = cfg.models.len();
            let mut sums = vec![(0.0, 0.0, 0.0, 0usize); nm];
            let mut failures = vec![0usize; nm];
            for (t, res) in results.into_iter().enumerate() {
                let (reference, per_model) = match res {
                    Ok(v) => v,
                    Err(e) => {
                        warn!("{var} = {}, trial {t}: reference failed: {e}", pt.value);
                        failures.iter_mut().for_each(|f| *f += 1);
                        continue;
                    }
                };
                for (mi, (&model, r)) in cfg.models.iter().zip(&per_model).enumerate() {
                    match r {
                        Ok((f, ms)) => {
                            let rel = relative_performance(reference, *f);
                            let s = &mut sums[mi];
                            s.0 += report(*f);
                            s.1 += rel;
                            s.2 += ms;
                            s.3 += 1;
                            rows.push(Row {
                                experiment: cfg.experiment.clone(),
                                sweep_var: var.clone(),
                                sweep_value: pt.value.clone(),
                                trial: Some(t),
                                model,
                                topology: cfg.topology.clone(),
                                metric_name: name,
                                metric_value: report(*f),
                                relative_pct: rel,
                                wall_ms: *ms,
                                failures: 0,
                            });
                        }
                        Err(e) => {
                            warn!("{var} = {}, trial {t}, model {}: {e}", pt.value, model.name());
                            failures[mi] += 1;
                        }
                    }
                }
            }
            for (mi, &model) in cfg.models.iter().enumerate() {
                let (f, rel, ms, k) = sums[mi];
                let k = k.max(1) as f64;
                let none = sums[mi].3 == 0;
                rows.push(Row {
                    experiment: cfg.experiment.clone(),
                    sweep_var: var.clone(),
                    sweep_value: pt.value.clone(),
                    trial: None,
                    model,
                    topology: cfg.topology.clone(),
                    metric_name: name,
                    metric_value: if none { f64::NAN } else { f / k },
                    relative_pct: if none { f64::NAN } else { rel / k },
                    wall_ms: ms / k,
                    failures: failures[mi],
                });
            }
        }
        Ok(rows)
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Mean rows only, keyed by `(sweep_value, model)`.
pub fn means(rows: &[Row]) -> Vec<&Row> {
    rows.iter().filter(|r| r.trial.is_none()).collect()
}
