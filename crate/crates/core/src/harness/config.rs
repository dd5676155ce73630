//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::optim::AdmmOptions;
use crate::topology::TopologyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// i.i.d. Gaussian RIS links.
    RayleighFarfield,
    /// Transmit dipoles at height `r·λ` above the array; receive side Rayleigh.
    NearfieldTx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Siso,
    MimoSingleStream,
    MultiuserMiso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateBase {
    Nats,
    Bits,
}

/// Which list-valued key is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    NI,
    Spacing,
    R,
    /// `n_t = n_r`
    Antennas,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NI => "n_i",
            Self::Spacing => "spacing",
            Self::R => "r",
            Self::Antennas => "antennas",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub scenario: Scenario,
    pub system: System,
    /// Transmit/receive antenna counts; more than one value sweeps `n_t = n_r`.
    pub antennas: Vec<(usize, usize)>,
    pub n_i: Vec<usize>,
    /// Element spacing in wavelengths.
    pub spacing: Vec<f64>,
    /// Transmitter height in wavelengths (near-field scenario only).
    pub r: Vec<f64>,
    pub models: Vec<ChannelModel>,
    pub topology: String,
    pub p_t_dbm: f64,
    pub sigma2_dbm: f64,
    pub frequency: f64,
    pub z0: f64,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Record wall-clock time per optimization (breaks byte-identical output).
    pub timing: bool,
    pub rate_base: RateBase,
    pub admm: AdmmOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "experiment".into(),
            scenario: Scenario::RayleighFarfield,
            system: System::Siso,
            antennas: vec![(1, 1)],
            n_i: vec![16],
            spacing: vec![0.5],
            r: vec![1.0],
            models: vec![ChannelModel::Exact, ChannelModel::App2, ChannelModel::App3],
            topology: "fully".into(),
            p_t_dbm: 20.0,
            sigma2_dbm: -80.0,
            frequency: crate::coupling::DEFAULT_FREQUENCY,
            z0: 50.0,
            trials: 10,
            seed: 1,
            output: None,
            threads: None,
            timing: false,
            rate_base: RateBase::Bits,
            admm: AdmmOptions::default(),
        }
    }
}

/// Watts from dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("bad value '{s}' for '{key}'"))))
        .collect()
}

fn scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Apply one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = v.to_string(),
            "scenario" => {
                self.scenario = match v {
                    "rayleigh-farfield" => Scenario::RayleighFarfield,
                    "nearfield-tx" => Scenario::NearfieldTx,
                    _ => return Err(Error::Config(format!("unknown scenario '{v}'"))),
                }
            }
            "system" => {
                self.system = match v {
                    "siso" => System::Siso,
                    "mimo-single-stream" => System::MimoSingleStream,
                    "multiuser-miso" => System::MultiuserMiso,
                    _ => return Err(Error::Config(format!("unknown system '{v}'"))),
                }
            }
            "n_t" => {
                let n: usize = scalar(key, v)?;
                for a in &mut self.antennas {
                    a.0 = n;
                }
            }
            "n_r" => {
                let n: usize = scalar(key, v)?;
                for a in &mut self.antennas {
                    a.1 = n;
                }
            }
            "antennas" => self.antennas = list::<usize>(key, v)?.into_iter().map(|n| (n, n)).collect(),
            "n_i" => self.n_i = list(key, v)?,
            "spacing" => self.spacing = list(key, v)?,
            "r" => self.r = list(key, v)?,
            "models" => {
                self.models = v
                    .split(',')
                    .map(|s| ChannelModel::parse(s.trim()))
                    .collect::<Result<_>>()?;
            }
            "topology" => self.topology = v.to_string(),
            "p_t_dbm" => self.p_t_dbm = scalar(key, v)?,
            "sigma2_dbm" => self.sigma2_dbm = scalar(key, v)?,
            "frequency" => self.frequency = scalar(key, v)?,
            "z0" => self.z0 = scalar(key, v)?,
            "trials" => self.trials = scalar(key, v)?,
            "seed" => self.seed = scalar(key, v)?,
            "output" => self.output = Some(PathBuf::from(v)),
            "threads" => self.threads = Some(scalar(key, v)?),
            "timing" => self.timing = scalar(key, v)?,
            "rate_base" => {
                self.rate_base = match v {
                    "nats" => RateBase::Nats,
                    "bits" => RateBase::Bits,
                    _ => return Err(Error::Config(format!("rate_base must be nats or bits, got '{v}'"))),
                }
            }
            "admm_rho" => self.admm.rho = scalar(key, v)?,
            "admm_xi" => self.admm.xi = scalar(key, v)?,
            "admm_max_iters" => self.admm.max_iters = scalar(key, v)?,
            "admm_tol_primal" => self.admm.tol_primal = scalar(key, v)?,
            "admm_tol_obj" => self.admm.tol_obj = scalar(key, v)?,
            "admm_inner_fp" => self.admm.inner_fp = scalar(key, v)?,
            "admm_rho_growth" => self.admm.rho_growth = scalar(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Defaults, then the file, then overrides in order.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        let pairs = parse_pairs(text)?;
        // scalar antenna counts must not be clobbered by a later list
        if let Some(v) = pairs.get("antennas") {
            cfg.set("antennas", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k.as_str() != "antennas") {
            cfg.set(k, v)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.trials == 0 {
            return err("trials must be at least 1");
        }
        if self.n_i.is_empty() || self.spacing.is_empty() || self.r.is_empty() || self.antennas.is_empty() {
            return err("sweep lists must be nonempty");
        }
        if self.models.is_empty() {
            return err("at least one model is required");
        }
        if self.n_i.iter().any(|&n| n == 0) || self.antennas.iter().any(|&(t, r)| t == 0 || r == 0) {
            return err("dimensions must be positive");
        }
        if self.spacing.iter().chain(&self.r).any(|&x| !(x > 0.0)) || !(self.frequency > 0.0) || !(self.z0 > 0.0) {
            return err("spacing, r, frequency and z0 must be positive");
        }
        if self.system == System::Siso && self.antennas.iter().any(|&a| a != (1, 1)) {
            return err("siso needs n_t = n_r = 1");
        }
        TopologyKind::parse(&self.topology)?;
        let multi = [self.n_i.len(), self.spacing.len(), self.r.len(), self.antennas.len()]
            .iter()
            .filter(|&&l| l > 1)
            .count();
        if multi > 1 {
            return err("only one of n_i, spacing, r, antennas may be a list");
        }
        if self.scenario == Scenario::RayleighFarfield && self.r.len() > 1 {
            return err("r is only swept in the nearfield-tx scenario");
        }
        Ok(())
    }

    pub fn sweep_var(&self) -> SweepVar {
        if self.spacing.len() > 1 {
            SweepVar::Spacing
        } else if self.r.len() > 1 {
            SweepVar::R
        } else if self.antennas.len() > 1 {
            SweepVar::Antennas
        } else {
            SweepVar::NI
        }
    }

    pub fn p_t(&self) -> f64 {
        dbm_to_watts(self.p_t_dbm)
    }

    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(self.sigma2_dbm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-25);
        assert!((watts_to_dbm(0.1) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn parse_with_overrides() {
        let text = "# fig 2\nsystem = multiuser-miso\nn_t = 4\nn_r = 4 # users\nn_i = 16, 36,64\nmodels = exact,app3\n";
        let cfg = ExperimentConfig::from_text(text, &[("trials".into(), "3".into())]).unwrap();
        assert_eq!(cfg.system, System::MultiuserMiso);
        assert_eq!(cfg.antennas, vec![(4, 4)]);
        assert_eq!(cfg.n_i, vec![16, 36, 64]);
        assert_eq!(cfg.models, vec![ChannelModel::Exact, ChannelModel::App3]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.sweep_var(), SweepVar::NI);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_text("trials = 0", &[]).is_err());
        assert!(ExperimentConfig::from_text("colour = red", &[]).is_err());
        assert!(ExperimentConfig::from_text("n_i = 16,64\nspacing = 0.25,0.5", &[]).is_err());
        assert!(ExperimentConfig::from_text("novalue", &[]).is_err());
        assert!(ExperimentConfig::from_text("n_t = 2", &[]).is_err());
        assert!(ExperimentConfig::from_text("topology = ring", &[]).is_err());
    }
}
