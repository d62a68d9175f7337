//! Flat `key = value` experiment configuration with a JSON mirror.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    UpsilonCheck,
    DozzTable,
    Lemma33,
    SupRatio,
    GreenDecay,
    SpectralCov,
    #[serde(rename = "ratio-32")]
    Ratio32,
    SlopeTheorem,
    BesselDensity,
    WilliamsCheck,
    Plateau,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::UpsilonCheck,
        Experiment::DozzTable,
        Experiment::Lemma33,
        Experiment::SupRatio,
        Experiment::GreenDecay,
        Experiment::SpectralCov,
        Experiment::Ratio32,
        Experiment::SlopeTheorem,
        Experiment::BesselDensity,
        Experiment::WilliamsCheck,
        Experiment::Plateau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::UpsilonCheck => "upsilon-check",
            Experiment::DozzTable => "dozz-table",
            Experiment::Lemma33 => "lemma33",
            Experiment::SupRatio => "sup-ratio",
            Experiment::GreenDecay => "green-decay",
            Experiment::SpectralCov => "spectral-cov",
            Experiment::Ratio32 => "ratio-32",
            Experiment::SlopeTheorem => "slope-theorem",
            Experiment::BesselDensity => "bessel-density",
            Experiment::WilliamsCheck => "williams-check",
            Experiment::Plateau => "plateau",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment `{s}`")))
    }
}

/// Verdict thresholds. Any value other than the default marks the run NON-STANDARD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub reflection_tol: f64,
    pub identity_tol: f64,
    pub density_tol: f64,
    pub mass_tol: f64,
    /// Band `[target·band_lo, target·band_hi]` for the barrier constants.
    pub band_lo: f64,
    pub band_hi: f64,
    pub se_multiplier: f64,
    pub decay_slope: f64,
    pub decay_slope_tol: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub ratio_target: f64,
    pub theorem_slope: f64,
    pub theorem_slope_tol: f64,
    pub plateau_variation: f64,
    pub ks_min_p: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            reflection_tol: 1e-8,
            identity_tol: 1e-12,
            density_tol: 1e-8,
            mass_tol: 1e-10,
            band_lo: 0.90,
            band_hi: 1.05,
            se_multiplier: 3.0,
            decay_slope: -2.0,
            decay_slope_tol: 0.1,
            ratio_lo: 1.2,
            ratio_hi: 1.8,
            ratio_target: 1.5,
            theorem_slope: -1.5,
            theorem_slope_tol: 0.25,
            plateau_variation: 0.30,
            ks_min_p: 1e-3,
        }
    }
}

/// Fully resolved configuration of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub gamma: f64,
    pub mu: f64,
    pub alpha: f64,
    pub r: f64,
    /// Drift `Q − λ` for `williams-check`.
    pub nu: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub n: usize,
    pub seed_base: u64,
    /// Steps per side for path experiments.
    pub steps: usize,
    pub n_theta: usize,
    pub modes: usize,
    pub substeps: usize,
    /// Spectral cutoffs for `spectral-cov`.
    pub cutoff: usize,
    /// Worker count; 0 means the rayon default. Not part of the digest.
    pub threads: usize,
    /// Output directory. Not part of the digest.
    pub out: PathBuf,
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            gamma: 1.0,
            mu: 1.0,
            alpha: 1.2,
            r: 0.5,
            nu: 0.5,
            t: vec![4.0],
            x: vec![0.1],
            b: vec![1.0, 2.0, 3.0, 4.0],
            n: 10_000,
            seed_base: 20_240_101,
            steps: 4096,
            n_theta: 32,
            modes: 15,
            substeps: 8,
            cutoff: 64,
            threads: 0,
            out: PathBuf::from("out"),
            thresholds: Thresholds::default(),
        };
        match experiment {
            Experiment::Lemma33 => {
                c.x = vec![0.05, 0.1, 0.2];
                c.n = 100_000;
            }
            Experiment::SupRatio => c.n = 100_000,
            Experiment::GreenDecay => c.t = vec![2.0, 3.0, 4.0, 5.0],
            Experiment::SpectralCov => {
                c.t = vec![2.0];
                c.n = 20_000;
            }
            Experiment::Ratio32 => {
                c.t = vec![4.0, 6.0, 8.0];
                c.n = 20_000;
            }
            Experiment::SlopeTheorem => {
                c.t = vec![4.0, 6.0, 8.0, 10.0];
                c.n = 20_000;
            }
            Experiment::BesselDensity => {
                c.x = vec![0.0, 0.5, 1.0, 2.0];
                c.b = vec![1.0];
                c.t = vec![10.0];
                c.n = 20_000;
            }
            Experiment::WilliamsCheck => {
                c.t = vec![4.0];
                c.n = 20_000;
                c.steps = 1024;
            }
            Experiment::Plateau => {
                c.t = vec![8.0];
                c.n = 40_000;
            }
            _ => {}
        }
        c
    }

    pub fn is_non_standard(&self) -> bool {
        self.thresholds != Thresholds::default()
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn fmt::Display| CliError::Config(format!("{key} = {value}: {e}"));
        let f = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(&e));
        let u = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(&e));
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<f64>().map_err(|e| bad(&e))).collect()
        };
        match key.trim().replace('-', "_").as_str() {
            "experiment" => self.experiment = value.trim().parse()?,
            "gamma" => self.gamma = f(value)?,
            "mu" => self.mu = f(value)?,
            "alpha" => self.alpha = f(value)?,
            "r" => self.r = f(value)?,
            "nu" => self.nu = f(value)?,
            "t" => self.t = list(value)?,
            "x" => self.x = list(value)?,
            "b" => self.b = list(value)?,
            "n" | "n_samples" => self.n = u(value)?,
            "seed" | "seed_base" => self.seed_base = value.trim().parse().map_err(|e| bad(&e))?,
            "steps" => self.steps = u(value)?,
            "n_theta" => self.n_theta = u(value)?,
            "modes" => self.modes = u(value)?,
            "substeps" => self.substeps = u(value)?,
            "cutoff" => self.cutoff = u(value)?,
            "threads" => self.threads = u(value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "reflection_tol" => self.thresholds.reflection_tol = f(value)?,
            "identity_tol" => self.thresholds.identity_tol = f(value)?,
            "density_tol" => self.thresholds.density_tol = f(value)?,
            "mass_tol" => self.thresholds.mass_tol = f(value)?,
            "band_lo" => self.thresholds.band_lo = f(value)?,
            "band_hi" => self.thresholds.band_hi = f(value)?,
            "se_multiplier" => self.thresholds.se_multiplier = f(value)?,
            "decay_slope" => self.thresholds.decay_slope = f(value)?,
            "decay_slope_tol" => self.thresholds.decay_slope_tol = f(value)?,
            "ratio_lo" => self.thresholds.ratio_lo = f(value)?,
            "ratio_hi" => self.thresholds.ratio_hi = f(value)?,
            "ratio_target" => self.thresholds.ratio_target = f(value)?,
            "theorem_slope" => self.thresholds.theorem_slope = f(value)?,
            "theorem_slope_tol" => self.thresholds.theorem_slope_tol = f(value)?,
            "plateau_variation" => self.thresholds.plateau_variation = f(value)?,
            "ks_min_p" => self.thresholds.ks_min_p = f(value)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Reads a config file: JSON mirror if it ends in `.json`, `key = value` otherwise.
    pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let c: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            return Ok(c);
        }
        let kv = parse_kv(&text)?;
        let exp = match kv.get("experiment") {
            Some(e) => e.parse()?,
            None => experiment.ok_or_else(|| CliError::Config("config names no experiment".into()))?,
        };
        let mut c = Self::defaults(exp);
        c.apply_kv_text(&text)?;
        Ok(c)
    }

    /// Canonical rendering, one `key = value` per line in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries(true) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    fn entries(&self, with_local: bool) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let th = &self.thresholds;
        let mut e = vec![
            ("experiment", self.experiment.to_string()),
            ("gamma", format!("{:e}", self.gamma)),
            ("mu", format!("{:e}", self.mu)),
            ("alpha", format!("{:e}", self.alpha)),
            ("r", format!("{:e}", self.r)),
            ("nu", format!("{:e}", self.nu)),
            ("t", list(&self.t)),
            ("x", list(&self.x)),
            ("b", list(&self.b)),
            ("n", self.n.to_string()),
            ("seed_base", self.seed_base.to_string()),
            ("steps", self.steps.to_string()),
            ("n_theta", self.n_theta.to_string()),
            ("modes", self.modes.to_string()),
            ("substeps", self.substeps.to_string()),
            ("cutoff", self.cutoff.to_string()),
            ("reflection_tol", format!("{:e}", th.reflection_tol)),
            ("identity_tol", format!("{:e}", th.identity_tol)),
            ("density_tol", format!("{:e}", th.density_tol)),
            ("mass_tol", format!("{:e}", th.mass_tol)),
            ("band_lo", format!("{:e}", th.band_lo)),
            ("band_hi", format!("{:e}", th.band_hi)),
            ("se_multiplier", format!("{:e}", th.se_multiplier)),
            ("decay_slope", format!("{:e}", th.decay_slope)),
            ("decay_slope_tol", format!("{:e}", th.decay_slope_tol)),
            ("ratio_lo", format!("{:e}", th.ratio_lo)),
            ("ratio_hi", format!("{:e}", th.ratio_hi)),
            ("ratio_target", format!("{:e}", th.ratio_target)),
            ("theorem_slope", format!("{:e}", th.theorem_slope)),
            ("theorem_slope_tol", format!("{:e}", th.theorem_slope_tol)),
            ("plateau_variation", format!("{:e}", th.plateau_variation)),
            ("ks_min_p", format!("{:e}", th.ks_min_p)),
        ];
        if with_local {
            e.push(("threads", self.threads.to_string()));
            e.push(("out", self.out.display().to_string()));
        }
        e
    }

    /// First 16 hex digits of SHA-256 over the canonical rendering, `threads` and `out` excluded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries(false) {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses `key = value` text into a map without interpreting the keys.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip_preserves_digest() {
        let mut c = ExperimentConfig::defaults(Experiment::Ratio32);
        c.set("t", "4, 6,8").unwrap();
        c.set("alpha", "1.1").unwrap();
        let mut back = ExperimentConfig::defaults(Experiment::UpsilonCheck);
        back.apply_kv_text(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let json: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(json, c);
    }

    #[test]
    fn digest_ignores_local_knobs() {
        let a = ExperimentConfig::defaults(Experiment::Lemma33);
        let mut b = a.clone();
        b.threads = 4;
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.seed_base += 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn rejects_unknown_keys_and_experiments() {
        let mut c = ExperimentConfig::defaults(Experiment::Lemma33);
        assert!(c.set("colour", "blue").is_err());
        assert!(c.set("n", "-3").is_err());
        assert!("lemma34".parse::<Experiment>().is_err());
        assert!(c.apply_kv_text("gamma 1.0").is_err());
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn thresholds_flag_non_standard() {
        let mut c = ExperimentConfig::defaults(Experiment::Ratio32);
        assert!(!c.is_non_standard());
        c.set("ratio_lo", "1.0").unwrap();
        assert!(c.is_non_standard());
    }
}
