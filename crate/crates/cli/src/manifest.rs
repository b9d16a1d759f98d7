//! Plain `key = value` run manifests written next to every sample run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use diffmel_core::schedule::ScheduleKind;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Analytic,
    Toy,
    Zero,
}

impl PredictorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::Analytic => "analytic",
            PredictorKind::Toy => "toy",
            PredictorKind::Zero => "zero",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(PredictorKind::Analytic),
            "toy" => Ok(PredictorKind::Toy),
            "zero" => Ok(PredictorKind::Zero),
            other => Err(format!(
                "unknown predictor '{other}' (analytic | toy | zero)"
            )),
        }
    }
}

/// Everything needed to reproduce a sample run, plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub schedule_kind: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    pub num_steps: usize,
    pub schedule_file: Option<PathBuf>,
    pub gamma: usize,
    pub eta: f64,
    pub seed: u64,
    pub predictor: PredictorKind,
    pub params: Option<PathBuf>,
    pub channels: usize,
    pub frames: usize,
    pub chains: usize,
    pub parallel: bool,
    pub mu: f64,
    pub s: f64,
    pub label: Option<usize>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// `(phase, seconds)` in execution order.
    pub phases: Vec<(String, f64)>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".into())
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# diffmel run manifest\n");
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("schedule_kind", self.schedule_kind.to_string());
        kv("beta_start", format!("{:?}", self.beta_start));
        kv("beta_end", format!("{:?}", self.beta_end));
        kv("num_steps", self.num_steps.to_string());
        kv("schedule_file", opt_path(&self.schedule_file));
        kv("gamma", self.gamma.to_string());
        kv("eta", format!("{:?}", self.eta));
        kv("seed", self.seed.to_string());
        kv("predictor", self.predictor.as_str().into());
        kv("params", opt_path(&self.params));
        kv("channels", self.channels.to_string());
        kv("frames", self.frames.to_string());
        kv("chains", self.chains.to_string());
        kv("parallel", self.parallel.to_string());
        kv("mu", format!("{:?}", self.mu));
        kv("s", format!("{:?}", self.s));
        kv(
            "label",
            self.label
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-".into()),
        );
        kv("timestamp", self.timestamp.to_string());
        for (phase, secs) in &self.phases {
            kv(&format!("wall_clock.{phase}"), format!("{secs:.6}"));
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Manifest(format!("line {}: expected key = value", n + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| -> CliResult<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| CliError::Manifest(format!("missing key '{key}'")))
        };
        fn num<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
            v.parse()
                .map_err(|_| CliError::Manifest(format!("bad value for '{key}': {v}")))
        }
        let path = |v: &str| (v != "-").then(|| PathBuf::from(v));

        Ok(Self {
            schedule_kind: get("schedule_kind")?.parse().map_err(CliError::Core)?,
            beta_start: num("beta_start", get("beta_start")?)?,
            beta_end: num("beta_end", get("beta_end")?)?,
            num_steps: num("num_steps", get("num_steps")?)?,
            schedule_file: path(get("schedule_file")?),
            gamma: num("gamma", get("gamma")?)?,
            eta: num("eta", get("eta")?)?,
            seed: num("seed", get("seed")?)?,
            predictor: get("predictor")?.parse().map_err(CliError::Manifest)?,
            params: path(get("params")?),
            channels: num("channels", get("channels")?)?,
            frames: num("frames", get("frames")?)?,
            chains: num("chains", get("chains")?)?,
            parallel: num("parallel", get("parallel")?)?,
            mu: num("mu", get("mu")?)?,
            s: num("s", get("s")?)?,
            label: match get("label")? {
                "-" => None,
                v => Some(num("label", v)?),
            },
            timestamp: num("timestamp", get("timestamp")?)?,
            phases: pairs
                .iter()
                .filter_map(|(k, v)| k.strip_prefix("wall_clock.").map(|p| (p, v)))
                .map(|(p, v)| Ok((p.to_string(), num::<f64>(p, v)?)))
                .collect::<CliResult<_>>()?,
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        Self::parse(&text)
    }
}
