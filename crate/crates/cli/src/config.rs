//! Experiment config files (TOML).

use std::fmt;
use std::path::PathBuf;

use powvar::harness::{AcceptanceBands, ExperimentPlan};
use powvar::{Functional, ModelSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub model: ModelSpec,
    pub sampling: SamplingBlock,
    #[serde(default)]
    pub lln: Vec<ExperimentBlock>,
    #[serde(default)]
    pub clt: Vec<ExperimentBlock>,
    #[serde(default)]
    pub cov: Vec<ExperimentBlock>,
}

/// Ladder and grid shared by every experiment unless a block overrides it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBlock {
    pub horizon: f64,
    #[serde(default = "default_refine")]
    pub refine: usize,
    /// Explicit step sizes, strictly decreasing.
    pub delta_ladder: Option<Vec<f64>>,
    /// `[k_min, k_max]`: the ladder `Δn = 2^{−k}`, `k = k_min…k_max`.
    pub ladder_exponents: Option<[u32; 2]>,
}

fn default_refine() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub name: String,
    pub functionals: Vec<Functional>,
    pub replicates: usize,
    pub t_eval: Option<f64>,
    pub delta_ladder: Option<Vec<f64>>,
    pub ladder_exponents: Option<[u32; 2]>,
    #[serde(default)]
    pub bands: AcceptanceBands,
    #[serde(default)]
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lln,
    Clt,
    Cov,
}

impl Mode {
    pub fn key(self) -> &'static str {
        match self {
            Mode::Lln => "lln",
            Mode::Clt => "clt",
            Mode::Cov => "cov",
        }
    }
}

/// A config problem, anchored to a line of the source when one is known.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the first header or key that opens `table`, e.g. `model` or `lln`.
fn line_of_table(src: &str, table: &str) -> Option<usize> {
    let plain = format!("[{table}]");
    let array = format!("[[{table}]]");
    let dotted = format!("[{table}.");
    src.lines()
        .position(|l| {
            let l = l.trim_start();
            l.starts_with(&plain) || l.starts_with(&array) || l.starts_with(&dotted)
        })
        .map(|i| i + 1)
}

/// Line of the `[[table]]` header that opens the `index`-th array entry.
fn line_of_array_entry(src: &str, table: &str, index: usize) -> Option<usize> {
    let header = format!("[[{table}]]");
    src.lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == header)
        .nth(index)
        .map(|(i, _)| i + 1)
}

fn ladder(explicit: &Option<Vec<f64>>, exponents: &Option<[u32; 2]>) -> Result<Option<Vec<f64>>, String> {
    match (explicit, exponents) {
        (Some(_), Some(_)) => Err("give either delta_ladder or ladder_exponents, not both".to_string()),
        (Some(l), None) => Ok(Some(l.clone())),
        (None, Some([lo, hi])) => {
            if lo > hi || *hi > 60 {
                return Err(format!("ladder_exponents [{lo}, {hi}] must satisfy lo ≤ hi ≤ 60"));
            }
            Ok(Some((*lo..=*hi).map(|k| (-(k as f64)).exp2()).collect()))
        }
        (None, None) => Ok(None),
    }
}

impl Config {
    pub fn parse(src: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(src, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.model.validate().map_err(|e| ConfigError {
            line: line_of_table(src, "model"),
            message: e.to_string(),
        })?;
        if ladder(&cfg.sampling.delta_ladder, &cfg.sampling.ladder_exponents)
            .map_err(|m| ConfigError {
                line: line_of_table(src, "sampling"),
                message: m,
            })?
            .is_none()
        {
            return Err(ConfigError {
                line: line_of_table(src, "sampling"),
                message: "sampling needs delta_ladder or ladder_exponents".to_string(),
            });
        }
        for mode in [Mode::Lln, Mode::Clt, Mode::Cov] {
            for (i, _) in cfg.blocks(mode).iter().enumerate() {
                let line = line_of_array_entry(src, mode.key(), i);
                let plan = cfg.plan(mode, i).map_err(|message| ConfigError { line, message })?;
                plan.validate().map_err(|e| ConfigError {
                    line,
                    message: format!("[[{}]] {}: {e}", mode.key(), plan_name(&cfg, mode, i)),
                })?;
            }
        }
        Ok(cfg)
    }

    pub fn blocks(&self, mode: Mode) -> &[ExperimentBlock] {
        match mode {
            Mode::Lln => &self.lln,
            Mode::Clt => &self.clt,
            Mode::Cov => &self.cov,
        }
    }

    /// The experiment plan of the `index`-th block of `mode`.
    pub fn plan(&self, mode: Mode, index: usize) -> Result<ExperimentPlan, String> {
        let b = &self.blocks(mode)[index];
        let delta_ladder = match ladder(&b.delta_ladder, &b.ladder_exponents)? {
            Some(l) => l,
            None => ladder(&self.sampling.delta_ladder, &self.sampling.ladder_exponents)?
                .ok_or_else(|| "no Δn ladder".to_string())?,
        };
        Ok(ExperimentPlan {
            model: self.model.clone(),
            functionals: b.functionals.clone(),
            delta_ladder,
            horizon: self.sampling.horizon,
            refine: self.sampling.refine,
            replicates: b.replicates,
            base_seed: self.seed,
            t_eval: b.t_eval.unwrap_or(self.sampling.horizon),
            bands: b.bands.clone(),
            feasible: b.feasible,
        })
    }

    /// Finest step of the shared ladder.
    pub fn finest_delta(&self) -> f64 {
        ladder(&self.sampling.delta_ladder, &self.sampling.ladder_exponents)
            .ok()
            .flatten()
            .and_then(|l| l.last().copied())
            .expect("validated sampling block")
    }
}

fn plan_name(cfg: &Config, mode: Mode, i: usize) -> &str {
    &cfg.blocks(mode)[i].name
}
