//! Experiment configuration: one JSON file with a strict schema. Unknown
//! keys are rejected; command-line flags only override the scalar fields
//! (seed, replicas, workers, output directory).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use animalia_core::animal_model::SizeFunction;
use animalia_core::environment::DisorderSpec;
use animalia_core::lattice::Region;
use animalia_core::models::ModelSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
}

impl RegionSpec {
    pub fn to_region(&self) -> anyhow::Result<Region> {
        Ok(Region::new(&self.lo, &self.hi)?)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub t0: f64,
    pub t1: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub l: i32,
    pub t_height: f64,
}

fn default_pad() -> f64 {
    10.0
}

fn default_z() -> f64 {
    1.96
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CommandSpec {
    /// Draw exact samples of the invariant measure at time zero; emits the
    /// first sample as a sparse animal list plus an occupancy table over
    /// the replicas. Optionally dumps one free-process window realization.
    Sample {
        #[serde(default)]
        lambda: Option<RegionSpec>,
        #[serde(default)]
        dump_free_process: Option<WindowSpec>,
    },
    /// Clan tail table for the point (x, 0) with fitted decay slopes.
    ClanStats {
        x: Vec<i32>,
        tl_thresholds: Vec<f64>,
        sd_thresholds: Vec<f64>,
        /// Exponent for the ln^q(1+T) fit column; defaults to the
        /// feasibility solver's q = 1/ν for the model dimension.
        #[serde(default)]
        q: Option<f64>,
        /// Also dump the first replica's clan in the cylinder text format.
        #[serde(default)]
        dump_first_clan: bool,
    },
    /// Connectivity estimates from (x, t_x) to sites at the given
    /// distances along an axis, at time t_y.
    Connectivity {
        x: Vec<i32>,
        t_x: f64,
        t_y: f64,
        distances: Vec<i32>,
        #[serde(default)]
        axis: usize,
        #[serde(default)]
        in_box: Option<BoxSpec>,
        #[serde(default = "default_pad")]
        pad: f64,
    },
    /// Regularity verdicts for a list of sites.
    Regularity {
        sites: Vec<Vec<i32>>,
        m: f64,
        l: i32,
        /// Box height; defaults to exp(l^ν) with ν from the feasibility
        /// solver.
        #[serde(default)]
        t_height: Option<f64>,
        #[serde(default = "default_z")]
        z: f64,
    },
    /// Parameter feasibility plus the scaled-sequence report; empirical
    /// good-probability rows are filled for simulatable scales.
    Multiscale {
        #[serde(default)]
        a: Option<f64>,
        l0: f64,
        #[serde(default)]
        scales: Option<u32>,
        #[serde(default)]
        m: Option<f64>,
        #[serde(default)]
        env_replicas: Option<u32>,
        #[serde(default)]
        mc_replicas: Option<u32>,
    },
    /// Disorder diagnostics and the hypothesis report.
    DisorderCheck {
        epsilon: f64,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        size_fn: SizeFunction,
    },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Sample { .. } => "sample",
            CommandSpec::ClanStats { .. } => "clan-stats",
            CommandSpec::Connectivity { .. } => "connectivity",
            CommandSpec::Regularity { .. } => "regularity",
            CommandSpec::Multiscale { .. } => "multiscale",
            CommandSpec::DisorderCheck { .. } => "disorder-check",
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_replicas() -> u32 {
    1000
}

fn default_workers() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub disorder: DisorderSpec,
    pub region: RegionSpec,
    pub command: CommandSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    #[serde(default = "default_workers")]
    pub workers: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse and validate; schema errors carry the JSON pointer path.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("config error at /{}: {}", e.path(), e.inner()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// Structural validation beyond the schema: dimensions, marginal
    /// parameters, command parameter ranges.
    pub fn validate(&self) -> anyhow::Result<()> {
        let region = self.region.to_region()?;
        if region.d() != self.model.d() {
            anyhow::bail!(
                "config error at /region: dimension {} does not match the model dimension {}",
                region.d(),
                self.model.d()
            );
        }
        self.disorder.validate()?;
        match &self.command {
            CommandSpec::Sample { lambda, dump_free_process } => {
                if let Some(l) = lambda {
                    let lr = l.to_region()?;
                    if !region.contains_region(&lr) {
                        anyhow::bail!("config error at /command/lambda: not inside the region");
                    }
                }
                if let Some(w) = dump_free_process {
                    if !(w.t0 < w.t1) {
                        anyhow::bail!("config error at /command/dump_free_process: t0 must be < t1");
                    }
                }
            }
            CommandSpec::ClanStats { x, .. } => {
                if x.len() != self.model.d() {
                    anyhow::bail!("config error at /command/x: wrong dimension");
                }
            }
            CommandSpec::Connectivity { x, t_x, t_y, distances, axis, pad, .. } => {
                if x.len() != self.model.d() {
                    anyhow::bail!("config error at /command/x: wrong dimension");
                }
                if *axis >= self.model.d() {
                    anyhow::bail!("config error at /command/axis: out of range");
                }
                if t_y > t_x {
                    anyhow::bail!("config error at /command/t_y: must not exceed t_x");
                }
                if distances.iter().any(|&r| r < 0) {
                    anyhow::bail!("config error at /command/distances: must be ≥ 0");
                }
                if !(*pad >= 0.0) {
                    anyhow::bail!("config error at /command/pad: must be ≥ 0");
                }
            }
            CommandSpec::Regularity { sites, m, l, .. } => {
                if sites.iter().any(|s| s.len() != self.model.d()) {
                    anyhow::bail!("config error at /command/sites: wrong dimension");
                }
                if !(*m > 0.0) || *l <= 1 {
                    anyhow::bail!("config error at /command: need m > 0 and l > 1");
                }
            }
            CommandSpec::Multiscale { l0, .. } => {
                if !(*l0 > 1.0) {
                    anyhow::bail!("config error at /command/l0: must be > 1");
                }
            }
            CommandSpec::DisorderCheck { epsilon, .. } => {
                if !(*epsilon > 0.0) {
                    anyhow::bail!("config error at /command/epsilon: must be positive");
                }
            }
        }
        Ok(())
    }

    /// Stable hash over the experiment-defining fields. Worker count and
    /// output directory are execution details and never change results, so
    /// they are excluded.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.workers = default_workers();
        normalized.out = None;
        let canonical = serde_json::to_string(&normalized).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in canonical.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Output directory: config value, else `ANIMALIA_OUT`, else `./out`.
    pub fn out_dir(&self) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        if let Ok(env) = std::env::var("ANIMALIA_OUT") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        PathBuf::from("out")
    }
}
