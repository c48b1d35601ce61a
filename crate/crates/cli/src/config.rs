//! Experiment configuration: one JSON document, resolved against a preset
//! and then against the command-line flags.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use dpslice::bounds::PartitionSpec;
use dpslice::datagen::{gen_perturbed_zipf, gen_three_clusters, Dataset, ZipfParams};
use dpslice::harness::{Init, RunConfig};
use dpslice::state::GammaPrior;
use dpslice::{ModelConfig, RngStream, SamplerKind};

/// Stream ids under the experiment seed. Each command draws from its own
/// stream so that, e.g., `run` and `generate` see the same dataset.
pub const STREAM_DATA: u64 = 0;
pub const STREAM_CHAIN: u64 = 1;
pub const STREAM_VERIFY: u64 = 2;
pub const STREAM_ORACLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-length runs: 10,000 sweeps, 5,000 burn-in, 10^5 bound replicates.
    #[default]
    Paper,
    /// Desk scale: 2,000 sweeps, 1,000 burn-in, 10^4 bound replicates.
    Desk,
}

/// The whole document. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub dataset: DatasetConfig,
    pub model: ModelOverrides,
    pub run: RunOverrides,
    pub benchmark: BenchmarkConfig,
    pub verify: VerifyConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    ThreeClusters {
        n: usize,
    },
    Zipf {
        n: usize,
        #[serde(default = "default_max_label")]
        max_label: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    /// A `y,true_label` CSV; a label column of zeros means "no truth".
    File {
        path: PathBuf,
    },
}

fn default_max_label() -> usize {
    ZipfParams::default().max_label
}

fn default_exponent() -> f64 {
    ZipfParams::default().exponent
}

fn default_separation() -> f64 {
    ZipfParams::default().separation
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::ThreeClusters { n: 300 }
    }
}

impl DatasetConfig {
    /// Same kind with a different size; files keep their own size.
    pub fn with_n(&self, n: usize) -> DatasetConfig {
        match self {
            DatasetConfig::ThreeClusters { .. } => DatasetConfig::ThreeClusters { n },
            DatasetConfig::Zipf {
                max_label,
                exponent,
                separation,
                ..
            } => DatasetConfig::Zipf {
                n,
                max_label: *max_label,
                exponent: *exponent,
                separation: *separation,
            },
            DatasetConfig::File { path } => DatasetConfig::File { path: path.clone() },
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        let mut rng = RngStream::new(seed, STREAM_DATA);
        let data = match self {
            DatasetConfig::ThreeClusters { n } => gen_three_clusters(&mut rng, *n)?,
            DatasetConfig::Zipf {
                n,
                max_label,
                exponent,
                separation,
            } => gen_perturbed_zipf(
                &mut rng,
                *n,
                ZipfParams {
                    max_label: *max_label,
                    exponent: *exponent,
                    separation: *separation,
                },
            )?,
            DatasetConfig::File { path } => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                Dataset::read_csv(BufReader::new(file))?
            }
        };
        ensure!(!data.is_empty(), "dataset has no observations");
        Ok(data)
    }
}

/// Fields left unset keep [`ModelConfig::for_n`] defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub sigma2: Option<f64>,
    pub base_mean: Option<f64>,
    pub base_var: Option<f64>,
    pub alpha_shape: Option<f64>,
    pub alpha_rate: Option<f64>,
    pub alpha_fixed: Option<f64>,
    pub alpha_update_every: Option<usize>,
}

impl ModelOverrides {
    pub fn resolve(&self, n: usize) -> Result<ModelConfig> {
        let base = ModelConfig::for_n(n);
        let cfg = ModelConfig {
            sigma2: self.sigma2.unwrap_or(base.sigma2),
            base_mean: self.base_mean.unwrap_or(base.base_mean),
            base_var: self.base_var.unwrap_or(base.base_var),
            alpha_prior: GammaPrior {
                shape: self.alpha_shape.unwrap_or(base.alpha_prior.shape),
                rate: self.alpha_rate.unwrap_or(base.alpha_prior.rate),
            },
            alpha_fixed: self.alpha_fixed.or(base.alpha_fixed),
            alpha_update_every: self.alpha_update_every.unwrap_or(base.alpha_update_every),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A sampler name; `bgs-n` means blocked Gibbs with `L = n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplerName(pub String);

impl SamplerName {
    pub fn resolve(&self, n: usize) -> Result<SamplerKind> {
        if self.0 == "bgs-n" {
            return Ok(SamplerKind::BlockedGibbs { truncation: n.max(1) });
        }
        Ok(self.0.parse()?)
    }

    fn check(&self) -> Result<()> {
        self.resolve(1).map(|_| ())
    }
}

impl From<&str> for SamplerName {
    fn from(s: &str) -> Self {
        SamplerName(s.to_string())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOverrides {
    pub sampler: Option<SamplerName>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub init: Option<Init>,
    pub alpha_init: Option<f64>,
    /// Seconds allowed for the first ten sweeps; 0 disables the guard.
    pub guard_budget_s: Option<f64>,
}

impl RunOverrides {
    pub fn resolve(&self, preset: Preset, n: usize) -> Result<RunConfig> {
        let sampler = self.sampler.clone().unwrap_or_else(|| "slice".into()).resolve(n)?;
        self.resolve_with(preset, sampler)
    }

    pub fn resolve_with(&self, preset: Preset, sampler: SamplerKind) -> Result<RunConfig> {
        let base = match preset {
            Preset::Paper => RunConfig::paper(sampler),
            Preset::Desk => RunConfig::desk(sampler),
        };
        let guard_budget = match self.guard_budget_s {
            None => base.guard_budget,
            Some(0.0) => None,
            Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
            Some(s) => bail!("guard_budget_s must be non-negative, got {s}"),
        };
        let run = RunConfig {
            sampler,
            iterations: self.iterations.unwrap_or(base.iterations),
            burn_in: self.burn_in.unwrap_or(base.burn_in),
            thin: self.thin.unwrap_or(base.thin),
            init: self.init.unwrap_or(base.init),
            alpha_init: self.alpha_init.unwrap_or(base.alpha_init),
            guard_budget,
        };
        run.validate()?;
        Ok(run)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub samplers: Option<Vec<SamplerName>>,
    pub ns: Option<Vec<usize>>,
    /// Dataset seeds; defaults to the experiment seed alone.
    pub seeds: Option<Vec<u64>>,
    /// Dataset kind; `n` is replaced per cell. Defaults to the top-level
    /// dataset section.
    pub dataset: Option<DatasetConfig>,
}

pub struct BenchmarkPlan {
    pub samplers: Vec<SamplerName>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
}

impl BenchmarkConfig {
    pub fn resolve(&self, preset: Preset, seed: u64, dataset: &DatasetConfig) -> Result<BenchmarkPlan> {
        let samplers = self
            .samplers
            .clone()
            .unwrap_or_else(|| ["slice", "bgs-10", "bgs-n", "crp", "crp-collapsed"].map(SamplerName::from).to_vec());
        let ns = self.ns.clone().unwrap_or_else(|| match preset {
            Preset::Paper => vec![150, 300, 600, 1_500, 3_000, 6_000, 12_000],
            Preset::Desk => vec![150, 300, 600],
        });
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![seed]);
        ensure!(!samplers.is_empty() && !ns.is_empty() && !seeds.is_empty(), "benchmark grid is empty");
        ensure!(!ns.contains(&0), "benchmark sizes must be positive");
        for s in &samplers {
            s.check()?;
        }
        Ok(BenchmarkPlan {
            samplers,
            ns,
            seeds,
            dataset: self.dataset.clone().unwrap_or_else(|| dataset.clone()),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub ns: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub spec: Option<PartitionSpec>,
    pub replicates: Option<usize>,
    /// `null` skips the check; absent uses the defaults.
    #[serde(default = "some_default")]
    pub tail: Option<TailConfig>,
    #[serde(default = "some_default")]
    pub merge: Option<MergeConfig>,
    #[serde(default = "some_default")]
    pub poisson: Option<PoissonConfig>,
}

fn some_default<T: Default>() -> Option<T> {
    Some(T::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub n: usize,
    pub alpha: f64,
    pub ts: Vec<f64>,
    pub replicates: Option<usize>,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            n: 1_000,
            alpha: 1.0,
            ts: vec![0.5, 1.0, 2.0, 3.0],
            replicates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub n: usize,
    pub alpha: f64,
    pub xs: Vec<f64>,
    pub replicates: Option<usize>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            n: 6,
            alpha: 1.0,
            xs: vec![1e-3, 1e-2, 0.05],
            replicates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConfig {
    pub x: f64,
    pub alpha: f64,
    pub replicates: Option<usize>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            x: (-1.0f64).exp(),
            alpha: 2.0,
            replicates: None,
        }
    }
}

/// Verify settings with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyPlan {
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub spec: PartitionSpec,
    pub replicates: usize,
    pub tail: Option<TailConfig>,
    pub merge: Option<MergeConfig>,
    pub poisson: Option<PoissonConfig>,
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl VerifyConfig {
    pub fn resolve(&self, preset: Preset) -> Result<VerifyPlan> {
        let replicates = self.replicates.unwrap_or(match preset {
            Preset::Paper => 100_000,
            Preset::Desk => 10_000,
        });
        let plan = VerifyPlan {
            ns: self.ns.clone().unwrap_or_else(|| vec![100, 1_000, 10_000]),
            alphas: self.alphas.clone().unwrap_or_else(|| vec![0.5, 1.0, 5.0]),
            deltas: self.deltas.clone().unwrap_or_else(|| vec![0.1, 0.01]),
            spec: self.spec.clone().unwrap_or(PartitionSpec::Singleton),
            replicates,
            tail: self.tail.clone().map(|t| TailConfig {
                replicates: Some(t.replicates.unwrap_or(replicates.max(10_000))),
                ..t
            }),
            merge: self.merge.clone().map(|m| MergeConfig {
                replicates: Some(m.replicates.unwrap_or(10 * replicates)),
                ..m
            }),
            poisson: self.poisson.clone().map(|p| PoissonConfig {
                replicates: Some(p.replicates.unwrap_or(replicates)),
                ..p
            }),
        };
        ensure!(!plan.ns.is_empty() && !plan.alphas.is_empty() && !plan.deltas.is_empty(), "verify grid is empty");
        ensure!(plan.ns.iter().all(|&n| n >= 2), "verify sizes must be at least 2");
        ensure!(plan.alphas.iter().all(|&a| positive(a)), "verify alphas must be positive");
        ensure!(plan.deltas.iter().all(|&d| d > 0.0 && d < 1.0), "verify deltas must lie in (0, 1)");
        ensure!(plan.replicates >= 1_000, "verify needs at least 1000 replicates");
        for &n in &plan.ns {
            plan.spec.sizes(n)?;
        }
        if let Some(t) = &plan.tail {
            ensure!(t.n >= 2 && positive(t.alpha), "tail check needs n >= 2 and alpha > 0");
            ensure!(t.replicates >= Some(10_000), "tail check needs at least 10^4 replicates");
            ensure!(t.ts.iter().all(|&x| x >= 0.0 && x.is_finite()), "tail levels must be non-negative");
        }
        if let Some(m) = &plan.merge {
            ensure!(m.n >= 2 && positive(m.alpha), "merge check needs n >= 2 and alpha > 0");
            ensure!(m.xs.iter().all(|&x| x > 0.0 && x < 1.0), "merge thresholds must lie in (0, 1)");
        }
        if let Some(p) = &plan.poisson {
            ensure!(p.x > 0.0 && p.x < 1.0 && positive(p.alpha), "poisson check needs x in (0, 1), alpha > 0");
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n: usize,
    pub alpha: f64,
    pub samplers: Vec<SamplerName>,
    pub burn_in: usize,
    pub sweeps: usize,
    pub tv_threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n: 6,
            alpha: 1.0,
            samplers: ["slice", "slice-marginal", "crp", "crp-collapsed", "bgs-2", "bgs-n"]
                .map(SamplerName::from)
                .to_vec(),
            burn_in: 1_000,
            sweeps: 50_000,
            tv_threshold: 0.1,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (1..=dpslice::oracle::MAX_N).contains(&self.n),
            "oracle n must lie in 1..={}",
            dpslice::oracle::MAX_N
        );
        ensure!(positive(self.alpha), "oracle alpha must be positive");
        ensure!(self.sweeps > 0 && !self.samplers.is_empty(), "oracle needs sweeps and samplers");
        ensure!(positive(self.tv_threshold), "tv_threshold must be positive");
        for s in &self.samplers {
            s.check()?;
        }
        Ok(())
    }
}

impl Config {
    pub fn read(path: &Path) -> Result<Config> {
        let file = File::open(path).with_context(|| format!("opening config {}", path.display()))?;
        serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing config {}", path.display()))
    }
}
