//! JSON experiment configuration.
//!
//! Block lengths may be a single value or a list. Ensemble descriptors omit
//! `n`; the concrete ensemble is built per block length.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelModel;
use crate::ensemble::{messages_for_rate, CodingEnsemble, FeedbackStateMachine};
use crate::error::{invalid, Error, Result};
use crate::metric::{binary_theta_grid, random_theta_grid, MetricFamily, MetricIndex};
use crate::simulator::shulman::EventFamilySpec;
use crate::simulator::{DecoderSpec, Engine, TiePolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Audit,
    CountClasses,
    Shulman,
    SurrogateCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Audit => "audit",
            Mode::CountClasses => "count-classes",
            Mode::Shulman => "shulman",
            Mode::SurrogateCheck => "surrogate-check",
        }
    }

    pub fn parse(name: &str) -> Option<Mode> {
        [Mode::Simulate, Mode::Audit, Mode::CountClasses, Mode::Shulman, Mode::SurrogateCheck]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockLengths {
    One(usize),
    Many(Vec<usize>),
}

impl BlockLengths {
    pub fn values(&self) -> Vec<usize> {
        match self {
            BlockLengths::One(n) => vec![*n],
            BlockLengths::Many(v) => v.clone(),
        }
    }
}

/// A coding ensemble without its block length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleDescriptor {
    Uniform { alphabet: usize },
    Iid { distribution: Vec<f64> },
    /// Composition `round(n * fractions)`, remainders to the largest fractional parts.
    UniformOverType { fractions: Vec<f64> },
    /// Message length is the smallest `k` with `2^k >= M`.
    LinearDithered,
    FeedbackTree { alphabet: usize, machine: FeedbackStateMachine },
}

impl EnsembleDescriptor {
    pub fn build(&self, n: usize, rate: f64) -> Result<CodingEnsemble> {
        match self {
            EnsembleDescriptor::Uniform { alphabet } => {
                let e = CodingEnsemble::uniform(*alphabet, n);
                e.validate()?;
                Ok(e)
            }
            EnsembleDescriptor::Iid { distribution } => CodingEnsemble::iid(distribution.clone(), n),
            EnsembleDescriptor::UniformOverType { fractions } => {
                CodingEnsemble::uniform_over_type(composition_for(fractions, n)?)
            }
            EnsembleDescriptor::LinearDithered => {
                let m = messages_for_rate(n, rate);
                let bits = (64 - (m - 1).leading_zeros()) as usize;
                CodingEnsemble::linear_dithered(n, bits.max(1))
            }
            EnsembleDescriptor::FeedbackTree { alphabet, machine } => {
                CodingEnsemble::feedback(*alphabet, n, machine.clone())
            }
        }
    }
}

/// Largest-remainder rounding of `n * fractions`.
pub fn composition_for(fractions: &[f64], n: usize) -> Result<Vec<u64>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(invalid("fractions must be non-negative and sum to 1"));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut comp: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let missing = n as u64 - comp.iter().sum::<u64>();
    for &i in order.iter().take(missing as usize) {
        comp[i] += 1;
    }
    Ok(comp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaGridSpec {
    /// `side x side` grid over binary stateless parameters.
    Binary { side: usize },
    Explicit { points: Vec<Vec<f64>> },
    /// Uniform random tensors plus the Hamming-match point when it exists.
    Random { count: usize, seed: u64 },
}

impl Default for ThetaGridSpec {
    fn default() -> Self {
        ThetaGridSpec::Binary { side: 5 }
    }
}

impl ThetaGridSpec {
    pub fn build(&self, family: &MetricFamily) -> Result<Vec<MetricIndex>> {
        let grid = match self {
            ThetaGridSpec::Binary { side } => {
                if family.parameter_len() != 4 {
                    return Err(invalid("the binary grid needs a binary stateless family"));
                }
                binary_theta_grid(*side)
            }
            ThetaGridSpec::Explicit { points } => {
                points.iter().map(|p| MetricIndex::new(family, p.clone())).collect::<Result<_>>()?
            }
            ThetaGridSpec::Random { count, seed } => {
                let mut g = random_theta_grid(family, *count, *seed);
                if let Ok(h) = MetricIndex::hamming_match(family) {
                    g.push(h);
                }
                g
            }
        };
        if grid.is_empty() {
            return Err(invalid("theta grid is empty"));
        }
        Ok(grid)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMethod {
    /// Exhaustive pointwise sandwich and clipped union functionals.
    #[default]
    Exact,
    /// Monte Carlo estimates of both inequalities.
    MonteCarlo,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditOptions {
    #[serde(default)]
    pub method: AuditMethod,
    /// Write one row per `(x, y, scorer)` in exact mode.
    #[serde(default)]
    pub rows: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShulmanOptions {
    /// XOR families over this many fair bits.
    #[serde(default)]
    pub xor_bits: Vec<u32>,
    /// Fully independent fair-coin families of these sizes.
    #[serde(default)]
    pub independent: Vec<u32>,
    /// Random pairwise independent linear families.
    #[serde(default)]
    pub random_count: u64,
    #[serde(default = "default_random_bits")]
    pub random_bits: u32,
    #[serde(default)]
    pub families: Vec<EventFamilySpec>,
}

fn default_random_bits() -> u32 {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateOptions {
    /// Outputs sampled per block length.
    pub samples: usize,
    /// Always include the all-zero output.
    #[serde(default)]
    pub include_zeros: bool,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        SurrogateOptions { samples: 16, include_zeros: true }
    }
}

fn default_trials() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<BlockLengths>,
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleDescriptor>,
    /// Second user's ensemble; defaults to `ensemble`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble2: Option<EnsembleDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<MetricFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<ThetaGridSpec>,
    #[serde(default)]
    pub decoders: Vec<DecoderSpec>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub tie_policy: TiePolicy,
    /// Estimate theta decoders at `R + Delta_n` too.
    #[serde(default)]
    pub shifted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shulman: Option<ShulmanOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(&digest[..8])
    }

    pub fn block_lengths(&self) -> Result<Vec<usize>> {
        let ns = self.n.as_ref().map(BlockLengths::values).unwrap_or_default();
        if ns.is_empty() {
            return Err(invalid("config needs a block length n"));
        }
        Ok(ns)
    }

    pub fn require<'a, T>(&self, field: &'a Option<T>, name: &str) -> Result<&'a T> {
        field.as_ref().ok_or_else(|| Error::Config(format!("config needs `{name}`")))
    }

    pub fn thetas(&self, family: &MetricFamily) -> Result<Vec<MetricIndex>> {
        self.theta_grid.clone().unwrap_or_default().build(family)
    }

    /// Decoder list with `theta_grid` expanded.
    pub fn expanded_decoders(&self, family: &MetricFamily) -> Result<Vec<DecoderSpec>> {
        if self.decoders.contains(&DecoderSpec::ThetaGrid) {
            Ok(DecoderSpec::expand(&self.decoders, &self.thetas(family)?))
        } else {
            Ok(self.decoders.clone())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [Some(self.rate), self.r1, self.r2];
        if rates.iter().flatten().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(invalid("rates must be finite and non-negative"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if let Some(n) = &self.n {
            if n.values().contains(&0) {
                return Err(invalid("block lengths must be positive"));
            }
        }
        if let Some(c) = &self.channel {
            c.validate()?;
        }
        if let Some(f) = &self.family {
            f.validate()?;
        }
        Ok(())
    }
}
