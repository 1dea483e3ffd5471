//! Exact small-n oracles and seeded Monte Carlo experiments.
//!
//! Trials are keyed by `(master seed, trial index)`, run in parallel, and
//! aggregated by integer counts, so results do not depend on scheduling.

pub mod exact;
pub mod monte_carlo;
pub mod shulman;
pub mod stats;
pub mod surrogate;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::decoder::{
    LzScorer, MinEquivocationScorer, MlScorer, MmiScorer, Scorer, ThetaScorer, UniversalScorer,
};
use crate::ensemble::CodingEnsemble;
use crate::error::{invalid, Result};
use crate::metric::{MetricFamily, MetricIndex};

pub use exact::{
    exact_error_probability, mac_pairwise_exact, mac_sandwich, pairwise_error_exact, universality_audit_exact,
    ExactAuditReport, MacSandwichReport, PairwiseErrorReport,
};
pub use monte_carlo::{
    mac_envelope_constant, run_experiment, run_mac_experiment, BoundCheck, ExperimentResult, ExperimentSpec,
    MacExperimentResult, MacExperimentSpec,
};
pub use shulman::{random_linear_family, shulman_check, EventFamilySpec, ShulmanReport};
pub use stats::{wilson, ErrorEstimate};
pub use surrogate::{surrogate_condition_check, SurrogateReport};

/// What a tie with the transmitted codeword means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Any competitor scoring at least as high as the truth is an error.
    #[default]
    CountAsError,
    /// Ties are broken by the lowest codeword index.
    LowestIndex,
}

/// Which Monte Carlo engine runs the trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Type-domain when every decoder allows it, direct otherwise.
    #[default]
    Auto,
    /// Materialise every codeword.
    Direct,
    /// Sample only the class histogram of the competitors.
    TypeDomain,
}

/// A decoder named in an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderSpec {
    Universal,
    Lz,
    Ml,
    Mmi,
    MinEquivocation,
    Theta { values: Vec<f64> },
    /// Every point of the configured theta grid.
    ThetaGrid,
}

impl DecoderSpec {
    pub fn label(&self) -> String {
        match self {
            DecoderSpec::Universal => "universal".into(),
            DecoderSpec::Lz => "lz".into(),
            DecoderSpec::Ml => "ml".into(),
            DecoderSpec::Mmi => "mmi".into(),
            DecoderSpec::MinEquivocation => "min_equivocation".into(),
            DecoderSpec::Theta { values } => theta_label(values),
            DecoderSpec::ThetaGrid => "theta_grid".into(),
        }
    }

    pub fn is_theta(&self) -> bool {
        matches!(self, DecoderSpec::Theta { .. })
    }

    /// Replaces `ThetaGrid` by one `Theta` entry per grid point.
    pub fn expand(specs: &[DecoderSpec], grid: &[MetricIndex]) -> Vec<DecoderSpec> {
        let mut out = Vec::new();
        for spec in specs {
            match spec {
                DecoderSpec::ThetaGrid => {
                    out.extend(grid.iter().map(|t| DecoderSpec::Theta { values: t.values.clone() }))
                }
                other => out.push(other.clone()),
            }
        }
        out
    }
}

pub fn theta_label(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    format!("theta[{}]", parts.join(";"))
}

/// Builds a single-user scorer.
pub fn make_scorer(
    spec: &DecoderSpec,
    family: &MetricFamily,
    ensemble: &CodingEnsemble,
    channel: &ChannelModel,
) -> Result<Box<dyn Scorer>> {
    Ok(match spec {
        DecoderSpec::Universal => Box::new(UniversalScorer { family: family.clone(), ensemble: ensemble.clone() }),
        DecoderSpec::Lz => Box::new(LzScorer { ensemble: ensemble.clone() }),
        DecoderSpec::Ml => Box::new(MlScorer { channel: channel.clone() }),
        DecoderSpec::Mmi => Box::new(MmiScorer),
        DecoderSpec::MinEquivocation => Box::new(MinEquivocationScorer),
        DecoderSpec::Theta { values } => Box::new(ThetaScorer {
            family: family.clone(),
            theta: MetricIndex::new(family, values.clone())?,
            name: spec.label(),
        }),
        DecoderSpec::ThetaGrid => return Err(invalid("theta_grid must be expanded before use")),
    })
}
