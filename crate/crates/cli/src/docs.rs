//! JSON documents written with `--output-format json`. Each carries a
//! `schema` tag and deserializes back into the same type.

use serde::{Deserialize, Serialize};

use sacekit::covariate::RecoveredTable;
use sacekit::estimators::{AssumptionSet, BoundsResult, DominanceMode};
use sacekit::mixture::{MixtureFit, StrataIdentification};
use sacekit::{ObservedSummary, PopulationSpec};

pub const TRUTH_SCHEMA: &str = "sacekit.truth/1";
pub const OBSERVE_SCHEMA: &str = "sacekit.observe/1";
pub const ESTIMATE_SCHEMA: &str = "sacekit.estimate/1";
pub const BOUNDS_SCHEMA: &str = "sacekit.bounds/1";
pub const EM_SCHEMA: &str = "sacekit.em/1";
pub const COVARIATE_SCHEMA: &str = "sacekit.covariate/1";
pub const REPORT_SCHEMA: &str = "sacekit.report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDoc {
    pub schema: String,
    pub population: PopulationSpec,
    pub sace: Option<f64>,
    pub survival_rate_t: f64,
    pub survival_rate_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveDoc {
    pub schema: String,
    /// `expected` for an infinite trial on a population, `records` otherwise.
    pub source: String,
    pub summary: ObservedSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub schema: String,
    pub estimator: String,
    pub estimate: f64,
    pub causal: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub schema: String,
    pub source: String,
    pub dominance: DominanceMode,
    pub bounds: BoundsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDoc {
    pub schema: String,
    /// `records` or `simulated`.
    pub source: String,
    pub n_survivors_t: usize,
    pub n_survivors_c: usize,
    pub p_t: f64,
    pub p_c: f64,
    pub tol: f64,
    pub seed: u64,
    pub fit_t: MixtureFit,
    pub fit_c: MixtureFit,
    pub identification: Option<StrataIdentification>,
    pub sace_candidates: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDoc {
    pub schema: String,
    pub recovered: RecoveredTable,
    pub sace: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEstimate {
    pub estimate: Option<f64>,
    pub causal: bool,
    pub note: String,
    pub error: Option<String>,
}

impl ReportEstimate {
    pub fn from_result(result: Result<f64, String>, note: &str) -> Self {
        let (estimate, error) = match result {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        };
        Self {
            estimate,
            causal: false,
            note: note.into(),
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBounds {
    pub bounds: Option<BoundsResult>,
    pub error: Option<String>,
}

impl ReportBounds {
    pub fn from_result(result: Result<BoundsResult, String>) -> Self {
        match result {
            Ok(b) => Self {
                bounds: Some(b),
                error: None,
            },
            Err(e) => Self {
                bounds: None,
                error: Some(e),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEm {
    pub fit: Option<EmDoc>,
    pub error: Option<String>,
}

impl ReportEm {
    pub fn from_result(result: Result<EmDoc, String>) -> Self {
        match result {
            Ok(doc) => Self {
                fit: Some(doc),
                error: None,
            },
            Err(e) => Self {
                fit: None,
                error: Some(e),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema: String,
    pub truth: TruthDoc,
    /// Assumptions that hold in the population, so each bound can be read
    /// as valid or not.
    pub assumptions_holding: AssumptionSet,
    pub summary: ObservedSummary,
    pub naive: ReportEstimate,
    pub ive: ReportEstimate,
    /// One per (monotonicity, dominance) combination.
    pub bounds: Vec<ReportBounds>,
    /// Absent when every outcome law is a point mass.
    pub em: Option<ReportEm>,
    pub n: u64,
    pub seed: u64,
}
