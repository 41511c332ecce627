//! Estimators on observed trial data.
//!
//! [`foils`] holds the survivor contrast and the zero-imputation IV ratio,
//! both of which are kept as documented counterexamples: neither estimates a
//! causal effect when survival depends on treatment. [`bounds`] computes
//! sharp bounds on the survivor average causal effect under optional
//! assumptions, and [`oracle`] recomputes them by brute-force linear
//! programming.

pub mod bounds;
pub mod foils;
pub mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DiscreteDist;
use crate::strata::{Arm, PopulationSpec, PrincipalStratum};
use crate::trial::ObservedSummary;

pub use bounds::{sace_bounds, BoundsResult};
pub use foils::{ive_zero_imputation, naive_survivor_contrast};
pub use oracle::bounds_oracle;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("no surviving units under {0}")]
    EmptySurvivorCell(Arm),
    #[error("survival rates are equal under both arms; the IV ratio divides by zero")]
    EqualSurvivalRates,
    #[error("the LL stratum cannot have positive size; the SACE is undefined")]
    UndefinedSace,
    #[error("invalid arm observation: {0}")]
    InvalidObservation(String),
    #[error("linear program failed: {0}")]
    LinearProgram(String),
}

/// One arm's observed data: survival rate and survivor outcome distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmObservation {
    survival_rate: f64,
    survivor_dist: DiscreteDist,
}

impl ArmObservation {
    pub fn new(survival_rate: f64, survivor_dist: DiscreteDist) -> Result<Self, EstimateError> {
        if !(0.0..=1.0).contains(&survival_rate) {
            return Err(EstimateError::InvalidObservation(format!(
                "survival rate {survival_rate} outside [0, 1]"
            )));
        }
        if (survival_rate > 0.0) == survivor_dist.is_empty() {
            return Err(EstimateError::InvalidObservation(
                "survivor distribution must be empty exactly when the survival rate is 0".into(),
            ));
        }
        if survivor_dist.atoms().iter().any(|a| !a.value.is_finite()) {
            return Err(EstimateError::InvalidObservation(
                "non-finite support point".into(),
            ));
        }
        Ok(Self {
            survival_rate,
            survivor_dist,
        })
    }

    /// Convenience constructor from `(value, weight)` pairs.
    pub fn from_weights<I>(survival_rate: f64, pairs: I) -> Result<Self, EstimateError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        Self::new(survival_rate, DiscreteDist::from_weights(pairs))
    }

    /// Extract one arm from an observed summary. Continuous expected laws are
    /// discretized with `points_per_term` quantile points per stratum.
    pub fn from_summary(
        summary: &ObservedSummary,
        arm: Arm,
        points_per_term: usize,
    ) -> Result<Self, EstimateError> {
        let rate = summary.survival_rate(arm);
        let dist = if rate > 0.0 {
            summary.survivor_dist(arm, points_per_term)
        } else {
            DiscreteDist::default()
        };
        Self::new(rate, dist)
    }

    pub fn survival_rate(&self) -> f64 {
        self.survival_rate
    }

    pub fn survivor_dist(&self) -> &DiscreteDist {
        &self.survivor_dist
    }

    /// The same observation with every outcome shifted by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            survival_rate: self.survival_rate,
            survivor_dist: self.survivor_dist.shifted(shift),
        }
    }
}

/// Optional identifying assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssumptionSet {
    /// No DL stratum.
    pub monotonicity: bool,
    /// Under each arm, LL is at least as healthy as the stratum sharing its
    /// observed survivor cell.
    pub stochastic_dominance: bool,
    /// Zero effect for strata whose survival does not depend on treatment.
    /// Recorded for the IV foil only; it never narrows the bounds, since the
    /// LL effect is the estimand.
    pub exclusion: bool,
}

impl AssumptionSet {
    pub const NONE: AssumptionSet = AssumptionSet {
        monotonicity: false,
        stochastic_dominance: false,
        exclusion: false,
    };

    pub fn new(monotonicity: bool, stochastic_dominance: bool) -> Self {
        Self {
            monotonicity,
            stochastic_dominance,
            exclusion: false,
        }
    }

    /// The four (monotonicity, dominance) combinations in table order.
    pub fn table_rows() -> [AssumptionSet; 4] {
        [
            Self::new(false, false),
            Self::new(true, false),
            Self::new(false, true),
            Self::new(true, true),
        ]
    }

    /// The assumptions that are true of a population. Dominance is checked in
    /// mean form; empty strata satisfy everything vacuously.
    pub fn holding_in(pop: &PopulationSpec) -> Self {
        use PrincipalStratum::*;
        let ll = pop.stratum(LL);
        let mean = |s: PrincipalStratum, arm: Arm| {
            let spec = pop.stratum(s);
            (spec.proportion > 0.0)
                .then(|| spec.law(arm).map(|l| l.mean))
                .flatten()
        };
        let dominates = |mate: PrincipalStratum, arm: Arm| match (mean(LL, arm), mean(mate, arm)) {
            (Some(a), Some(b)) => a >= b,
            _ => true,
        };
        Self {
            monotonicity: pop.proportion(DL) == 0.0,
            stochastic_dominance: dominates(LD, Arm::Treatment) && dominates(DL, Arm::Control),
            exclusion: ll.proportion == 0.0 || mean(LL, Arm::Treatment) == mean(LL, Arm::Control),
        }
    }

    /// True when every flag of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &AssumptionSet) -> bool {
        (!self.monotonicity || other.monotonicity)
            && (!self.stochastic_dominance || other.stochastic_dominance)
            && (!self.exclusion || other.exclusion)
    }
}

/// How the dominance assumption constrains the LL outcome law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceMode {
    /// LL mean at least the cell-mate's mean.
    #[default]
    Mean,
    /// LL outcome law first-order stochastically dominates the cell-mate's.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub grid_points: usize,
    pub dominance: DominanceMode,
}

impl BoundOptions {
    pub const DEFAULT_GRID_POINTS: usize = 1001;

    pub fn with_grid_points(grid_points: usize) -> Self {
        Self {
            grid_points,
            ..Self::default()
        }
    }
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            grid_points: Self::DEFAULT_GRID_POINTS,
            dominance: DominanceMode::Mean,
        }
    }
}

/// Feasible range of the LL population share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiRange {
    pub lo: f64,
    pub hi: f64,
    /// The lower end is excluded: the SACE is undefined at a zero LL share,
    /// so bounds there are limits.
    pub lo_open: bool,
}

impl PiRange {
    /// LL share range implied by the arm survival rates and the assumptions.
    /// `None` when monotonicity contradicts the data.
    pub fn feasible(p_t: f64, p_c: f64, assumptions: &AssumptionSet) -> Option<PiRange> {
        if assumptions.monotonicity {
            // LL + LD = p_t and LL = p_c once DL is empty
            return (p_c <= p_t).then_some(PiRange {
                lo: p_c,
                hi: p_c,
                lo_open: false,
            });
        }
        // DD = 1 - p_t - p_c + LL must be non-negative
        let lo = (p_t + p_c - 1.0).max(0.0);
        let hi = p_t.min(p_c);
        Some(PiRange {
            lo,
            hi,
            lo_open: lo == 0.0,
        })
    }
}
