//! Principal stratification for outcomes truncated by death.
//!
//! The crate models a population as four latent principal strata (LL, LD,
//! DL, DD by survival under treatment and control), simulates completely
//! randomized trials over it, and provides:
//!
//! * foil estimators that are not causal ([`estimators::foils`]),
//! * sharp bounds on the survivor average causal effect under optional
//!   assumptions, with a linear-programming oracle ([`estimators`]),
//! * strata identification from normal-mixture fits ([`mixture`]),
//! * recovery of the full strata table from a separating covariate
//!   ([`covariate`]).
//!
//! Only the marginal outcome laws within each stratum are modeled. The joint
//! law of the two potential outcomes is not identified by any data, so it is
//! not represented.

pub mod covariate;
pub mod dist;
pub mod estimators;
pub mod mixture;
pub mod strata;
pub mod trial;

pub use covariate::{group_by_covariate, recover_principal_table, BinningRule, RecoveredTable};
pub use dist::DiscreteDist;
pub use strata::{
    true_sace, true_survival_rate, validate, Arm, NormalLaw, PopulationSpec, PrincipalStratum,
    StratumSpec, Survival, ValidationReport,
};
pub use trial::{
    assign_and_observe, classify_group, empirical_summary, expected_observed_summary,
    ObservedSummary, UnitRecord,
};
