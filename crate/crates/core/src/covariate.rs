//! Recovering the strata table from a baseline covariate that separates the
//! strata.
//!
//! When the covariate's spread within each stratum is small next to the gaps
//! between strata, units sharing a covariate value share a stratum, and each
//! group's survival pattern across arms reveals which one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strata::{
    Arm, NormalLaw, PopulationSpec, PrincipalStratum, StratumSpec, Survival,
};
use crate::trial::UnitRecord;

/// Survival rates in this band mean the group mixes surviving and dying
/// strata, so the covariate is not separating them.
pub const WARNING_BAND: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Error, PartialEq)]
pub enum CovariateError {
    #[error("record {0} has no covariate value")]
    MissingCovariate(u64),
    #[error("no records to group")]
    NoRecords,
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("survival threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("no groups to classify")]
    NoGroups,
    #[error("covariate group at x = {x} has no units under {arm}")]
    MissingArm { x: f64, arm: Arm },
}

/// How covariate values are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BinningRule {
    /// One group per distinct value.
    #[default]
    Exact,
    /// Bins of width `width` centered on `origin + k * width`.
    Width { width: f64, origin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGroup {
    /// Mean covariate value of the group's units.
    pub x_center: f64,
    pub n: u64,
    pub n_t: u64,
    pub n_c: u64,
    pub survival_rate_t: f64,
    pub survival_rate_c: f64,
    pub mean_y_t: Option<f64>,
    pub mean_y_c: Option<f64>,
    pub inferred_stratum: Option<PrincipalStratum>,
    pub separation_warning: bool,
}

impl CovariateGroup {
    pub fn survival_rate(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treatment => self.survival_rate_t,
            Arm::Control => self.survival_rate_c,
        }
    }

    pub fn mean_y(&self, arm: Arm) -> Option<f64> {
        match arm {
            Arm::Treatment => self.mean_y_t,
            Arm::Control => self.mean_y_c,
        }
    }

    fn arm_count(&self, arm: Arm) -> u64 {
        match arm {
            Arm::Treatment => self.n_t,
            Arm::Control => self.n_c,
        }
    }
}

#[derive(Default)]
struct ArmTally {
    units: u64,
    alive: u64,
    sum_y: f64,
}

/// Group records by covariate value and tabulate survival and survivor
/// outcome means per arm. Groups come back in ascending covariate order.
pub fn group_by_covariate(
    records: &[UnitRecord],
    binning: BinningRule,
) -> Result<Vec<CovariateGroup>, CovariateError> {
    if records.is_empty() {
        return Err(CovariateError::NoRecords);
    }
    if let BinningRule::Width { width, .. } = binning {
        if !(width > 0.0 && width.is_finite()) {
            return Err(CovariateError::BadBinWidth(width));
        }
    }
    let mut keyed = Vec::with_capacity(records.len());
    for r in records {
        let x = r.x.ok_or(CovariateError::MissingCovariate(r.id))?;
        let key = match binning {
            BinningRule::Exact => x,
            BinningRule::Width { width, origin } => ((x - origin) / width).round(),
        };
        keyed.push((key, x, r));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.id.cmp(&b.2.id)));

    let mut groups = Vec::new();
    for chunk in keyed.chunk_by(|a, b| a.0 == b.0) {
        let mut tallies = [ArmTally::default(), ArmTally::default()];
        let mut sum_x = 0.0;
        for &(_, x, r) in chunk {
            sum_x += x;
            let tally = &mut tallies[usize::from(r.z == Arm::Control)];
            tally.units += 1;
            if r.s_obs == Survival::Alive {
                tally.alive += 1;
                tally.sum_y += r.y_obs.unwrap_or(0.0);
            }
        }
        let rate = |t: &ArmTally| {
            if t.units > 0 {
                t.alive as f64 / t.units as f64
            } else {
                0.0
            }
        };
        let mean = |t: &ArmTally| (t.alive > 0).then(|| t.sum_y / t.alive as f64);
        let [t, c] = &tallies;
        groups.push(CovariateGroup {
            x_center: sum_x / chunk.len() as f64,
            n: chunk.len() as u64,
            n_t: t.units,
            n_c: c.units,
            survival_rate_t: rate(t),
            survival_rate_c: rate(c),
            mean_y_t: mean(t),
            mean_y_c: mean(c),
            inferred_stratum: None,
            separation_warning: false,
        });
    }
    Ok(groups)
}

/// Estimated population plus the annotated groups it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredTable {
    pub population: PopulationSpec,
    pub groups: Vec<CovariateGroup>,
    /// Some group's survival rate fell in the warning band.
    pub low_confidence: bool,
}

#[derive(Default)]
struct StratumTally {
    n: u64,
    weighted_y: [f64; 2],
    weight_y: [f64; 2],
    weighted_x: f64,
}

/// Classify each group by thresholding its arm survival rates and assemble
/// the strata table. Groups landing in the same stratum are merged with
/// size-weighted means.
pub fn recover_principal_table(
    groups: &[CovariateGroup],
    threshold: f64,
) -> Result<RecoveredTable, CovariateError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CovariateError::BadThreshold(threshold));
    }
    if groups.is_empty() {
        return Err(CovariateError::NoGroups);
    }
    let mut annotated = groups.to_vec();
    annotated.sort_by(|a, b| a.x_center.total_cmp(&b.x_center).then(a.n.cmp(&b.n)));

    let mut tallies: [StratumTally; 4] = Default::default();
    let mut total = 0u64;
    let mut low_confidence = false;
    for g in annotated.iter_mut() {
        for arm in Arm::BOTH {
            if g.arm_count(arm) == 0 {
                return Err(CovariateError::MissingArm { x: g.x_center, arm });
            }
        }
        let status = |arm: Arm| Survival::from_alive(g.survival_rate(arm) >= threshold);
        let stratum = PrincipalStratum::from_survival(status(Arm::Treatment), status(Arm::Control));
        let (band_lo, band_hi) = WARNING_BAND;
        g.separation_warning = Arm::BOTH.iter().any(|&arm| {
            let r = g.survival_rate(arm);
            (band_lo..=band_hi).contains(&r)
        });
        low_confidence |= g.separation_warning;
        g.inferred_stratum = Some(stratum);

        let tally = &mut tallies[stratum.index()];
        tally.n += g.n;
        tally.weighted_x += g.n as f64 * g.x_center;
        for (slot, arm) in Arm::BOTH.into_iter().enumerate() {
            if let Some(m) = g.mean_y(arm).filter(|_| stratum.survives(arm)) {
                tally.weighted_y[slot] += g.n as f64 * m;
                tally.weight_y[slot] += g.n as f64;
            }
        }
        total += g.n;
    }

    let strata = PrincipalStratum::ALL
        .into_iter()
        .map(|stratum| {
            let t = &tallies[stratum.index()];
            let mut spec = StratumSpec::empty(stratum, t.n as f64 / total as f64);
            if t.n > 0 {
                spec.covariate = Some(NormalLaw::point(t.weighted_x / t.n as f64));
                for (slot, arm) in Arm::BOTH.into_iter().enumerate() {
                    if stratum.survives(arm) && t.weight_y[slot] > 0.0 {
                        spec = spec.with_law(arm, NormalLaw::point(t.weighted_y[slot] / t.weight_y[slot]));
                    }
                }
            }
            spec
        })
        .collect();
    Ok(RecoveredTable {
        population: PopulationSpec::new(strata).expect("one entry per stratum"),
        groups: annotated,
        low_confidence,
    })
}
