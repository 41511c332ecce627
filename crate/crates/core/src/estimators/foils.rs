//! Estimators that look reasonable and are not causal.

use super::EstimateError;
use crate::strata::Arm;
use crate::trial::ObservedSummary;

/// Difference in mean outcome between treated and control survivors.
///
/// This compares different groups of people (treated survivors mix LL with
/// LD, control survivors mix LL with DL), so it is not a causal effect.
pub fn naive_survivor_contrast(summary: &ObservedSummary) -> Result<f64, EstimateError> {
    let treated = summary
        .survivor_mean(Arm::Treatment)
        .ok_or(EstimateError::EmptySurvivorCell(Arm::Treatment))?;
    let control = summary
        .survivor_mean(Arm::Control)
        .ok_or(EstimateError::EmptySurvivorCell(Arm::Control))?;
    Ok(treated - control)
}

/// Instrumental-variables ratio with dead units' outcomes imputed as zero:
/// the arm difference in imputed mean outcome over the arm difference in
/// survival.
///
/// Only meaningful under monotonicity and exclusion, which fail whenever the
/// LL stratum has a nonzero effect; otherwise the value corresponds to no
/// real quantity.
pub fn ive_zero_imputation(summary: &ObservedSummary) -> Result<f64, EstimateError> {
    let p_t = summary.survival_rate(Arm::Treatment);
    let p_c = summary.survival_rate(Arm::Control);
    let delta_p = p_t - p_c;
    if delta_p.abs() < 1e-15 {
        return Err(EstimateError::EqualSurvivalRates);
    }
    let imputed = |arm: Arm, p: f64| summary.survivor_mean(arm).map_or(0.0, |m| p * m);
    Ok((imputed(Arm::Treatment, p_t) - imputed(Arm::Control, p_c)) / delta_p)
}
