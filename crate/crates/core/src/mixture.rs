//! Strata identification from the shape of the survivor outcome laws.
//!
//! Each observed survivor cell mixes exactly two strata (treated survivors are
//! LL and LD, control survivors LL and DL). If outcomes are normal within
//! each stratum, a two-component mixture fit per arm yields candidate LL
//! shares `weight * survival_rate`; the LL share must agree across arms,
//! which pins down the strata table up to labelings the data cannot resolve.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strata::Arm;
use crate::trial::MixtureTerm;

/// Components lighter than this are absorbed: the cell is single-stratum.
pub const COLLAPSE_WEIGHT: f64 = 0.01;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("non-finite sample")]
    NonFinite,
    #[error("mixture needs at least one component")]
    NoComponents,
    #[error("fit for arm {0} did not converge")]
    NotConverged(Arm),
    #[error("survival rate {0} outside (0, 1]")]
    BadSurvivalRate(f64),
    #[error("no LL share agrees across arms within the matching tolerance")]
    NoMatch,
    #[error("every cross-arm match implies a negative stratum share")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    /// Sorted by ascending mean.
    pub components: Vec<NormalComponent>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    /// Log-likelihood after every EM step of the winning restart.
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

impl MixtureFit {
    /// A fit taken as known, e.g. the exact survivor law of a population.
    pub fn exact(mut components: Vec<NormalComponent>) -> Self {
        components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        Self {
            components,
            loglik: 0.0,
            iterations: 0,
            converged: true,
            restarts_used: 0,
            loglik_trace: Vec::new(),
        }
    }

    /// Exact fit of an expected survivor cell.
    pub fn from_mixture_terms(terms: &[MixtureTerm]) -> Self {
        Self::exact(
            terms
                .iter()
                .map(|t| NormalComponent {
                    weight: t.weight,
                    mean: t.law.mean,
                    sd: t.law.sd,
                })
                .collect(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Components used for identification: all of them, or a single pooled
    /// component when any weight falls below [`COLLAPSE_WEIGHT`].
    pub fn effective_components(&self) -> Vec<NormalComponent> {
        if self.components.len() <= 1
            || self.components.iter().all(|c| c.weight >= COLLAPSE_WEIGHT)
        {
            return self.components.clone();
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let mean = self.components.iter().map(|c| c.weight * c.mean).sum::<f64>() / total;
        let second = self
            .components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
            .sum::<f64>()
            / total;
        vec![NormalComponent {
            weight: 1.0,
            mean,
            sd: (second - mean * mean).max(0.0).sqrt(),
        }]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Convergence when the relative log-likelihood change drops below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Variance floor as a multiple of the sample variance.
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
            restarts: 10,
            seed: 0,
            variance_floor: 1e-6,
        }
    }
}

impl EmOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Params {
    weight: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

struct Run {
    params: Params,
    loglik: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn sample_moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Contiguous equal-count blocks of the sorted sample.
fn quantile_init(sorted: &[f64], k: usize, floor: f64) -> Params {
    let n = sorted.len();
    let mut params = Params {
        weight: vec![1.0 / k as f64; k],
        mean: Vec::with_capacity(k),
        var: Vec::with_capacity(k),
    };
    for j in 0..k {
        let block = &sorted[j * n / k..(j + 1) * n / k];
        let (m, v) = sample_moments(block);
        params.mean.push(m);
        params.var.push(v.max(floor));
    }
    params
}

/// Means at `k` distinct random samples, common spread.
fn random_init(samples: &[f64], k: usize, var: f64, seed: u64, restart: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let mut mean: Vec<f64> = index::sample(&mut rng, samples.len(), k)
        .into_iter()
        .map(|i| samples[i])
        .collect();
    mean.sort_by(f64::total_cmp);
    Params {
        weight: vec![1.0 / k as f64; k],
        mean,
        var: vec![var; k],
    }
}

fn run_em(samples: &[f64], mut params: Params, opts: &EmOptions, floor: f64) -> Run {
    let k = params.mean.len();
    let n = samples.len() as f64;
    let mut trace = Vec::new();
    let mut log_terms = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // E-step, accumulating sufficient statistics around the current means
        let log_w: Vec<f64> = params.weight.iter().map(|w| w.ln()).collect();
        let log_norm: Vec<f64> = params
            .var
            .iter()
            .map(|v| -LN_SQRT_2PI - 0.5 * v.ln())
            .collect();
        let mut resp_sum = vec![0.0; k];
        let mut first = vec![0.0; k];
        let mut second = vec![0.0; k];
        let half_prec: Vec<f64> = params.var.iter().map(|v| 0.5 / v).collect();
        let mut loglik = 0.0;
        // each normalizer lies in [1, k], so products of a few dozen of them
        // stay finite and one ln covers the whole batch
        let mut batch = 1.0;
        let mut batch_len = 0;
        for &x in samples {
            let mut top = f64::NEG_INFINITY;
            let mut arg = 0;
            for j in 0..k {
                let d = x - params.mean[j];
                log_terms[j] = log_w[j] + log_norm[j] - d * d * half_prec[j];
                if log_terms[j] > top {
                    top = log_terms[j];
                    arg = j;
                }
            }
            let mut total = 0.0;
            for (j, t) in log_terms.iter_mut().enumerate() {
                *t = if j == arg { 1.0 } else { (*t - top).exp() };
                total += *t;
            }
            loglik += top;
            batch *= total;
            batch_len += 1;
            if batch_len == 32 {
                loglik += batch.ln();
                batch = 1.0;
                batch_len = 0;
            }
            let inv = total.recip();
            for j in 0..k {
                let r = log_terms[j] * inv;
                let d = x - params.mean[j];
                resp_sum[j] += r;
                first[j] += r * d;
                second[j] += r * d * d;
            }
        }
        loglik += batch.ln();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                loglik >= prev - 1e-9 * f64::abs(prev),
                "EM log-likelihood decreased: {prev} -> {loglik}"
            );
            trace.push(loglik);
            if (loglik - prev).abs() <= opts.tol * f64::abs(prev) {
                converged = true;
                break;
            }
        } else {
            trace.push(loglik);
        }
        if iterations >= opts.max_iter {
            break;
        }

        // M-step
        for j in 0..k {
            if resp_sum[j] <= f64::MIN_POSITIVE {
                params.weight[j] = 0.0;
                continue;
            }
            let shift = first[j] / resp_sum[j];
            params.weight[j] = resp_sum[j] / n;
            params.mean[j] += shift;
            params.var[j] = (second[j] / resp_sum[j] - shift * shift).max(floor);
        }
        iterations += 1;
    }
    Run {
        loglik: *trace.last().expect("at least one E-step"),
        params,
        iterations,
        converged,
        trace,
    }
}

/// Maximum-likelihood `k`-component univariate normal mixture by EM.
///
/// Restart 0 starts from equal-count quantile blocks, the others from random
/// samples as means (seeded from `opts.seed`). The restart with the highest
/// log-likelihood wins, earliest restart on ties. Variances are floored at
/// `opts.variance_floor` times the sample variance.
pub fn em_fit(samples: &[f64], k: usize, opts: &EmOptions) -> Result<MixtureFit, MixtureError> {
    if k == 0 {
        return Err(MixtureError::NoComponents);
    }
    let need = 10 * k;
    if samples.len() < need {
        return Err(MixtureError::TooFewSamples {
            got: samples.len(),
            need,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(MixtureError::NonFinite);
    }
    let (_, sample_var) = sample_moments(samples);
    if sample_var <= 0.0 {
        return Err(MixtureError::ZeroVariance);
    }
    let floor = opts.variance_floor * sample_var;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let restarts = opts.restarts.max(1);
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                quantile_init(&sorted, k, floor)
            } else {
                random_init(samples, k, sample_var, opts.seed, r as u64)
            };
            run_em(samples, init, opts, floor)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.loglik > best.loglik { run } else { best })
        .expect("at least one restart");

    let mut components: Vec<NormalComponent> = (0..k)
        .map(|j| NormalComponent {
            weight: best.params.weight[j],
            mean: best.params.mean[j],
            sd: best.params.var[j].sqrt(),
        })
        .collect();
    components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(MixtureFit {
        components,
        loglik: best.loglik,
        iterations: best.iterations,
        converged: best.converged,
        restarts_used: restarts,
        loglik_trace: best.trace,
    })
}

/// Population shares of the four strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrataProportions {
    pub ll: f64,
    pub ld: f64,
    pub dl: f64,
    pub dd: f64,
}

impl StrataProportions {
    pub fn as_array(&self) -> [f64; 4] {
        [self.ll, self.ld, self.dl, self.dd]
    }
}

/// One consistent labeling of the fitted components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrataSolution {
    pub proportions: StrataProportions,
    /// Index into the treated fit's effective components of the LL
    /// component; any other treated component is LD.
    pub treated_ll: usize,
    /// Same for control; any other control component is DL.
    pub control_ll: usize,
    /// LL share implied by each arm before reconciliation.
    pub pi_ll_treated: f64,
    pub pi_ll_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataIdentification {
    pub solutions: Vec<StrataSolution>,
    /// More than one labeling fits the data equally well.
    pub ambiguous: bool,
}

/// Match LL-share candidates across arms.
///
/// Candidates are `weight * p` per effective component. A treated and a
/// control candidate match when they differ by at most `tol` relative to the
/// larger; `tol = 0` demands equality up to rounding. Each match yields a
/// solution whose LL share is the matched pair's midpoint, clamped to the
/// range where LD, DL and DD stay non-negative.
pub fn identify_strata(
    fit_t: &MixtureFit,
    fit_c: &MixtureFit,
    p_t: f64,
    p_c: f64,
    tol: f64,
) -> Result<StrataIdentification, MixtureError> {
    for (fit, arm) in [(fit_t, Arm::Treatment), (fit_c, Arm::Control)] {
        if !fit.converged {
            return Err(MixtureError::NotConverged(arm));
        }
        if fit.components.is_empty() {
            return Err(MixtureError::NoComponents);
        }
    }
    for p in [p_t, p_c] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(MixtureError::BadSurvivalRate(p));
        }
    }
    let lo = (p_t + p_c - 1.0).max(0.0);
    let hi = p_t.min(p_c);

    let comps_t = fit_t.effective_components();
    let comps_c = fit_c.effective_components();
    let mut matched = false;
    let mut solutions = Vec::new();
    for (i, ct) in comps_t.iter().enumerate() {
        for (j, cc) in comps_c.iter().enumerate() {
            let a = ct.weight * p_t;
            let b = cc.weight * p_c;
            let gap = (a - b).abs();
            if gap > tol * a.max(b) + 1e-12 {
                continue;
            }
            matched = true;
            let mid = 0.5 * (a + b);
            let slack = 0.5 * gap + 1e-12;
            if mid < lo - slack || mid > hi + slack {
                continue;
            }
            let ll = mid.clamp(lo, hi);
            let ld = p_t - ll;
            let dl = p_c - ll;
            solutions.push(StrataSolution {
                proportions: StrataProportions {
                    ll,
                    ld,
                    dl,
                    dd: 1.0 - (ll + ld + dl),
                },
                treated_ll: i,
                control_ll: j,
                pi_ll_treated: a,
                pi_ll_control: b,
            });
        }
    }
    if !matched {
        return Err(MixtureError::NoMatch);
    }
    if solutions.is_empty() {
        return Err(MixtureError::Infeasible);
    }
    Ok(StrataIdentification {
        ambiguous: solutions.len() > 1,
        solutions,
    })
}

/// Candidate SACE values, one per distinct solution, ascending.
pub fn sace_candidates(
    ident: &StrataIdentification,
    fit_t: &MixtureFit,
    fit_c: &MixtureFit,
) -> Vec<f64> {
    let comps_t = fit_t.effective_components();
    let comps_c = fit_c.effective_components();
    let mut values: Vec<f64> = ident
        .solutions
        .iter()
        .map(|s| comps_t[s.treated_ll].mean - comps_c[s.control_ll].mean)
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    values
}
