//! Brute-force recomputation of the SACE bounds by linear programming.
//!
//! For each LL share on a grid, the LL component of each arm is an arbitrary
//! sub-distribution of that arm's survivors: it takes mass `g_i` from support
//! point `i`, with `0 <= g_i * f <= m_i` and `sum g_i = 1`, where `f` is the
//! LL fraction of the arm's survivors. The SACE is linear in the `g`s, and
//! both dominance variants are linear constraints, so each endpoint at each
//! share is one small LP. Nothing here uses trimmed means.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use super::bounds::{check_arms, pi_grid, ArmTrim, Attainment, Endpoints, TrimRule};
use super::{
    ArmObservation, AssumptionSet, BoundOptions, BoundsResult, DominanceMode, EstimateError,
    PiRange,
};

/// Smallest shares tried when the LL share may approach zero, as multiples of
/// the largest feasible share.
const NEAR_ZERO_SCALES: [f64; 9] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];

struct ArmVars {
    vars: Vec<Variable>,
    values: Vec<f64>,
}

fn add_arm(
    problem: &mut Problem,
    obs: &ArmObservation,
    pi: f64,
    sign: f64,
    assumptions: &AssumptionSet,
    dominance: DominanceMode,
) -> ArmVars {
    let dist = obs.survivor_dist();
    let fraction = (pi / obs.survival_rate()).min(1.0);
    let total = dist.total_mass();
    let mut vars = Vec::with_capacity(dist.len());
    let mut values = Vec::with_capacity(dist.len());
    for atom in dist.atoms() {
        let cap = (atom.mass / total / fraction).min(1.0);
        vars.push(problem.add_var(sign * atom.value, (0.0, cap)));
        values.push(atom.value);
    }
    let unit: Vec<(Variable, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
    problem.add_constraint(unit.as_slice(), ComparisonOp::Eq, 1.0);

    if assumptions.stochastic_dominance {
        match dominance {
            DominanceMode::Mean => {
                let mean = dist.mean().expect("non-empty survivors");
                let centered: Vec<(Variable, f64)> = vars
                    .iter()
                    .zip(&values)
                    .map(|(&v, &y)| (v, y - mean))
                    .collect();
                problem.add_constraint(centered.as_slice(), ComparisonOp::Ge, 0.0);
            }
            DominanceMode::FirstOrder => {
                // LL CDF below the survivor CDF at every support point, which is
                // equivalent to LL dominating the remaining component
                let mut cdf = 0.0;
                for k in 0..vars.len().saturating_sub(1) {
                    cdf += dist.atoms()[k].mass / total;
                    let prefix: Vec<(Variable, f64)> =
                        vars[..=k].iter().map(|&v| (v, 1.0)).collect();
                    problem.add_constraint(prefix.as_slice(), ComparisonOp::Le, cdf);
                }
            }
        }
    }
    ArmVars { vars, values }
}

fn arm_mean(solution: &minilp::Solution, arm: &ArmVars) -> f64 {
    arm.vars
        .iter()
        .zip(&arm.values)
        .map(|(&v, &y)| solution[v] * y)
        .sum()
}

fn solve_at(
    obs_t: &ArmObservation,
    obs_c: &ArmObservation,
    pi: f64,
    assumptions: &AssumptionSet,
    dominance: DominanceMode,
    direction: OptimizationDirection,
) -> Result<(f64, Attainment), EstimateError> {
    let mut problem = Problem::new(direction);
    let t = add_arm(&mut problem, obs_t, pi, 1.0, assumptions, dominance);
    let c = add_arm(&mut problem, obs_c, pi, -1.0, assumptions, dominance);
    let solution = problem
        .solve()
        .map_err(|e| EstimateError::LinearProgram(e.to_string()))?;
    let t_mean = arm_mean(&solution, &t);
    let c_mean = arm_mean(&solution, &c);
    let trim = |obs: &ArmObservation, ll_mean: f64| ArmTrim {
        fraction: (pi / obs.survival_rate()).min(1.0),
        rule: TrimRule::LinearProgram,
        ll_mean,
    };
    Ok((
        solution.objective(),
        Attainment {
            pi_ll: pi,
            limit: false,
            treated: trim(obs_t, t_mean),
            control: trim(obs_c, c_mean),
        },
    ))
}

/// Independent check of [`sace_bounds`](super::sace_bounds): solve the
/// component-mass LP on a grid of `opts.grid_points` LL shares and return the
/// envelope. When the share may approach zero, shares geometrically close to
/// zero (down to `1e-9` of the largest) stand in for the limit.
pub fn bounds_oracle(
    obs_t: &ArmObservation,
    obs_c: &ArmObservation,
    assumptions: &AssumptionSet,
    opts: &BoundOptions,
) -> Result<BoundsResult, EstimateError> {
    let (p_t, p_c) = check_arms(obs_t, obs_c)?;
    let Some(range) = PiRange::feasible(p_t, p_c, assumptions) else {
        return Ok(BoundsResult::infeasible(*assumptions));
    };
    if range.hi <= 0.0 {
        return Err(EstimateError::UndefinedSace);
    }
    let mut shares: Vec<f64> = pi_grid(&range, opts.grid_points)
        .into_iter()
        .filter(|&pi| pi > 0.0)
        .collect();
    if range.lo_open {
        shares.extend(NEAR_ZERO_SCALES.iter().map(|s| s * range.hi));
    }

    let mut lower: Option<(f64, Attainment)> = None;
    let mut upper: Option<(f64, Attainment)> = None;
    for pi in shares {
        let (lo, lo_at) = solve_at(
            obs_t,
            obs_c,
            pi,
            assumptions,
            opts.dominance,
            OptimizationDirection::Minimize,
        )?;
        let (up, up_at) = solve_at(
            obs_t,
            obs_c,
            pi,
            assumptions,
            opts.dominance,
            OptimizationDirection::Maximize,
        )?;
        if lower.is_none_or(|(v, _)| lo < v) {
            lower = Some((lo, lo_at));
        }
        if upper.is_none_or(|(v, _)| up > v) {
            upper = Some((up, up_at));
        }
    }
    let (lower, lower_at) = lower.expect("at least one share");
    let (upper, upper_at) = upper.expect("at least one share");
    Ok(BoundsResult {
        lower,
        upper,
        assumptions: *assumptions,
        pi_ll_range: Some(range),
        attained_at: Some(Endpoints {
            lower: lower_at,
            upper: upper_at,
        }),
        feasible: true,
    })
}
