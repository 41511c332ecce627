//! Completely randomized trials over a latent population, and the
//! observed-data summaries they produce.
//!
//! [`expected_observed_summary`] is the infinite-sample path: cell shares and
//! survivor outcome laws computed exactly from the population.
//! [`assign_and_observe`] draws a finite trial and [`empirical_summary`]
//! summarizes any record list, simulated or ingested.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dist::DiscreteDist;
use crate::strata::{true_survival_rate, validate, Arm, NormalLaw, PopulationSpec, PrincipalStratum, Survival};

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("trial size must be positive")]
    EmptyTrial,
    #[error("trial size {0} is odd; complete randomization needs equal arms")]
    OddTrialSize(u64),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("no records to summarize")]
    NoRecords,
    #[error("record {id}: {problem}")]
    InvalidRecord { id: u64, problem: &'static str },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One participant: assignment, observed survival, outcome if alive.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: u64,
    /// Latent stratum; known for simulated units only.
    pub stratum: Option<PrincipalStratum>,
    pub x: Option<f64>,
    pub z: Arm,
    pub s_obs: Survival,
    pub y_obs: Option<f64>,
}

impl UnitRecord {
    pub fn check(&self) -> Result<(), TrialError> {
        let problem = match (self.s_obs, self.y_obs) {
            (Survival::Dead, Some(_)) => Some("outcome recorded for a dead unit"),
            (Survival::Alive, None) => Some("missing outcome for a surviving unit"),
            (_, Some(y)) if !y.is_finite() => Some("non-finite outcome"),
            _ => None,
        };
        let problem = problem.or_else(|| match self.stratum {
            Some(s) if s.survival_under(self.z) != self.s_obs => {
                Some("survival contradicts latent stratum")
            }
            _ => None,
        });
        match problem {
            Some(problem) => Err(TrialError::InvalidRecord {
                id: self.id,
                problem,
            }),
            None => Ok(()),
        }
    }
}

/// The latent strata that could make up an observed (arm, survival) group.
pub fn classify_group(z: Arm, s_obs: Survival) -> [PrincipalStratum; 2] {
    use PrincipalStratum::*;
    match (z, s_obs) {
        (Arm::Treatment, Survival::Alive) => [LL, LD],
        (Arm::Treatment, Survival::Dead) => [DL, DD],
        (Arm::Control, Survival::Alive) => [LL, DL],
        (Arm::Control, Survival::Dead) => [LD, DD],
    }
}

/// One stratum's contribution to a survivor cell of an expected summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub stratum: PrincipalStratum,
    /// Share of the cell contributed by this stratum.
    pub weight: f64,
    pub law: NormalLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCell {
    pub z: Arm,
    pub s: Survival,
    /// Fraction of all units that fall in this cell.
    pub share: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_y: Option<f64>,
    /// Survivor outcome distribution; absent for dead cells and for
    /// expected summaries with continuous laws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_y: Option<DiscreteDist>,
    /// Exact survivor law as a mixture of strata (expected summaries only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mixture: Vec<MixtureTerm>,
}

impl ObservedCell {
    fn without_outcomes(z: Arm, s: Survival, share: f64, count: Option<u64>) -> Self {
        Self {
            z,
            s,
            share,
            count,
            mean_y: None,
            dist_y: None,
            mixture: Vec::new(),
        }
    }
}

/// Observed data: the four (arm, survival) cells in the order
/// (T,L), (T,D), (C,L), (C,D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSummary {
    pub cells: Vec<ObservedCell>,
}

fn cell_index(z: Arm, s: Survival) -> usize {
    let arm = match z {
        Arm::Treatment => 0,
        Arm::Control => 2,
    };
    arm + usize::from(s == Survival::Dead)
}

impl ObservedSummary {
    pub fn cell(&self, z: Arm, s: Survival) -> &ObservedCell {
        &self.cells[cell_index(z, s)]
    }

    /// Share of the arm that survives.
    pub fn survival_rate(&self, z: Arm) -> f64 {
        let alive = self.cell(z, Survival::Alive).share;
        let dead = self.cell(z, Survival::Dead).share;
        if alive + dead > 0.0 {
            alive / (alive + dead)
        } else {
            0.0
        }
    }

    pub fn survivor_mean(&self, z: Arm) -> Option<f64> {
        self.cell(z, Survival::Alive).mean_y
    }

    /// Discrete survivor distribution of an arm. Continuous expected laws are
    /// discretized with `points_per_term` equal-mass quantile points per
    /// mixture term.
    pub fn survivor_dist(&self, z: Arm, points_per_term: usize) -> DiscreteDist {
        let cell = self.cell(z, Survival::Alive);
        match &cell.dist_y {
            Some(d) => d.clone(),
            None => discretize_mixture(&cell.mixture, points_per_term),
        }
    }
}

/// Equal-mass discretization of a normal mixture: each term contributes
/// `points` values at the midpoints of its quantile bins. Point-mass terms
/// contribute a single atom.
pub fn discretize_mixture(terms: &[MixtureTerm], points: usize) -> DiscreteDist {
    let points = points.max(1);
    let mut pairs = Vec::new();
    for term in terms.iter().filter(|t| t.weight > 0.0) {
        if term.law.is_point_mass() {
            pairs.push((term.law.mean, term.weight));
            continue;
        }
        let normal = Normal::new(term.law.mean, term.law.sd).expect("positive sd");
        let mass = term.weight / points as f64;
        for i in 0..points {
            let q = (i as f64 + 0.5) / points as f64;
            pairs.push((normal.inverse_cdf(q), mass));
        }
    }
    DiscreteDist::from_weights(pairs)
}

/// Exact infinite-sample observed summary of a completely randomized trial
/// with equal arms.
pub fn expected_observed_summary(pop: &PopulationSpec) -> ObservedSummary {
    let mut cells = Vec::with_capacity(4);
    for z in Arm::BOTH {
        for s in Survival::BOTH {
            let members: Vec<_> = classify_group(z, s)
                .into_iter()
                .map(|st| pop.stratum(st))
                .filter(|spec| spec.proportion > 0.0)
                .collect();
            let total: f64 = members.iter().map(|m| m.proportion).sum();
            let share = match s {
                Survival::Alive => true_survival_rate(pop, z) / 2.0,
                Survival::Dead => total / 2.0,
            };
            if s == Survival::Dead || total == 0.0 {
                cells.push(ObservedCell::without_outcomes(z, s, share, None));
                continue;
            }
            let mixture: Vec<MixtureTerm> = members
                .iter()
                .filter_map(|m| {
                    m.law(z).map(|law| MixtureTerm {
                        stratum: m.stratum,
                        weight: m.proportion / total,
                        law: *law,
                    })
                })
                .collect();
            let dist_y = mixture
                .iter()
                .all(|t| t.law.is_point_mass())
                .then(|| DiscreteDist::from_weights(mixture.iter().map(|t| (t.law.mean, t.weight))));
            let mean_y = match &dist_y {
                Some(d) => d.mean(),
                None => Some(mixture.iter().map(|t| t.weight * t.law.mean).sum()),
            };
            cells.push(ObservedCell {
                z,
                s,
                share,
                count: None,
                mean_y,
                dist_y,
                mixture,
            });
        }
    }
    ObservedSummary { cells }
}

/// Summarize a list of records. Outcome distributions keep every distinct
/// observed value as its own atom.
pub fn empirical_summary(records: &[UnitRecord]) -> Result<ObservedSummary, TrialError> {
    if records.is_empty() {
        return Err(TrialError::NoRecords);
    }
    let mut counts = [0u64; 4];
    let mut outcomes: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for r in records {
        r.check()?;
        counts[cell_index(r.z, r.s_obs)] += 1;
        if let Some(y) = r.y_obs {
            outcomes[usize::from(r.z == Arm::Control)].push(y);
        }
    }
    let n = records.len() as f64;
    let mut cells = Vec::with_capacity(4);
    for z in Arm::BOTH {
        for s in Survival::BOTH {
            let count = counts[cell_index(z, s)];
            let share = count as f64 / n;
            if s == Survival::Dead || count == 0 {
                cells.push(ObservedCell::without_outcomes(z, s, share, Some(count)));
                continue;
            }
            let dist = DiscreteDist::empirical(&outcomes[usize::from(z == Arm::Control)]);
            cells.push(ObservedCell {
                z,
                s,
                share,
                count: Some(count),
                mean_y: dist.mean(),
                dist_y: Some(dist),
                mixture: Vec::new(),
            });
        }
    }
    Ok(ObservedSummary { cells })
}

// Stream reserved for the assignment shuffle; unit ids use their own id.
const ASSIGNMENT_STREAM: u64 = u64::MAX;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(law: &NormalLaw, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    if law.is_point_mass() {
        law.mean
    } else {
        law.mean + law.sd * z
    }
}

/// Simulate a completely randomized trial of `n` units: exactly `n / 2` are
/// assigned to each arm; each unit's stratum, covariate and outcome come from
/// its own random stream keyed by `(seed, id)`.
pub fn assign_and_observe(
    pop: &PopulationSpec,
    n: u64,
    seed: u64,
) -> Result<Vec<UnitRecord>, TrialError> {
    if n == 0 {
        return Err(TrialError::EmptyTrial);
    }
    if n % 2 == 1 {
        return Err(TrialError::OddTrialSize(n));
    }
    let report = validate(pop);
    if !report.is_valid() {
        return Err(TrialError::InvalidPopulation(report.to_string()));
    }
    let mut arms: Vec<Arm> = (0..n)
        .map(|i| if i < n / 2 { Arm::Treatment } else { Arm::Control })
        .collect();
    arms.shuffle(&mut substream(seed, ASSIGNMENT_STREAM));

    let cumulative: Vec<f64> = pop
        .strata()
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.proportion;
            Some(*acc)
        })
        .collect();
    let last_nonempty = pop
        .strata()
        .iter()
        .rposition(|s| s.proportion > 0.0)
        .unwrap_or(3);

    let records = arms
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let id = i as u64;
            let mut rng = substream(seed, id);
            let u: f64 = rng.random::<f64>() * cumulative[3];
            let idx = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(last_nonempty);
            let spec = &pop.strata()[idx];
            let x = spec.covariate.as_ref().map(|law| draw(law, &mut rng));
            let s_obs = spec.stratum.survival_under(z);
            let y_obs = if s_obs.is_alive() {
                spec.law(z).map(|law| draw(law, &mut rng))
            } else {
                None
            };
            UnitRecord {
                id,
                stratum: Some(spec.stratum),
                x,
                z,
                s_obs,
                y_obs,
            }
        })
        .collect();
    Ok(records)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: u64,
    x: Option<f64>,
    z: Arm,
    s: Survival,
    y: Option<f64>,
}

/// Write records as CSV with header `id,x,z,s,y`. Latent strata are not
/// written.
pub fn write_records_csv<W: Write>(records: &[UnitRecord], out: W) -> Result<(), TrialError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(CsvRow {
            id: r.id,
            x: r.x,
            z: r.z,
            s: r.s_obs,
            y: r.y_obs,
        })?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read records in the CSV format written by [`write_records_csv`].
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<UnitRecord>, TrialError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row?;
        let record = UnitRecord {
            id: row.id,
            stratum: None,
            x: row.x,
            z: row.z,
            s_obs: row.s,
            y_obs: row.y,
        };
        record.check()?;
        records.push(record);
    }
    Ok(records)
}
