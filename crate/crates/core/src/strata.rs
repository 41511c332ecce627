//! Principal strata, arms, and the ground-truth population model.
//!
//! A [`PopulationSpec`] describes the latent population: four principal strata
//! defined by survival under treatment and under control, each with a
//! population share and normal outcome laws for the arms in which its members
//! survive. Outcomes in arms where a stratum dies are absent, never a sentinel
//! number. Units are assumed not to interfere with each other (SUTVA): a
//! unit's potential outcomes depend only on its own assignment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for the proportions summing to one.
pub const PROPORTION_TOLERANCE: f64 = 1e-12;

/// Schema tag written to and required from population JSON documents.
pub const POPSPEC_SCHEMA: &str = "popspec/1";

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "T")]
    Treatment,
    #[serde(rename = "C")]
    Control,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treatment, Arm::Control];

    pub fn other(self) -> Arm {
        match self {
            Arm::Treatment => Arm::Control,
            Arm::Control => Arm::Treatment,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Arm::Treatment => "T",
            Arm::Control => "C",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" => Ok(Arm::Treatment),
            "C" => Ok(Arm::Control),
            other => Err(format!("unknown arm {other:?}, expected T or C")),
        }
    }
}

/// Survival status at the time the outcome would be measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Survival {
    #[serde(rename = "L")]
    Alive,
    #[serde(rename = "D")]
    Dead,
}

impl Survival {
    pub const BOTH: [Survival; 2] = [Survival::Alive, Survival::Dead];

    pub fn from_alive(alive: bool) -> Self {
        if alive {
            Survival::Alive
        } else {
            Survival::Dead
        }
    }

    pub fn is_alive(self) -> bool {
        self == Survival::Alive
    }

    pub fn code(self) -> &'static str {
        match self {
            Survival::Alive => "L",
            Survival::Dead => "D",
        }
    }
}

impl fmt::Display for Survival {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Joint survival type: first letter is survival under treatment, second
/// under control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrincipalStratum {
    LL,
    LD,
    DL,
    DD,
}

impl PrincipalStratum {
    /// Canonical order used everywhere strata are listed.
    pub const ALL: [PrincipalStratum; 4] = [
        PrincipalStratum::LL,
        PrincipalStratum::LD,
        PrincipalStratum::DL,
        PrincipalStratum::DD,
    ];

    pub fn survival_under(self, arm: Arm) -> Survival {
        use PrincipalStratum::*;
        let alive = match (self, arm) {
            (LL, _) => true,
            (LD, Arm::Treatment) | (DL, Arm::Control) => true,
            (LD, Arm::Control) | (DL, Arm::Treatment) => false,
            (DD, _) => false,
        };
        Survival::from_alive(alive)
    }

    pub fn survives(self, arm: Arm) -> bool {
        self.survival_under(arm).is_alive()
    }

    pub fn from_survival(treated: Survival, control: Survival) -> Self {
        use PrincipalStratum::*;
        match (treated, control) {
            (Survival::Alive, Survival::Alive) => LL,
            (Survival::Alive, Survival::Dead) => LD,
            (Survival::Dead, Survival::Alive) => DL,
            (Survival::Dead, Survival::Dead) => DD,
        }
    }

    /// The stratum obtained by exchanging the roles of the two arms.
    pub fn mirrored(self) -> Self {
        use PrincipalStratum::*;
        match self {
            LD => DL,
            DL => LD,
            s => s,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PrincipalStratum::LL => "LL",
            PrincipalStratum::LD => "LD",
            PrincipalStratum::DL => "DL",
            PrincipalStratum::DD => "DD",
        }
    }
}

impl fmt::Display for PrincipalStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PrincipalStratum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrincipalStratum::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown principal stratum {s:?}"))
    }
}

/// Univariate normal law. `sd == 0` is a point mass at `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    pub mean: f64,
    pub sd: f64,
}

impl NormalLaw {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn point(value: f64) -> Self {
        Self { mean: value, sd: 0.0 }
    }

    pub fn is_point_mass(&self) -> bool {
        self.sd == 0.0
    }
}

/// One principal stratum of a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub stratum: PrincipalStratum,
    pub proportion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qol_t: Option<NormalLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qol_c: Option<NormalLaw>,
    /// Baseline covariate law.
    #[serde(rename = "x", default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<NormalLaw>,
}

impl StratumSpec {
    /// A stratum with no outcome laws and no covariate.
    pub fn empty(stratum: PrincipalStratum, proportion: f64) -> Self {
        Self {
            stratum,
            proportion,
            qol_t: None,
            qol_c: None,
            covariate: None,
        }
    }

    pub fn law(&self, arm: Arm) -> Option<&NormalLaw> {
        match arm {
            Arm::Treatment => self.qol_t.as_ref(),
            Arm::Control => self.qol_c.as_ref(),
        }
    }

    pub fn with_law(mut self, arm: Arm, law: NormalLaw) -> Self {
        match arm {
            Arm::Treatment => self.qol_t = Some(law),
            Arm::Control => self.qol_c = Some(law),
        }
        self
    }

    pub fn with_covariate(mut self, law: NormalLaw) -> Self {
        self.covariate = Some(law);
        self
    }
}

/// Structural problems that prevent a population from being built at all.
#[derive(Debug, Error, PartialEq)]
pub enum PopulationError {
    #[error("expected exactly four strata, got {0}")]
    WrongStratumCount(usize),
    #[error("stratum {0} listed more than once")]
    DuplicateStratum(PrincipalStratum),
    #[error("unsupported schema {found:?}, expected {POPSPEC_SCHEMA:?}")]
    Schema { found: String },
}

/// The latent population: exactly one entry per principal stratum, stored in
/// canonical order LL, LD, DL, DD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationDocument", into = "PopulationDocument")]
pub struct PopulationSpec {
    strata: [StratumSpec; 4],
}

impl PopulationSpec {
    pub fn new(strata: Vec<StratumSpec>) -> Result<Self, PopulationError> {
        if strata.len() != 4 {
            return Err(PopulationError::WrongStratumCount(strata.len()));
        }
        let mut slots: [Option<StratumSpec>; 4] = Default::default();
        for spec in strata {
            let slot = &mut slots[spec.stratum.index()];
            if slot.is_some() {
                return Err(PopulationError::DuplicateStratum(spec.stratum));
            }
            *slot = Some(spec);
        }
        // four entries, no duplicates: every slot is filled
        Ok(Self {
            strata: slots.map(|s| s.expect("slot filled")),
        })
    }

    pub fn strata(&self) -> &[StratumSpec; 4] {
        &self.strata
    }

    pub fn stratum(&self, stratum: PrincipalStratum) -> &StratumSpec {
        &self.strata[stratum.index()]
    }

    pub fn stratum_mut(&mut self, stratum: PrincipalStratum) -> &mut StratumSpec {
        &mut self.strata[stratum.index()]
    }

    pub fn proportion(&self, stratum: PrincipalStratum) -> f64 {
        self.stratum(stratum).proportion
    }

    /// True when every outcome law present is a point mass.
    pub fn is_point_mass(&self) -> bool {
        self.strata
            .iter()
            .flat_map(|s| [s.qol_t, s.qol_c])
            .flatten()
            .all(|law| law.is_point_mass())
    }

    /// The same population with the two arms exchanged.
    pub fn mirrored(&self) -> Self {
        let mirrored = self
            .strata
            .iter()
            .map(|s| StratumSpec {
                stratum: s.stratum.mirrored(),
                proportion: s.proportion,
                qol_t: s.qol_c,
                qol_c: s.qol_t,
                covariate: s.covariate,
            })
            .collect();
        Self::new(mirrored).expect("mirroring is a permutation of strata")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("population serializes")
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Serialize, Deserialize)]
struct PopulationDocument {
    schema: String,
    strata: Vec<StratumSpec>,
}

impl TryFrom<PopulationDocument> for PopulationSpec {
    type Error = PopulationError;

    fn try_from(doc: PopulationDocument) -> Result<Self, Self::Error> {
        if doc.schema != POPSPEC_SCHEMA {
            return Err(PopulationError::Schema { found: doc.schema });
        }
        PopulationSpec::new(doc.strata)
    }
}

impl From<PopulationSpec> for PopulationDocument {
    fn from(pop: PopulationSpec) -> Self {
        PopulationDocument {
            schema: POPSPEC_SCHEMA.to_string(),
            strata: pop.strata.into(),
        }
    }
}

/// A single violated population invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ProportionSum { sum: f64 },
    NegativeProportion { stratum: PrincipalStratum, value: f64 },
    NonFinite { stratum: PrincipalStratum, field: &'static str },
    LawOnDeadCell { stratum: PrincipalStratum, arm: Arm },
    MissingLaw { stratum: PrincipalStratum, arm: Arm },
    NegativeSd { stratum: PrincipalStratum, field: &'static str, sd: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProportionSum { sum } => {
                write!(f, "proportions sum to {sum}, not 1 (tolerance {PROPORTION_TOLERANCE:e})")
            }
            Violation::NegativeProportion { stratum, value } => {
                write!(f, "negative proportion {value} for {stratum}")
            }
            Violation::NonFinite { stratum, field } => {
                write!(f, "non-finite value in {field} of {stratum}")
            }
            Violation::LawOnDeadCell { stratum, arm } => {
                write!(f, "outcome law on dead cell: {stratum} under {arm}")
            }
            Violation::MissingLaw { stratum, arm } => {
                write!(f, "missing outcome law: {stratum} survives under {arm}")
            }
            Violation::NegativeSd { stratum, field, sd } => {
                write!(f, "negative sd {sd} in {field} of {stratum}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("pass");
        }
        let messages: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "fail: {}", messages.join("; "))
    }
}

/// Check every population invariant. Never fails; violations are collected.
///
/// A stratum with zero proportion may omit the laws of arms in which it
/// survives. Laws on dead cells are always a violation.
pub fn validate(pop: &PopulationSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut sum = 0.0;
    for spec in pop.strata() {
        let stratum = spec.stratum;
        if !spec.proportion.is_finite() {
            violations.push(Violation::NonFinite {
                stratum,
                field: "proportion",
            });
        } else if spec.proportion < 0.0 {
            violations.push(Violation::NegativeProportion {
                stratum,
                value: spec.proportion,
            });
        }
        sum += spec.proportion;

        for arm in Arm::BOTH {
            let field = match arm {
                Arm::Treatment => "qol_t",
                Arm::Control => "qol_c",
            };
            match (spec.law(arm), stratum.survives(arm)) {
                (Some(_), false) => violations.push(Violation::LawOnDeadCell { stratum, arm }),
                (None, true) if spec.proportion > 0.0 => {
                    violations.push(Violation::MissingLaw { stratum, arm })
                }
                (Some(law), true) => check_law(law, stratum, field, &mut violations),
                _ => {}
            }
        }
        if let Some(law) = &spec.covariate {
            check_law(law, stratum, "x", &mut violations);
        }
    }
    if sum.is_finite() && (sum - 1.0).abs() > PROPORTION_TOLERANCE {
        violations.push(Violation::ProportionSum { sum });
    }
    ValidationReport { violations }
}

fn check_law(
    law: &NormalLaw,
    stratum: PrincipalStratum,
    field: &'static str,
    out: &mut Vec<Violation>,
) {
    if !law.mean.is_finite() || !law.sd.is_finite() {
        out.push(Violation::NonFinite { stratum, field });
    } else if law.sd < 0.0 {
        out.push(Violation::NegativeSd {
            stratum,
            field,
            sd: law.sd,
        });
    }
}

/// Mean outcome difference (treated minus control) within the LL stratum.
///
/// `None` when the LL stratum is empty or lacks an outcome law.
pub fn true_sace(pop: &PopulationSpec) -> Option<f64> {
    let ll = pop.stratum(PrincipalStratum::LL);
    if ll.proportion <= 0.0 {
        return None;
    }
    Some(ll.qol_t?.mean - ll.qol_c?.mean)
}

/// Share of the population alive under `arm`.
///
/// Adding up the surviving strata and subtracting the dying ones from 1 are
/// equally accurate when the proportions sum to 1, yet can differ in the last
/// bit (0.2 + 0.4 rounds up, 1 - (0.2 + 0.2) lands on 0.6). Between two such
/// candidates the one with the shorter decimal form wins, so proportions
/// written as decimals give the decimal answer.
pub fn true_survival_rate(pop: &PopulationSpec, arm: Arm) -> f64 {
    let (mut alive, mut dead) = (0.0, 0.0);
    for s in pop.strata() {
        if s.stratum.survives(arm) {
            alive += s.proportion;
        } else {
            dead += s.proportion;
        }
    }
    let complement = 1.0 - dead;
    let digits = |x: f64| x.to_string().len();
    if (alive - complement).abs() <= 4.0 * f64::EPSILON && digits(complement) < digits(alive) {
        complement
    } else {
        alive
    }
}

/// Reference populations used throughout the docs and tests.
pub mod fixtures {
    use super::*;

    /// The running four-strata example with point-mass outcome laws.
    pub fn running_example() -> PopulationSpec {
        PopulationSpec::new(vec![
            StratumSpec::empty(PrincipalStratum::LL, 0.2)
                .with_law(Arm::Treatment, NormalLaw::point(900.0))
                .with_law(Arm::Control, NormalLaw::point(700.0)),
            StratumSpec::empty(PrincipalStratum::LD, 0.4)
                .with_law(Arm::Treatment, NormalLaw::point(600.0)),
            StratumSpec::empty(PrincipalStratum::DL, 0.2)
                .with_law(Arm::Control, NormalLaw::point(800.0)),
            StratumSpec::empty(PrincipalStratum::DD, 0.2),
        ])
        .expect("four distinct strata")
    }

    /// Running example with a baseline covariate separating the strata.
    /// `x_sd` is the within-stratum covariate spread.
    pub fn covariate_example(x_sd: f64) -> PopulationSpec {
        let mut pop = running_example();
        for (stratum, x) in [
            (PrincipalStratum::LL, 800.0),
            (PrincipalStratum::LD, 500.0),
            (PrincipalStratum::DL, 900.0),
            (PrincipalStratum::DD, 300.0),
        ] {
            pop.stratum_mut(stratum).covariate = Some(NormalLaw::new(x, x_sd));
        }
        pop
    }

    /// Running example with normal outcome spreads.
    pub fn normal_example() -> PopulationSpec {
        PopulationSpec::new(vec![
            StratumSpec::empty(PrincipalStratum::LL, 0.2)
                .with_law(Arm::Treatment, NormalLaw::new(900.0, 70.0))
                .with_law(Arm::Control, NormalLaw::new(700.0, 50.0)),
            StratumSpec::empty(PrincipalStratum::LD, 0.4)
                .with_law(Arm::Treatment, NormalLaw::new(600.0, 40.0)),
            StratumSpec::empty(PrincipalStratum::DL, 0.2)
                .with_law(Arm::Control, NormalLaw::new(800.0, 60.0)),
            StratumSpec::empty(PrincipalStratum::DD, 0.2),
        ])
        .expect("four distinct strata")
    }

    /// Population made of a single stratum.
    pub fn pure(stratum: PrincipalStratum, qol_t: f64, qol_c: f64) -> PopulationSpec {
        let strata = PrincipalStratum::ALL
            .into_iter()
            .map(|s| {
                let mut spec = StratumSpec::empty(s, if s == stratum { 1.0 } else { 0.0 });
                if s == stratum {
                    if s.survives(Arm::Treatment) {
                        spec.qol_t = Some(NormalLaw::point(qol_t));
                    }
                    if s.survives(Arm::Control) {
                        spec.qol_c = Some(NormalLaw::point(qol_c));
                    }
                }
                spec
            })
            .collect();
        PopulationSpec::new(strata).expect("four distinct strata")
    }
}
