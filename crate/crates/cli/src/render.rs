//! Plain-text rendering: aligned tables and stable number formatting.

use sacekit::estimators::bounds::{ArmTrim, TrimRule};
use sacekit::estimators::AssumptionSet;
use sacekit::trial::{ObservedCell, ObservedSummary};
use sacekit::{classify_group, NormalLaw, PopulationSpec, PrincipalStratum};

/// Atoms listed individually up to this many; larger supports are summarized.
const MAX_LISTED_ATOMS: usize = 8;

/// Six decimals, trailing zeros dropped, negative zero printed as `0`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "undefined".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn interval(lo: f64, hi: f64) -> String {
    format!("[{}, {}]", num(lo), num(hi))
}

pub fn law(l: &NormalLaw) -> String {
    if l.is_point_mass() {
        num(l.mean)
    } else {
        format!("N({}, {})", num(l.mean), num(l.sd))
    }
}

pub fn assumptions(a: &AssumptionSet) -> String {
    let mut parts = Vec::new();
    if a.monotonicity {
        parts.push("monotonicity");
    }
    if a.stochastic_dominance {
        parts.push("dominance");
    }
    if a.exclusion {
        parts.push("exclusion");
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(", ")
    }
}

pub fn trim(t: &ArmTrim) -> String {
    let how = match t.rule {
        TrimRule::Top if t.fraction == 0.0 => "survivor maximum".to_string(),
        TrimRule::Bottom if t.fraction == 0.0 => "survivor minimum".to_string(),
        TrimRule::Top => format!("top {} of survivors", num(t.fraction)),
        TrimRule::Bottom => format!("bottom {} of survivors", num(t.fraction)),
        TrimRule::SurvivorMean => "survivor mean".to_string(),
        TrimRule::LinearProgram => format!("lp, fraction {}", num(t.fraction)),
    };
    format!("{} ({how})", num(t.ll_mean))
}

#[derive(Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self
            .rows
            .iter()
            .map(Vec::len)
            .chain([self.header.len()])
            .max()
            .unwrap_or(0);
        let mut widths = vec![0; cols];
        for line in std::iter::once(&self.header).chain(&self.rows) {
            for (i, cell) in line.iter().enumerate() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let mut text = String::new();
            for (i, cell) in line.iter().enumerate() {
                if i > 0 {
                    text.push_str("  ");
                }
                text.push_str(cell);
                let pad = widths[i] - cell.chars().count();
                text.extend(std::iter::repeat_n(' ', pad));
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Strata rows with the outcome law under each arm; `*` where the stratum
/// is dead and no outcome exists.
pub fn strata_table(pop: &PopulationSpec, with_covariate: bool) -> String {
    let mut header = vec!["stratum", "share", "QOL under T", "QOL under C"];
    if with_covariate {
        header.push("X");
    }
    let mut table = Table::new(header);
    for s in PrincipalStratum::ALL {
        let spec = pop.stratum(s);
        let cell = |arm| {
            if !s.survives(arm) {
                "*".to_string()
            } else {
                spec.law(arm).map_or_else(|| "-".to_string(), law)
            }
        };
        let mut row = vec![
            s.label().to_string(),
            num(spec.proportion),
            cell(sacekit::Arm::Treatment),
            cell(sacekit::Arm::Control),
        ];
        if with_covariate {
            row.push(spec.covariate.as_ref().map_or_else(|| "-".to_string(), law));
        }
        table.row(row);
    }
    table.render()
}

fn outcome_law(cell: &ObservedCell) -> String {
    if cell.s == sacekit::Survival::Dead {
        return "*".into();
    }
    if let Some(dist) = &cell.dist_y {
        if dist.is_empty() {
            return "-".into();
        }
        if dist.len() > MAX_LISTED_ATOMS {
            return format!("{} distinct values", dist.len());
        }
        return dist
            .atoms()
            .iter()
            .map(|a| format!("{} w.p. {}", num(a.value), num(a.mass / dist.total_mass())))
            .collect::<Vec<_>>()
            .join(", ");
    }
    if cell.mixture.is_empty() {
        return "-".into();
    }
    cell.mixture
        .iter()
        .map(|t| format!("{} {}", num(t.weight), law(&t.law)))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// One row per observed (assignment, survival) cell.
pub fn observed_table(summary: &ObservedSummary) -> String {
    let counted = summary.cells.iter().any(|c| c.count.is_some());
    let mut header = vec!["Z", "S", "share"];
    if counted {
        header.push("count");
    }
    header.extend(["mean QOL", "QOL law", "strata"]);
    let mut table = Table::new(header);
    for cell in &summary.cells {
        let [a, b] = classify_group(cell.z, cell.s);
        let mut row = vec![cell.z.code().to_string(), cell.s.code().to_string(), num(cell.share)];
        if counted {
            row.push(cell.count.map_or_else(String::new, |c| c.to_string()));
        }
        row.push(match (cell.s, cell.mean_y) {
            (sacekit::Survival::Dead, _) => "*".into(),
            (_, Some(m)) => num(m),
            (_, None) => "-".into(),
        });
        row.push(outcome_law(cell));
        row.push(format!("{} or {}", a.label(), b.label()));
        table.row(row);
    }
    table.render()
}
