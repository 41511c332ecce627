//! Batch front end for `sacekit`: population configs in, reports out.
//!
//! [`run`] executes one [`RunConfig`] and returns the exit status together
//! with everything that would go to stdout and stderr, so the binary is a
//! thin wrapper and the whole pipeline can be driven from tests.

pub mod docs;
pub mod render;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

use sacekit::covariate::{group_by_covariate, recover_principal_table, BinningRule, CovariateError};
use sacekit::estimators::{
    ive_zero_imputation, naive_survivor_contrast, sace_bounds, ArmObservation, AssumptionSet,
    BoundOptions, BoundsResult, DominanceMode, EstimateError,
};
use sacekit::mixture::{em_fit, identify_strata, sace_candidates, EmOptions, MixtureError};
use sacekit::trial::{read_records_csv, write_records_csv, ObservedSummary, TrialError};
use sacekit::{
    assign_and_observe, empirical_summary, expected_observed_summary, true_sace,
    true_survival_rate, validate, Arm, PopulationSpec, Survival, UnitRecord,
};

use docs::{
    BoundsDoc, CovariateDoc, EmDoc, EstimateDoc, ObserveDoc, ReportDoc, ReportEstimate, TruthDoc,
};
use render::{num, Table};

/// Quantile points per stratum when a continuous expected survivor law is
/// discretized for the bounds engine.
pub const DISCRETIZE_POINTS: usize = 2000;

pub const DEFAULT_N: u64 = 100_000;

fn discretized_warning() -> String {
    format!(
        "continuous outcome laws are discretized at {DISCRETIZE_POINTS} quantile points per stratum; \
         endpoints reached as the LL share vanishes sit at the extreme points and grow without bound \
         as the discretization is refined"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Strata table, true SACE and survival rates of a population.
    Truth,
    /// Simulate a trial and write its records as CSV.
    Simulate,
    /// Observed cell summary, expected or from records.
    Observe,
    /// Survivor mean contrast (not causal).
    Naive,
    /// Zero-imputation IV ratio (not causal).
    Ive,
    /// Bounds on the SACE under the chosen assumptions.
    Bounds,
    /// Normal-mixture fits and strata identification.
    Em,
    /// Strata table from a separating covariate.
    CovariateRecover,
    /// Truth next to every estimator.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Assumption {
    Monotonicity,
    #[value(alias = "stochastic-dominance")]
    Dominance,
    Exclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum DominanceForm {
    #[default]
    Mean,
    FirstOrder,
}

#[derive(Debug, Parser)]
#[command(name = "sacekit", version, about = "Principal strata and survivor average causal effects")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Population config (popspec/1 JSON).
    #[arg(long)]
    pub pop: Option<PathBuf>,
    /// Trial records CSV (id,x,z,s,y).
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial size when simulating.
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: u64,
    /// Assumptions for the bounds, repeatable or comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub assume: Vec<Assumption>,
    #[arg(long, value_enum, default_value_t = DominanceForm::Mean)]
    pub dominance_form: DominanceForm,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub output_format: OutputFormat,
    /// LL-share grid size for the bounds.
    #[arg(long, env = "SACEKIT_GRID_POINTS", default_value_t = BoundOptions::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Relative tolerance for matching LL shares across arms.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    /// Covariate bin width; exact values when absent.
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Survival rate at or above which a covariate group counts as alive.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the recovered population here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub pop_path: Option<PathBuf>,
    pub records_path: Option<PathBuf>,
    pub seed: u64,
    pub n: u64,
    pub assumptions: AssumptionSet,
    pub dominance: DominanceMode,
    pub output_format: OutputFormat,
    pub grid_points: usize,
    pub tol: f64,
    pub bin_width: Option<f64>,
    pub threshold: f64,
    pub out_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            pop_path: None,
            records_path: None,
            seed: 0,
            n: DEFAULT_N,
            assumptions: AssumptionSet::NONE,
            dominance: DominanceMode::Mean,
            output_format: OutputFormat::Table,
            grid_points: BoundOptions::DEFAULT_GRID_POINTS,
            tol: 0.05,
            bin_width: None,
            threshold: 0.5,
            out_path: None,
        }
    }
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        let mut assumptions = AssumptionSet::NONE;
        for a in &cli.assume {
            match a {
                Assumption::Monotonicity => assumptions.monotonicity = true,
                Assumption::Dominance => assumptions.stochastic_dominance = true,
                Assumption::Exclusion => assumptions.exclusion = true,
            }
        }
        Self {
            command: cli.command,
            pop_path: cli.pop,
            records_path: cli.records,
            seed: cli.seed,
            n: cli.n,
            assumptions,
            dominance: match cli.dominance_form {
                DominanceForm::Mean => DominanceMode::Mean,
                DominanceForm::FirstOrder => DominanceMode::FirstOrder,
            },
            output_format: cli.output_format,
            grid_points: cli.grid_points,
            tol: cli.tol,
            bin_width: cli.bin_width,
            threshold: cli.threshold,
            out_path: cli.out,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Parse(String),
    #[error("estimation infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl From<TrialError> for CliError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Csv(_) => CliError::Parse(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::InvalidObservation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<MixtureError> for CliError {
    fn from(e: MixtureError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

impl From<CovariateError> for CliError {
    fn from(e: CovariateError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// What one invocation produced.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Text for stdout plus an optional failure that still lets the text through,
/// such as infeasible bounds that are worth showing.
struct Emitted {
    stdout: String,
    warnings: Vec<String>,
    failure: Option<CliError>,
}

impl Emitted {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

pub fn run(config: &RunConfig) -> Outcome {
    let result = match config.command {
        Command::Truth => cmd_truth(config),
        Command::Simulate => cmd_simulate(config),
        Command::Observe => cmd_observe(config),
        Command::Naive => cmd_foil(config, Foil::Naive),
        Command::Ive => cmd_foil(config, Foil::Ive),
        Command::Bounds => cmd_bounds(config),
        Command::Em => cmd_em(config),
        Command::CovariateRecover => cmd_covariate(config),
        Command::Report => cmd_report(config),
    };
    match result {
        Ok(emitted) => {
            let mut stderr: String = emitted
                .warnings
                .iter()
                .map(|w| format!("warning: {w}\n"))
                .collect();
            let code = match emitted.failure {
                Some(e) => {
                    stderr.push_str(&format!("error: {e}\n"));
                    e.exit_code()
                }
                None => 0,
            };
            Outcome {
                code,
                stdout: emitted.stdout,
                stderr,
            }
        }
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn load_population(path: &Path) -> Result<PopulationSpec, CliError> {
    let text = read_file(path)?;
    let pop = PopulationSpec::from_json(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let report = validate(&pop);
    if !report.is_valid() {
        return Err(CliError::Validation(format!("{}: {report}", path.display())));
    }
    Ok(pop)
}

pub fn load_records(path: &Path) -> Result<Vec<UnitRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    read_records_csv(file).map_err(|e| match e {
        TrialError::Csv(_) => CliError::Parse(format!("{}: {e}", path.display())),
        _ => CliError::Validation(format!("{}: {e}", path.display())),
    })
}

fn require_pop(config: &RunConfig) -> Result<PopulationSpec, CliError> {
    if config.records_path.is_some() {
        return Err(CliError::Parse(format!(
            "{} takes --pop, not --records",
            command_name(config.command)
        )));
    }
    match &config.pop_path {
        Some(p) => load_population(p),
        None => Err(CliError::Parse(format!(
            "{} needs --pop",
            command_name(config.command)
        ))),
    }
}

enum Source {
    Population(Box<PopulationSpec>),
    Records(Vec<UnitRecord>),
}

impl Source {
    fn label(&self) -> &'static str {
        match self {
            Source::Population(_) => "expected",
            Source::Records(_) => "records",
        }
    }

    fn summary(&self) -> Result<ObservedSummary, CliError> {
        match self {
            Source::Population(pop) => Ok(expected_observed_summary(pop)),
            Source::Records(records) => Ok(empirical_summary(records)?),
        }
    }

    /// Records as given, or simulated from the population.
    fn into_records(self, config: &RunConfig) -> Result<(&'static str, Vec<UnitRecord>), CliError> {
        match self {
            Source::Population(pop) => Ok(("simulated", assign_and_observe(&pop, config.n, config.seed)?)),
            Source::Records(records) => Ok(("records", records)),
        }
    }
}

fn require_source(config: &RunConfig) -> Result<Source, CliError> {
    match (&config.pop_path, &config.records_path) {
        (Some(p), None) => Ok(Source::Population(Box::new(load_population(p)?))),
        (None, Some(r)) => Ok(Source::Records(load_records(r)?)),
        (Some(_), Some(_)) => Err(CliError::Parse("give either --pop or --records, not both".into())),
        (None, None) => Err(CliError::Parse(format!(
            "{} needs --pop or --records",
            command_name(config.command)
        ))),
    }
}

fn command_name(c: Command) -> String {
    c.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}

fn to_json<T: serde::Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn truth_doc(pop: &PopulationSpec) -> TruthDoc {
    TruthDoc {
        schema: docs::TRUTH_SCHEMA.into(),
        population: pop.clone(),
        sace: true_sace(pop),
        survival_rate_t: true_survival_rate(pop, Arm::Treatment),
        survival_rate_c: true_survival_rate(pop, Arm::Control),
    }
}

fn truth_text(doc: &TruthDoc) -> String {
    let mut out = render::strata_table(&doc.population, has_covariate(&doc.population));
    out.push_str(&format!(
        "\nSACE           {}\nsurvival rate  T {}  C {}\n",
        doc.sace.map_or_else(|| "undefined (no LL stratum)".into(), num),
        num(doc.survival_rate_t),
        num(doc.survival_rate_c)
    ));
    out
}

fn has_covariate(pop: &PopulationSpec) -> bool {
    pop.strata().iter().any(|s| s.covariate.is_some())
}

fn cmd_truth(config: &RunConfig) -> Result<Emitted, CliError> {
    let pop = require_pop(config)?;
    let doc = truth_doc(&pop);
    Ok(Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => truth_text(&doc),
    }))
}

fn cmd_simulate(config: &RunConfig) -> Result<Emitted, CliError> {
    let pop = require_pop(config)?;
    let records = assign_and_observe(&pop, config.n, config.seed)?;
    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf)?;
    let mut emitted = Emitted::ok(String::from_utf8(buf).expect("csv is utf-8"));
    if config.output_format == OutputFormat::Json {
        emitted
            .warnings
            .push("simulate always writes CSV records".into());
    }
    Ok(emitted)
}

fn cmd_observe(config: &RunConfig) -> Result<Emitted, CliError> {
    let source = require_source(config)?;
    let doc = ObserveDoc {
        schema: docs::OBSERVE_SCHEMA.into(),
        source: source.label().into(),
        summary: source.summary()?,
    };
    Ok(Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => observe_text(&doc.summary),
    }))
}

fn observe_text(summary: &ObservedSummary) -> String {
    let mut out = render::observed_table(summary);
    out.push_str(&format!(
        "\nsurvival rate  T {}  C {}\nsurvivor mean  T {}  C {}\n",
        num(summary.survival_rate(Arm::Treatment)),
        num(summary.survival_rate(Arm::Control)),
        summary.survivor_mean(Arm::Treatment).map_or_else(|| "-".into(), num),
        summary.survivor_mean(Arm::Control).map_or_else(|| "-".into(), num),
    ));
    out
}

#[derive(Clone, Copy)]
enum Foil {
    Naive,
    Ive,
}

const NAIVE_NOTE: &str =
    "not causal: treated and control survivors come from different strata";
const IVE_NOTE: &str =
    "not causal: zero imputation and exclusion make the ratio unrelated to the survivors' effect";

fn foil_doc(summary: &ObservedSummary, foil: Foil) -> Result<EstimateDoc, CliError> {
    let (estimator, estimate, note) = match foil {
        Foil::Naive => ("naive_survivor_contrast", naive_survivor_contrast(summary)?, NAIVE_NOTE),
        Foil::Ive => ("ive_zero_imputation", ive_zero_imputation(summary)?, IVE_NOTE),
    };
    Ok(EstimateDoc {
        schema: docs::ESTIMATE_SCHEMA.into(),
        estimator: estimator.into(),
        estimate,
        causal: false,
        note: note.into(),
    })
}

fn cmd_foil(config: &RunConfig, foil: Foil) -> Result<Emitted, CliError> {
    let source = require_source(config)?;
    let doc = foil_doc(&source.summary()?, foil)?;
    Ok(Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => format!(
            "{}  {}\n{}\n",
            doc.estimator.replace('_', " "),
            num(doc.estimate),
            doc.note
        ),
    }))
}

fn arm_observations(summary: &ObservedSummary) -> Result<(ArmObservation, ArmObservation), CliError> {
    Ok((
        ArmObservation::from_summary(summary, Arm::Treatment, DISCRETIZE_POINTS)?,
        ArmObservation::from_summary(summary, Arm::Control, DISCRETIZE_POINTS)?,
    ))
}

fn bound_options(config: &RunConfig) -> Result<BoundOptions, CliError> {
    if config.grid_points < 2 {
        return Err(CliError::Validation(format!(
            "grid points must be at least 2, got {}",
            config.grid_points
        )));
    }
    Ok(BoundOptions {
        grid_points: config.grid_points,
        dominance: config.dominance,
    })
}

fn bounds_text(b: &BoundsResult) -> String {
    let mut out = format!("assumptions  {}\n", render::assumptions(&b.assumptions));
    if !b.feasible {
        out.push_str("SACE bounds  infeasible: the assumptions contradict the observed survival rates\n");
        return out;
    }
    if let Some(r) = &b.pi_ll_range {
        let lo = if r.lo_open { format!("({}", num(r.lo)) } else { format!("[{}", num(r.lo)) };
        out.push_str(&format!("LL share     {lo}, {}]\n", num(r.hi)));
    }
    out.push_str(&format!("SACE bounds  {}\n", render::interval(b.lower, b.upper)));
    if let Some(at) = &b.attained_at {
        let mut table = Table::new(["endpoint", "value", "LL share", "treated LL mean", "control LL mean"]);
        for (name, value, a) in [("lower", b.lower, &at.lower), ("upper", b.upper, &at.upper)] {
            let share = if a.limit {
                format!("-> {}", num(a.pi_ll))
            } else {
                num(a.pi_ll)
            };
            table.row([
                name.to_string(),
                num(value),
                share,
                render::trim(&a.treated),
                render::trim(&a.control),
            ]);
        }
        out.push('\n');
        out.push_str(&table.render());
    }
    out
}

fn cmd_bounds(config: &RunConfig) -> Result<Emitted, CliError> {
    let source = require_source(config)?;
    let opts = bound_options(config)?;
    let (t, c) = arm_observations(&source.summary()?)?;
    let bounds = sace_bounds(&t, &c, &config.assumptions, &opts)?;
    let doc = BoundsDoc {
        schema: docs::BOUNDS_SCHEMA.into(),
        source: source.label().into(),
        dominance: config.dominance,
        bounds,
    };
    let mut emitted = Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => bounds_text(&doc.bounds),
    });
    if let Source::Population(pop) = &source {
        if !pop.is_point_mass() {
            emitted.warnings.push(discretized_warning());
        }
    }
    if config.assumptions.exclusion {
        emitted
            .warnings
            .push("exclusion does not narrow the bounds; it concerns the LL effect itself".into());
    }
    if !doc.bounds.feasible {
        emitted.failure = Some(CliError::Infeasible(format!(
            "monotonicity needs survival under T ({}) at least survival under C ({})",
            num(t.survival_rate()),
            num(c.survival_rate())
        )));
    }
    Ok(emitted)
}

fn survivor_outcomes(records: &[UnitRecord], arm: Arm) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.z == arm && r.s_obs == Survival::Alive)
        .filter_map(|r| r.y_obs)
        .collect()
}

fn fit_and_identify(records: &[UnitRecord], source: &str, config: &RunConfig) -> Result<EmDoc, CliError> {
    if !(config.tol >= 0.0 && config.tol.is_finite()) {
        return Err(CliError::Validation(format!(
            "matching tolerance must be finite and non-negative, got {}",
            config.tol
        )));
    }
    let summary = empirical_summary(records)?;
    let y_t = survivor_outcomes(records, Arm::Treatment);
    let y_c = survivor_outcomes(records, Arm::Control);
    let opts = EmOptions::with_seed(config.seed);
    let fit_t = em_fit(&y_t, 2, &opts)?;
    let fit_c = em_fit(&y_c, 2, &opts)?;
    let p_t = summary.survival_rate(Arm::Treatment);
    let p_c = summary.survival_rate(Arm::Control);
    let (identification, sace, error) = match identify_strata(&fit_t, &fit_c, p_t, p_c, config.tol) {
        Ok(ident) => {
            let sace = sace_candidates(&ident, &fit_t, &fit_c);
            (Some(ident), sace, None)
        }
        Err(e) => (None, Vec::new(), Some(e.to_string())),
    };
    Ok(EmDoc {
        schema: docs::EM_SCHEMA.into(),
        source: source.into(),
        n_survivors_t: y_t.len(),
        n_survivors_c: y_c.len(),
        p_t,
        p_c,
        tol: config.tol,
        seed: config.seed,
        fit_t,
        fit_c,
        identification,
        sace_candidates: sace,
        error,
    })
}

fn em_text(doc: &EmDoc) -> String {
    let mut out = String::new();
    let mut fits = Table::new(["arm", "survivors", "survival", "weight", "mean", "sd", "iterations"]);
    for (arm, fit, n, p) in [
        ("T", &doc.fit_t, doc.n_survivors_t, doc.p_t),
        ("C", &doc.fit_c, doc.n_survivors_c, doc.p_c),
    ] {
        for (i, c) in fit.components.iter().enumerate() {
            let lead = |s: String| if i == 0 { s } else { String::new() };
            fits.row([
                lead(arm.into()),
                lead(n.to_string()),
                lead(num(p)),
                num(c.weight),
                num(c.mean),
                num(c.sd),
                lead(fit.iterations.to_string()),
            ]);
        }
    }
    out.push_str(&fits.render());
    match (&doc.identification, &doc.error) {
        (Some(ident), _) => {
            out.push('\n');
            let mut table = Table::new(["solution", "LL", "LD", "DL", "DD", "SACE"]);
            for (k, s) in ident.solutions.iter().enumerate() {
                let p = s.proportions;
                let sace = doc.fit_t.effective_components()[s.treated_ll].mean
                    - doc.fit_c.effective_components()[s.control_ll].mean;
                table.row([
                    (k + 1).to_string(),
                    num(p.ll),
                    num(p.ld),
                    num(p.dl),
                    num(p.dd),
                    num(sace),
                ]);
            }
            out.push_str(&table.render());
            let values: Vec<String> = doc.sace_candidates.iter().map(|v| num(*v)).collect();
            if ident.ambiguous {
                out.push_str(&format!(
                    "\nambiguous: the data cannot tell which labeling is right; the SACE is one of {}\n",
                    values.join(" or ")
                ));
            } else {
                out.push_str(&format!("\nSACE {}\n", values.join(", ")));
            }
        }
        (None, Some(e)) => out.push_str(&format!("\nidentification failed: {e}\n")),
        (None, None) => {}
    }
    out
}

fn cmd_em(config: &RunConfig) -> Result<Emitted, CliError> {
    let (source, records) = require_source(config)?.into_records(config)?;
    let doc = fit_and_identify(&records, source, config)?;
    let mut emitted = Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => em_text(&doc),
    });
    if let Some(e) = &doc.error {
        emitted.failure = Some(CliError::Infeasible(e.clone()));
    }
    Ok(emitted)
}

fn cmd_covariate(config: &RunConfig) -> Result<Emitted, CliError> {
    let (_, records) = require_source(config)?.into_records(config)?;
    let binning = match config.bin_width {
        Some(width) => BinningRule::Width { width, origin: 0.0 },
        None => BinningRule::Exact,
    };
    let groups = group_by_covariate(&records, binning)?;
    let recovered = recover_principal_table(&groups, config.threshold)?;
    if let Some(path) = &config.out_path {
        fs::write(path, recovered.population.to_json_pretty() + "\n")
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    }
    let doc = CovariateDoc {
        schema: docs::COVARIATE_SCHEMA.into(),
        sace: true_sace(&recovered.population),
        recovered,
    };
    let mut emitted = Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => covariate_text(&doc),
    });
    let flagged = doc.recovered.groups.iter().filter(|g| g.separation_warning).count();
    if flagged > 0 {
        emitted.warnings.push(format!(
            "{flagged} covariate group(s) have survival rates between 0.2 and 0.8; the covariate does not separate the strata and the table is low confidence"
        ));
    }
    Ok(emitted)
}

fn covariate_text(doc: &CovariateDoc) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), num);
    let mut groups = Table::new(["X", "n", "survival T", "survival C", "mean QOL T", "mean QOL C", "stratum", "warning"]);
    for g in &doc.recovered.groups {
        groups.row([
            num(g.x_center),
            g.n.to_string(),
            num(g.survival_rate_t),
            num(g.survival_rate_c),
            opt(g.mean_y_t),
            opt(g.mean_y_c),
            g.inferred_stratum.map_or_else(|| "-".into(), |s| s.label().to_string()),
            if g.separation_warning { "not separating".into() } else { String::new() },
        ]);
    }
    let mut out = groups.render();
    out.push('\n');
    out.push_str(&render::strata_table(&doc.recovered.population, true));
    out.push_str(&format!(
        "\nSACE        {}\nconfidence  {}\n",
        opt(doc.sace),
        if doc.recovered.low_confidence { "low" } else { "covariate separates the strata" }
    ));
    out
}

fn cmd_report(config: &RunConfig) -> Result<Emitted, CliError> {
    let pop = require_pop(config)?;
    let opts = bound_options(config)?;
    let truth = truth_doc(&pop);
    let summary = expected_observed_summary(&pop);
    let holding = AssumptionSet::holding_in(&pop);

    let foil = |f| foil_doc(&summary, f).map(|d| d.estimate).map_err(|e| e.to_string());
    let naive = foil(Foil::Naive);
    let ive = foil(Foil::Ive);
    let bounds = match arm_observations(&summary) {
        Ok((t, c)) => AssumptionSet::table_rows()
            .iter()
            .map(|a| sace_bounds(&t, &c, a, &opts).map_err(|e| e.to_string()))
            .collect(),
        Err(e) => vec![Err(e.to_string()); 4],
    };
    let em = if pop.is_point_mass() {
        None
    } else {
        let records = assign_and_observe(&pop, config.n, config.seed)?;
        Some(fit_and_identify(&records, "simulated", config).map_err(|e| e.to_string()))
    };

    let doc = ReportDoc {
        schema: docs::REPORT_SCHEMA.into(),
        truth,
        assumptions_holding: holding,
        summary,
        naive: ReportEstimate::from_result(naive, NAIVE_NOTE),
        ive: ReportEstimate::from_result(ive, IVE_NOTE),
        bounds: bounds.into_iter().map(docs::ReportBounds::from_result).collect(),
        em: em.map(docs::ReportEm::from_result),
        n: config.n,
        seed: config.seed,
    };
    let mut emitted = Emitted::ok(match config.output_format {
        OutputFormat::Json => to_json(&doc),
        OutputFormat::Table => report_text(&doc),
    });
    if !pop.is_point_mass() {
        emitted.warnings.push(discretized_warning());
    }
    Ok(emitted)
}

fn report_text(doc: &ReportDoc) -> String {
    let mut out = String::from("TRUTH\n");
    out.push_str(&truth_text(&doc.truth));
    out.push_str(&format!(
        "assumptions true of this population: {}\n",
        render::assumptions(&doc.assumptions_holding)
    ));
    out.push_str("\nOBSERVED (expected, infinite trial)\n");
    out.push_str(&observe_text(&doc.summary));

    out.push_str("\nESTIMATES OF THE SACE\n");
    let truth = doc.truth.sace;
    let mut table = Table::new(["estimator", "estimate", "causal", "covers truth", "note"]);
    table.row([
        "truth".to_string(),
        truth.map_or_else(|| "undefined".into(), num),
        String::new(),
        String::new(),
        String::new(),
    ]);
    for (name, e) in [("naive survivor contrast", &doc.naive), ("IVE, zero imputation", &doc.ive)] {
        let (value, hit) = match (e.estimate, truth) {
            (Some(v), Some(t)) => (num(v), yes_no((v - t).abs() <= 1e-9 * (1.0 + t.abs()))),
            (Some(v), None) => (num(v), "-".into()),
            (None, _) => ("n/a".into(), "-".into()),
        };
        let note = e.error.clone().unwrap_or_else(|| e.note.clone());
        table.row([name.to_string(), value, "no".into(), hit, note]);
    }
    for b in &doc.bounds {
        let (name, value, hit, note) = match &b.bounds {
            Some(r) => {
                let name = format!("bounds, {}", render::assumptions(&r.assumptions));
                if !r.feasible {
                    (name, "infeasible".into(), "-".into(), String::new())
                } else {
                    let hit = truth.map_or_else(|| "-".into(), |t| yes_no(r.contains(t, 1e-9)));
                    let held = r.assumptions.is_subset_of(&doc.assumptions_holding);
                    let note = if held { String::new() } else { "assumption false here".into() };
                    (name, render::interval(r.lower, r.upper), hit, note)
                }
            }
            None => ("bounds".into(), "n/a".into(), "-".into(), b.error.clone().unwrap_or_default()),
        };
        table.row([name, value, "yes".into(), hit, note]);
    }
    out.push_str(&table.render());

    out.push_str("\nMIXTURE IDENTIFICATION\n");
    match &doc.em {
        None => out.push_str("skipped: every outcome law is a point mass\n"),
        Some(em) => {
            out.push_str(&format!("simulated trial of {} units, seed {}\n", doc.n, doc.seed));
            match (&em.fit, &em.error) {
                (Some(fit), _) => out.push_str(&em_text(fit)),
                (None, Some(e)) => out.push_str(&format!("failed: {e}\n")),
                (None, None) => {}
            }
        }
    }
    out
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}
