//! Command-line interface: `analyze` fits estimators to a CSV file and
//! `simulate` runs the Monte Carlo benchmarks.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators;
use crate::inference::{holm_adjust, two_sided_p};
use crate::model::{CaseControlDesign, Dataset, EstimateResult, EstimatorKind, Link};
use crate::simulation::checks::{calibration_checks, reference_checks, CheckOutcome};
use crate::simulation::{
    run_replicates, LogMeanForm, NormalScale, ScenarioKind, SimulationConfig, DEFAULT_POOL_SIZE,
};

#[derive(Debug, Parser)]
#[command(name = "cfipw", version, about = "Secondary-outcome regression for case-control studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit estimators to a case-control data set.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo simulation study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Identity,
    Log,
}

impl From<LinkArg> for Link {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Identity => Link::Identity,
            LinkArg::Log => Link::Log,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Secondary outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Disease indicator column (0/1).
    #[arg(long)]
    pub disease: String,
    /// Covariates of the mean model.
    #[arg(long, value_delimiter = ',')]
    pub mean_cols: Vec<String>,
    /// Covariates of the selection-bias function; defaults to the mean
    /// covariates.
    #[arg(long, value_delimiter = ',')]
    pub sel_cols: Option<Vec<String>>,
    /// Covariates of the disease model; defaults to the mean covariates.
    #[arg(long, value_delimiter = ',')]
    pub dis_cols: Option<Vec<String>>,
    /// Do not prepend an intercept to the designs.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long, value_enum, default_value = "identity")]
    pub link: LinkArg,
    /// Population disease prevalence.
    #[arg(long)]
    pub prevalence: f64,
    /// Estimators to fit.
    #[arg(long, value_delimiter = ',', default_value = "cont,ipw,pooled,dind")]
    pub estimators: Vec<String>,
    /// Exposure columns scanned one at a time; each is appended to all
    /// three designs.
    #[arg(long, value_delimiter = ',')]
    pub scan: Option<Vec<String>>,
    /// Worker threads for scan mode; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Built-in scenario.
    #[arg(long, required_unless_present = "config")]
    pub scenario: Option<String>,
    /// JSON simulation configuration; command-line options override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Summary CSV; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Compare a built-in scenario with its reference values and exit
    /// non-zero on any failure.
    #[arg(long)]
    pub check: bool,
    #[arg(long, value_parser = ["sd", "variance"])]
    pub normal_scale: Option<String>,
    #[arg(long, value_parser = ["consistent", "display"])]
    pub log_mean_form: Option<String>,
    #[arg(long)]
    pub pool_size: Option<usize>,
}

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        let &j = self
            .index
            .get(name)
            .ok_or_else(|| Error::invalid(format!("column `{name}` not found")))?;
        Ok(self.data.column(j).into_owned())
    }

    fn design(&self, names: &[String], intercept: bool) -> Result<DMatrix<f64>> {
        let n = self.data.nrows();
        let k = names.len() + usize::from(intercept);
        let mut x = DMatrix::zeros(n, k);
        if intercept {
            x.column_mut(0).fill(1.0);
        }
        for (j, name) in names.iter().enumerate() {
            x.set_column(j + usize::from(intercept), &self.column(name)?);
        }
        Ok(x)
    }
}

/// Reads a CSV with a header row; every used cell must parse as a number.
pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut reader = csv::Reader::from_reader(input);
    let columns: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid(format!(
                    "row {}, column `{}`: cannot parse `{cell}` as a number",
                    i + 1,
                    columns[j]
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let index = columns.iter().enumerate().map(|(j, c)| (c.clone(), j)).collect();
    Ok(Table {
        data: DMatrix::from_row_slice(rows, columns.len(), &values),
        columns,
        index,
    })
}

/// One reported coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub coefficient: String,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub p_holm: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn from_fit(estimator: &str, coefficient: &str, fit: &EstimateResult, j: usize) -> Self {
        let est = fit.beta[j];
        let se = fit.std_errors[j];
        let z = est / se;
        Self {
            estimator: estimator.to_string(),
            coefficient: coefficient.to_string(),
            estimate: Some(est),
            std_error: Some(se),
            z: Some(z),
            p_value: Some(two_sided_p(z)),
            p_holm: None,
            error: None,
        }
    }

    fn failed(estimator: &str, coefficient: &str, err: &Error) -> Self {
        Self {
            estimator: estimator.to_string(),
            coefficient: coefficient.to_string(),
            estimate: None,
            std_error: None,
            z: None,
            p_value: None,
            p_holm: None,
            error: Some(err.to_string()),
        }
    }
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>> {
    names.iter().map(|s| s.trim().parse()).collect()
}

fn mean_names(args: &AnalyzeArgs) -> Vec<String> {
    let mut names = Vec::new();
    if !args.no_intercept {
        names.push("Intercept".to_string());
    }
    names.extend(args.mean_cols.iter().cloned());
    names
}

fn build_dataset(table: &Table, args: &AnalyzeArgs) -> Result<Dataset> {
    let intercept = !args.no_intercept;
    let sel = args.sel_cols.as_ref().unwrap_or(&args.mean_cols);
    let dis = args.dis_cols.as_ref().unwrap_or(&args.mean_cols);
    let data = Dataset::new(
        table.column(&args.outcome)?,
        table.column(&args.disease)?,
        table.design(&args.mean_cols, intercept)?,
        table.design(sel, intercept)?,
        table.design(dis, intercept)?,
    )?;
    data.check_link(args.link.into())?;
    Ok(data)
}

/// Runs `analyze` and returns the result rows.
pub fn analyze(table: &Table, args: &AnalyzeArgs) -> Result<Vec<ResultRow>> {
    let kinds = parse_estimators(&args.estimators)?;
    let link: Link = args.link.into();
    let data = build_dataset(table, args)?;
    let design = CaseControlDesign::from_indicator(args.prevalence, &data.d)?;

    let Some(scan) = &args.scan else {
        let names = mean_names(args);
        let mut rows = Vec::new();
        for kind in kinds {
            let fit = estimators::fit(kind, &data, link, &design)
                .map_err(|e| Error::invalid(format!("{kind}: {e}")))?;
            for (j, name) in names.iter().enumerate() {
                rows.push(ResultRow::from_fit(&kind.to_string(), name, &fit, j));
            }
        }
        return Ok(rows);
    };

    let columns = scan
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let q = data.x_mean.ncols();
    let fits: Vec<Vec<ResultRow>> = pool.install(|| {
        scan.par_iter()
            .zip(columns.par_iter())
            .map(|(name, col)| {
                let augmented = data.with_appended_column(col);
                kinds
                    .iter()
                    .map(|&kind| {
                        let label = kind.to_string();
                        match augmented
                            .as_ref()
                            .map_err(|e| Error::invalid(e.to_string()))
                            .and_then(|d| estimators::fit(kind, d, link, &design))
                        {
                            Ok(fit) => ResultRow::from_fit(&label, name, &fit, q),
                            Err(e) => ResultRow::failed(&label, name, &e),
                        }
                    })
                    .collect()
            })
            .collect()
    });

    // Holm adjustment per estimator across the exposures that were fitted.
    let mut rows: Vec<ResultRow> = fits.into_iter().flatten().collect();
    for kind in &kinds {
        let label = kind.to_string();
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].estimator == label && rows[i].p_value.is_some())
            .collect();
        let p: Vec<f64> = idx.iter().map(|&i| rows[i].p_value.unwrap_or(1.0)).collect();
        for (&i, adj) in idx.iter().zip(holm_adjust(&p)) {
            rows[i].p_holm = Some(adj);
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_analyze(args: &AnalyzeArgs) -> Result<()> {
    let table = read_table(File::open(&args.input)?)?;
    let rows = analyze(&table, args)?;
    write_rows(&rows, args.format, output_writer(args.output.as_deref())?)
}

/// Builds the simulation configuration from a config file and/or flags.
pub fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_reader(File::open(path)?)?,
        None => SimulationConfig::builtin(ScenarioKind::IdentitySingle, 1000, 1),
    };
    if let Some(s) = &args.scenario {
        cfg.scenario = Some(s.parse()?);
        cfg.model = None;
    }
    if let Some(r) = args.reps {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(p) = args.pool_size {
        cfg.pool_size = p;
    } else if cfg.pool_size == 0 {
        cfg.pool_size = DEFAULT_POOL_SIZE;
    }
    match args.normal_scale.as_deref() {
        Some("variance") => cfg.normal_scale = NormalScale::Variance,
        Some(_) => cfg.normal_scale = NormalScale::Sd,
        None => {}
    }
    match args.log_mean_form.as_deref() {
        Some("display") => cfg.log_mean_form = LogMeanForm::Display,
        Some(_) => cfg.log_mean_form = LogMeanForm::Consistent,
        None => {}
    }
    Ok(cfg)
}

fn run_simulate(args: &SimulateArgs) -> Result<bool> {
    let cfg = simulation_config(args)?;
    let summary = run_replicates(&cfg)?;
    match &args.output {
        Some(path) => {
            summary.write_csv(io::BufWriter::new(File::create(path)?))?;
            print!("{}", summary.to_text());
        }
        None => {
            summary.write_csv(io::stdout().lock())?;
            eprint!("{}", summary.to_text());
        }
    }
    if !args.check {
        return Ok(true);
    }
    let kind = match (&cfg.model, cfg.scenario) {
        (None, Some(kind)) => kind,
        _ => return Err(Error::invalid("--check needs a built-in scenario")),
    };
    let outcomes: Vec<CheckOutcome> = reference_checks(kind, &summary)
        .into_iter()
        .chain(calibration_checks(kind, &summary))
        .collect();
    for c in &outcomes {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.label, c.value);
    }
    Ok(outcomes.iter().all(|c| c.pass))
}

pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Analyze(a) => run_analyze(a).map(|_| true),
        Command::Simulate(s) => run_simulate(s),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
