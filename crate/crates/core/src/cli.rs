//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or input
//! error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::envelope::{
    build_bounded_sum_envelope, build_median_envelope, median, EnvelopeTable, NeighborModel,
    OutputRange,
};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismKind, MechanismSpec, Piecewise};
use crate::scores::q_plm;
use crate::verify::{
    run_suite, verify_bounded_range, verify_dp, Suite, SuiteConfig, VerificationReport,
    DEFAULT_GRID,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "PLM_SEED";

#[derive(Debug, Parser)]
#[command(name = "plm", version, about = "Piecewise Laplace mechanism toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an envelope table and write it as JSON or CSV.
    Envelope {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw samples from a mechanism.
    Sample {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of samples.
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a mechanism's density at the given outputs.
    Density {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long = "y", required = true, allow_negative_numbers = true)]
        ys: Vec<f64>,
    },
    /// Evaluate the piecewise Laplace score at the given outputs.
    Score {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long = "rho", default_value_t = 0.0)]
        rho: f64,
        #[arg(long = "y", required = true, allow_negative_numbers = true)]
        ys: Vec<f64>,
    },
    /// Run a built-in suite or check a pair of table files.
    Verify(VerifyArgs),
    /// Mass within `alpha` of the center for each mechanism.
    Compare {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Function {
    Median,
    BoundedSum,
    CustomTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Swap,
    AddSubtract,
}

impl From<Model> for NeighborModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Swap => NeighborModel::Swap,
            Model::AddSubtract => NeighborModel::AddSubtract,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mech {
    Plm,
    Inv,
    Tlap,
}

impl From<Mech> for MechanismKind {
    fn from(m: Mech) -> Self {
        match m {
            Mech::Plm => MechanismKind::Plm,
            Mech::Inv => MechanismKind::Inv,
            Mech::Tlap => MechanismKind::Tlap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairCheck {
    Dp,
    Br,
}

/// Where the envelope table comes from.
#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    #[arg(long, value_enum, default_value_t = Function::Median)]
    pub function: Function,
    /// Newline-delimited reals.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON table, or CSV table (`.csv`, needs `--range`).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub range: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Model::Swap)]
    pub model: Model,
    /// Defaults to the distance at which the envelope covers the range.
    #[arg(long)]
    pub max_distance: Option<usize>,
    /// Per-record bound for `bounded-sum`.
    #[arg(long)]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct MechArgs {
    #[arg(long, value_enum, default_value_t = Mech::Plm)]
    pub mech: Mech,
    /// Total pure-DP budget.
    #[arg(long)]
    pub eps: f64,
    /// Band half-width around the center.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Global sensitivity for `tlap`; defaults to the range width.
    #[arg(long)]
    pub global_sensitivity: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, conflicts_with_all = ["table_x", "table_x2"])]
    pub suite: Option<String>,
    #[arg(long, requires = "table_x2")]
    pub table_x: Option<PathBuf>,
    #[arg(long, requires = "table_x")]
    pub table_x2: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PairCheck::Dp)]
    pub check: PairCheck,
    /// Claimed budget the checks hold the mechanism to.
    #[arg(long)]
    pub eps: f64,
    /// Budget the mechanisms are built with; defaults to `--eps`.
    #[arg(long)]
    pub mech_eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = Mech::Plm)]
    pub mech: Mech,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[arg(long, default_value_t = 4)]
    pub k_trunc: usize,
    /// Negative control: shrink every first envelope step by this factor.
    #[arg(long)]
    pub corrupt: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A failure that maps to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses newline-delimited reals; blank lines and `#` comments are skipped.
pub fn parse_data(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidParameter {
                    name: "data",
                    reason: format!("not a finite real: {l:?}"),
                })
        })
        .collect()
}

fn parse_range(r: &Option<Vec<f64>>) -> CliResult<Option<OutputRange>> {
    match r.as_deref() {
        None => Ok(None),
        Some([lo, hi]) => Ok(Some(OutputRange::new(*lo, *hi)?)),
        Some(_) => Err(usage("--range takes two values")),
    }
}

/// Distance at which the envelope is guaranteed to cover the whole range.
fn default_distance(args: &TableArgs, n: usize, value: f64, range: OutputRange) -> usize {
    match args.function {
        Function::Median => match args.model {
            Model::Swap => n,
            Model::AddSubtract => n + 1,
        },
        _ => {
            let bound = args.bound.unwrap_or(1.0);
            let reach = (range.hi() - value).max(value - range.lo());
            (reach / bound).ceil().max(1.0) as usize
        }
    }
}

/// Builds the envelope table described by `args`.
pub fn load_table(args: &TableArgs) -> CliResult<EnvelopeTable> {
    let range = parse_range(&args.range)?;
    let model = NeighborModel::from(args.model);
    if args.function == Function::CustomTable {
        let path = args
            .table
            .as_ref()
            .or(args.data.as_ref())
            .ok_or_else(|| usage("custom-table needs --table"))?;
        let text = read(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            let range = range.ok_or_else(|| usage("a CSV table needs --range"))?;
            return Ok(EnvelopeTable::from_csv(&text, range, model)?);
        }
        let table: EnvelopeTable = serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid table {}: {e}", path.display())))?;
        if let Some(r) = range {
            if r != table.range() {
                return Err(usage("--range disagrees with the table's range"));
            }
        }
        return Ok(table);
    }
    let path = args.data.as_ref().ok_or_else(|| usage("--data is required"))?;
    let data = parse_data(&read(path)?)?;
    let range = range.ok_or_else(|| usage("--range is required"))?;
    match args.function {
        Function::Median => {
            let c = median(&data).ok_or(Error::EmptyData)?;
            let l = args
                .max_distance
                .unwrap_or_else(|| default_distance(args, data.len(), c, range));
            Ok(build_median_envelope(&data, range, model, l)?)
        }
        Function::BoundedSum => {
            let bound = args.bound.ok_or_else(|| usage("bounded-sum needs --bound"))?;
            if let Some(v) = data.iter().find(|v| v.abs() > bound) {
                return Err(usage(format!("record {v} exceeds --bound {bound}")));
            }
            let value: f64 = data.iter().sum();
            let l = args
                .max_distance
                .unwrap_or_else(|| default_distance(args, data.len(), value, range));
            Ok(build_bounded_sum_envelope(value, bound, range, model, l)?)
        }
        Function::CustomTable => unreachable!("handled above"),
    }
}

fn build_mechanism(table: &EnvelopeTable, m: &MechArgs) -> CliResult<Box<dyn Mechanism>> {
    let mut spec = MechanismSpec::new(m.mech.into(), m.eps);
    spec.rho_smooth = m.rho;
    spec.global_sensitivity = Some(m.global_sensitivity.unwrap_or(table.range().width()));
    Ok(spec.build(table)?)
}

/// `--seed`, unless `PLM_SEED` holds a valid seed.
fn effective_seed(flag: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn cmd_envelope(table: &TableArgs, format: Format, output: Option<&Path>) -> CliResult<()> {
    let t = load_table(table)?;
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&t).map_err(|e| usage(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => t.to_csv(),
    };
    write_out(output, &text)
}

/// Samples as CSV: a comment header, then one value per line.
pub fn render_samples(kind: MechanismKind, eps: f64, seed: u64, ys: &[f64]) -> String {
    let mut s = format!("# mechanism={kind} epsilon={eps} seed={seed} n={}\n", ys.len());
    for y in ys {
        writeln!(s, "{y}").expect("write to string");
    }
    s
}

fn cmd_sample(
    table: &TableArgs,
    mech: &MechArgs,
    seed: u64,
    n: usize,
    output: Option<&Path>,
) -> CliResult<()> {
    if n < 1 {
        return Err(usage("--n must be at least 1"));
    }
    let seed = effective_seed(seed)?;
    let t = load_table(table)?;
    let m = build_mechanism(&t, mech)?;
    let mut stream = crate::mechanisms::RandomStream::new(seed);
    let ys: Vec<f64> = (0..n).map(|_| m.sample(&mut stream)).collect();
    write_out(output, &render_samples(mech.mech.into(), mech.eps, seed, &ys))
}

fn cmd_density(table: &TableArgs, mech: &MechArgs, ys: &[f64]) -> CliResult<()> {
    let t = load_table(table)?;
    let m = build_mechanism(&t, mech)?;
    let mut s = String::from("y,density\n");
    for &y in ys {
        writeln!(s, "{y},{}", m.density(y)).expect("write to string");
    }
    write_out(None, &s)
}

fn cmd_score(table: &TableArgs, rho: f64, ys: &[f64]) -> CliResult<()> {
    let mut t = load_table(table)?;
    if rho > 0.0 {
        t = crate::envelope::smooth_shift(&t, rho)?;
    }
    let mut s = String::from("y,score\n");
    for &y in ys {
        writeln!(s, "{y},{}", q_plm(y, &t).value()).expect("write to string");
    }
    write_out(None, &s)
}

fn cmd_compare(table: &TableArgs, eps: f64, rho: f64, alphas: &[f64]) -> CliResult<()> {
    let mut t = load_table(table)?;
    if rho > 0.0 {
        t = crate::envelope::smooth_shift(&t, rho)?;
    }
    let plm = Piecewise::laplace(&t, eps)?;
    let inv = Piecewise::inverse_sensitivity(&t, eps)?;
    let alphas: Vec<f64> = if alphas.is_empty() {
        let (lo, hi) = t.support();
        let reach = (hi - t.center()).max(t.center() - lo);
        (0..=10).map(|k| reach * k as f64 / 10.0).collect()
    } else {
        alphas.to_vec()
    };
    let mut s = String::from("alpha,plm,inv,margin\n");
    for a in alphas {
        let (p, q) = (plm.mass_within(a), inv.mass_within(a));
        writeln!(s, "{a},{p},{q},{}", p - q).expect("write to string");
    }
    write_out(None, &s)
}

fn load_json_table(path: &Path) -> CliResult<EnvelopeTable> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| usage(format!("invalid table {}: {e}", path.display())))
}

/// One-row text rendering of a report.
pub fn render_report(r: &VerificationReport) -> String {
    let mut cols = vec![
        format!("check={}", r.check),
        format!("pass={}", r.pass),
        format!("cases={}", r.cases),
    ];
    let stats = [
        ("max_log_ratio", r.max_log_ratio),
        ("br_sum", r.br_sum),
        ("dominance_min_margin", r.dominance_min_margin),
        ("dominance_interior_margin", r.dominance_interior_margin),
        ("score_sensitivity", r.score_sensitivity),
        ("gof_statistic", r.gof_statistic),
        ("gof_p_value", r.gof_p_value),
    ];
    for (name, v) in stats {
        if let Some(v) = v {
            cols.push(format!("{name}={v:.9}"));
        }
    }
    cols.push(format!("grid_size={}", r.grid_size));
    cols.join("  ")
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let mech_eps = a.mech_eps.unwrap_or(a.eps);
    let report = match (&a.suite, &a.table_x, &a.table_x2) {
        (Some(name), _, _) => {
            let suite: Suite = name.parse()?;
            let cfg = SuiteConfig {
                mechanism: a.mech.into(),
                epsilon: mech_eps,
                claimed_epsilon: a.eps,
                grid_n: a.grid,
                seed: effective_seed(a.seed)?,
                n_samples: a.samples,
                n_bins: a.bins,
                k_trunc: a.k_trunc,
                corrupt_first_step: a.corrupt,
            };
            run_suite(suite, &cfg)?
        }
        (None, Some(px), Some(py)) => {
            let (tx, ty) = (load_json_table(px)?, load_json_table(py)?);
            let mut r = match a.check {
                PairCheck::Dp => verify_dp(&tx, &ty, mech_eps, a.grid)?,
                PairCheck::Br => verify_bounded_range(&tx, &ty, mech_eps, a.grid)?,
            };
            // hold the pair to the claimed budget
            let stat = match a.check {
                PairCheck::Dp => r.max_log_ratio,
                PairCheck::Br => r.br_sum,
            }
            .unwrap_or(f64::INFINITY);
            r.pass = stat <= a.eps + r.tolerance;
            if !r.pass && r.failure.is_none() {
                r.failure = Some(format!("statistic {stat:.9} exceeds epsilon {}", a.eps));
            }
            if r.pass {
                r.failure = None;
            }
            r
        }
        _ => return Err(usage("verify needs --suite or both --table-x and --table-x2")),
    };
    println!("{}", render_report(&report));
    if let Some(path) = &a.output {
        let mut json = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
        json.push('\n');
        write_out(Some(path), &json)?;
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{} failed: {}",
            report.check,
            report.failure.as_deref().unwrap_or("check out of tolerance")
        )))
    }
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Envelope {
            table,
            format,
            output,
        } => cmd_envelope(table, *format, output.as_deref()),
        Command::Sample {
            table,
            mech,
            seed,
            n,
            output,
        } => cmd_sample(table, mech, *seed, *n, output.as_deref()),
        Command::Density { table, mech, ys } => cmd_density(table, mech, ys),
        Command::Score { table, rho, ys } => cmd_score(table, *rho, ys),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare {
            table,
            eps,
            rho,
            alphas,
        } => cmd_compare(table, *eps, *rho, alphas),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Check(msg)) => {
            eprintln!("FAIL: {msg}");
            EXIT_CHECK_FAILED
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_parsing() {
        assert_eq!(parse_data("1\n 2.5 \n\n# note\n-3\n").unwrap(), vec![1.0, 2.5, -3.0]);
        assert!(parse_data("1\nabc\n").is_err());
        assert!(parse_data("inf\n").is_err());
        assert!(parse_data("").unwrap().is_empty());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "plm", "sample", "--function", "median", "--data", "d.csv", "--range", "0", "10",
            "--mech", "plm", "--eps", "2", "--seed", "7", "--n", "1000",
        ])
        .unwrap();
        match cli.command {
            Command::Sample { table, mech, seed, n, .. } => {
                assert_eq!(table.range, Some(vec![0.0, 10.0]));
                assert_eq!(mech.mech, Mech::Plm);
                assert_eq!((seed, n), (7, 1000));
            }
            other => panic!("parsed {other:?}"),
        }
        let cli = Cli::try_parse_from(["plm", "verify", "--suite", "dp-median", "--eps", "2"]).unwrap();
        assert!(matches!(cli.command, Command::Verify(VerifyArgs { mech_eps: None, .. })));
        assert!(Cli::try_parse_from(["plm", "verify", "--table-x", "a.json", "--eps", "2"]).is_err());
        assert!(Cli::try_parse_from(["plm", "sample", "--eps", "2", "--mech", "nope"]).is_err());
    }

    #[test]
    fn sample_header() {
        let s = render_samples(MechanismKind::Inv, 2.0, 7, &[3.5, 4.0]);
        assert_eq!(s, "# mechanism=inv epsilon=2 seed=7 n=2\n3.5\n4\n");
    }

    #[test]
    fn default_distances() {
        let range = OutputRange::new(0., 10.).unwrap();
        let mut a = TableArgs {
            function: Function::Median,
            data: None,
            table: None,
            range: None,
            model: Model::Swap,
            max_distance: None,
            bound: None,
        };
        assert_eq!(default_distance(&a, 5, 3.0, range), 5);
        a.model = Model::AddSubtract;
        assert_eq!(default_distance(&a, 5, 3.0, range), 6);
        a.function = Function::BoundedSum;
        a.bound = Some(2.0);
        assert_eq!(default_distance(&a, 5, 3.0, range), 4);
    }
}
