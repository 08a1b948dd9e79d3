//! `jrsp` command-line front end and its report documents.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 resource
//! cap exceeded.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::protocol::{run_once, DiagonalOutcome, Outcomes, PhaseVector, ProtocolConfig};
use crate::verify::{
    exhaustive_verify, OutcomeRecord, VerificationReport, VerifyOptions, DEFAULT_BRANCH_CAP,
};

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Reals written as decimal strings with 17 significant digits, enough to
/// round-trip every finite `f64`.
mod decimal {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn format(x: f64) -> String {
        format!("{x:.16e}")
    }

    fn parse<E: serde::de::Error>(s: &str) -> Result<f64, E> {
        s.parse()
            .map_err(|_| E::custom(format!("invalid decimal {s:?}")))
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        parse(&String::deserialize(d)?)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&format(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|s| parse(s))
                .collect()
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => s.serialize_some(&format(*v)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| {
                    s.parse()
                        .map_err(|_| D::Error::custom(format!("invalid decimal {s:?}")))
                })
                .transpose()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub outcomes: Outcomes,
    #[serde(with = "decimal")]
    pub branch_probability: f64,
    #[serde(with = "decimal")]
    pub fidelity: f64,
    #[serde(with = "decimal::vec")]
    pub correction_angles: Vec<f64>,
}

impl From<&OutcomeRecord<f64>> for BranchRecord {
    fn from(r: &OutcomeRecord<f64>) -> Self {
        Self {
            outcomes: r.outcomes.clone(),
            branch_probability: r.branch_probability,
            fidelity: r.fidelity,
            correction_angles: r.correction_angles.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub branch_count: usize,
    #[serde(with = "decimal")]
    pub min_fidelity: f64,
    #[serde(with = "decimal")]
    pub success_probability: f64,
    #[serde(with = "decimal")]
    pub total_probability: f64,
    #[serde(with = "decimal")]
    pub tolerance: f64,
    /// Only filled with `--timing`, so default output stays byte-stable.
    #[serde(with = "decimal::option")]
    pub elapsed_seconds: Option<f64>,
    #[serde(
        with = "decimal::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub cross_check_max_diff: Option<f64>,
    pub passed: bool,
}

/// Output of `jrsp verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub config: ProtocolConfig,
    #[serde(with = "decimal::vec")]
    pub delta: Vec<f64>,
    pub branches: Vec<BranchRecord>,
    pub summary: Summary,
}

impl ReportDocument {
    pub fn from_report(report: &VerificationReport<f64>, elapsed_seconds: Option<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config: report.config,
            delta: report.delta.delta().to_vec(),
            branches: report.branches.iter().map(BranchRecord::from).collect(),
            summary: Summary {
                branch_count: report.branches.len(),
                min_fidelity: report.min_fidelity,
                success_probability: report.success_probability,
                total_probability: report.total_probability,
                tolerance: report.tolerance,
                elapsed_seconds,
                cross_check_max_diff: report.cross_check_max_diff,
                passed: report.passed(),
            },
        }
    }
}

/// Output of `jrsp run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub schema_version: String,
    pub config: ProtocolConfig,
    #[serde(with = "decimal::vec")]
    pub delta: Vec<f64>,
    pub record: BranchRecord,
    #[serde(with = "decimal")]
    pub tolerance: f64,
    pub passed: bool,
}

/// One cell of `jrsp sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub senders: usize,
    pub controlled: bool,
    pub trial: usize,
    pub seed: u64,
    pub branches: usize,
    #[serde(with = "decimal")]
    pub min_fidelity: f64,
    #[serde(with = "decimal")]
    pub success_probability: f64,
    #[serde(with = "decimal")]
    pub total_probability: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub schema_version: String,
    pub rows: Vec<SweepRow>,
}

/// Inclusive integer range written as `a` or `a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange {
    pub start: usize,
    pub end: usize,
}

impl IntRange {
    pub fn single(&self) -> Option<usize> {
        (self.start == self.end).then_some(self.start)
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl FromStr for IntRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid integer {t:?}"))
        };
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = num(s)?;
                (v, v)
            }
        };
        if start > end {
            return Err(format!("empty range {s}"));
        }
        Ok(Self { start, end })
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "jrsp",
    version,
    about = "Simulate and verify joint remote state preparation of equatorial states"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate every measurement branch and check the receiver's state.
    Verify(CommonArgs),
    /// Execute the protocol once, sampling (or forcing) the outcomes.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Sender outcomes k, then controller results (0/+ or 1/-) if controlled.
        #[arg(long, value_delimiter = ',')]
        force_outcomes: Option<Vec<String>>,
    },
    /// Verify every cell of an (N, senders) grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Random target phases per cell (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Qubits in the target state (`k` or `a..b` for sweep).
    #[arg(long = "n")]
    pub n: IntRange,
    /// Number of senders (`m` or `a..b` for sweep).
    #[arg(long)]
    pub senders: IntRange,
    /// Add a controller holding one qubit of every GHZ state.
    #[arg(long)]
    pub controlled: bool,
    /// Target phases in radians, comma separated (2^N values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub delta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fidelity tolerance for success.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, env = "JRSP_BRANCH_CAP", default_value_t = DEFAULT_BRANCH_CAP)]
    pub branch_cap: u64,
    /// Recompute each branch with the direct slicing oracle.
    #[arg(long)]
    pub cross_check: bool,
    /// Record wall-clock time in the report (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

/// Error of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Resource(_) => EXIT_RESOURCE,
            Error::Unreachable { .. } => EXIT_FAILED,
            Error::Domain(_) | Error::Usage(_) => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILED,
            message: format!("i/o error: {e}"),
        }
    }
}

/// Rendered output of a subcommand plus its exit code.
#[derive(Debug)]
pub struct CommandOutput {
    pub code: i32,
    pub body: String,
}

impl CommonArgs {
    fn single(&self) -> Result<(usize, usize), CliError> {
        let n = self
            .n
            .single()
            .ok_or_else(|| CliError::usage("--n must be a single value"))?;
        let m = self
            .senders
            .single()
            .ok_or_else(|| CliError::usage("--senders must be a single value"))?;
        Ok((n, m))
    }

    fn check_tol(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::usage(format!(
                "--tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        Ok(())
    }

    fn json_only(&self) -> Result<(), CliError> {
        if self.format == Some(Format::Csv) {
            return Err(CliError::usage("csv output is only available for sweep"));
        }
        Ok(())
    }

    fn config(&self, n: usize, m: usize, seed: u64) -> ProtocolConfig {
        ProtocolConfig::new(n, m)
            .with_controller(self.controlled)
            .with_seed(seed)
    }

    fn phases(&self, n: usize, seed: u64) -> Result<PhaseVector<f64>, CliError> {
        match &self.delta {
            Some(d) => Ok(PhaseVector::new(n, d.clone())?),
            None => Ok(PhaseVector::from_seed(n, seed)?),
        }
    }

    fn options(&self) -> VerifyOptions {
        VerifyOptions {
            tolerance: self.tol,
            branch_cap: self.branch_cap,
            cross_check: self.cross_check,
        }
    }
}

fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("report documents serialize");
    s.push('\n');
    s
}

pub fn cmd_verify(args: &CommonArgs) -> Result<CommandOutput, CliError> {
    args.json_only()?;
    args.check_tol()?;
    let (n, m) = args.single()?;
    let config = args.config(n, m, args.seed);
    config.validate()?;
    let spec = args.phases(n, args.seed)?;
    let started = Instant::now();
    let report = exhaustive_verify(&config, &spec, &args.options())?;
    let elapsed = args.timing.then(|| started.elapsed().as_secs_f64());
    let doc = ReportDocument::from_report(&report, elapsed);
    Ok(CommandOutput {
        code: if doc.summary.passed {
            EXIT_OK
        } else {
            EXIT_FAILED
        },
        body: to_json(&doc),
    })
}

fn parse_forced(config: &ProtocolConfig, raw: &[String]) -> Result<Outcomes, CliError> {
    let expect_ctrl = if config.controlled {
        config.num_qubits
    } else {
        0
    };
    if raw.len() != config.senders + expect_ctrl {
        return Err(CliError::usage(format!(
            "--force-outcomes needs {} sender value(s) and {expect_ctrl} controller value(s)",
            config.senders
        )));
    }
    let senders = raw[..config.senders]
        .iter()
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("invalid outcome {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let controller = raw[config.senders..]
        .iter()
        .map(|s| match s.trim() {
            "0" | "+" => Ok(DiagonalOutcome::Plus),
            "1" | "-" => Ok(DiagonalOutcome::Minus),
            other => Err(CliError::usage(format!(
                "invalid controller outcome {other:?}"
            ))),
        })
        .collect::<Result<_, _>>()?;
    Ok(Outcomes::controlled(senders, controller))
}

pub fn cmd_run(
    args: &CommonArgs,
    force_outcomes: Option<&[String]>,
) -> Result<CommandOutput, CliError> {
    args.json_only()?;
    args.check_tol()?;
    let (n, m) = args.single()?;
    let config = args.config(n, m, args.seed);
    config.validate()?;
    let spec = args.phases(n, args.seed)?;
    let forced = force_outcomes
        .map(|f| parse_forced(&config, f))
        .transpose()?;
    let record = run_once(&config, &spec, forced.as_ref(), args.seed)?;
    let passed = record.fidelity >= 1.0 - args.tol;
    let doc = RunDocument {
        schema_version: SCHEMA_VERSION.into(),
        config,
        delta: spec.delta().to_vec(),
        record: BranchRecord::from(&record),
        tolerance: args.tol,
        passed,
    };
    Ok(CommandOutput {
        code: if passed { EXIT_OK } else { EXIT_FAILED },
        body: to_json(&doc),
    })
}

pub fn cmd_sweep(args: &CommonArgs, trials: usize) -> Result<CommandOutput, CliError> {
    args.check_tol()?;
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if args.delta.is_some() && args.n.single().is_none() {
        return Err(CliError::usage("--delta requires a single --n value"));
    }
    let mut cells = Vec::new();
    for n in args.n.iter() {
        for m in args.senders.iter() {
            for t in 0..trials {
                let seed = args.seed.wrapping_add(t as u64);
                let config = args.config(n, m, seed);
                config.validate()?;
                cells.push((config, t));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|(config, trial)| {
            let spec = args.phases(config.num_qubits, config.seed)?;
            let r = exhaustive_verify(config, &spec, &args.options())?;
            Ok(SweepRow {
                n: config.num_qubits,
                senders: config.senders,
                controlled: config.controlled,
                trial: *trial,
                seed: config.seed,
                branches: r.branches.len(),
                min_fidelity: r.min_fidelity,
                success_probability: r.success_probability,
                total_probability: r.total_probability,
                passed: r.passed(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let all_passed = rows.iter().all(|r| r.passed);
    let body = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                w.serialize(row).map_err(|e| CliError {
                    code: EXIT_FAILED,
                    message: e.to_string(),
                })?;
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
        Format::Json => to_json(&SweepDocument {
            schema_version: SCHEMA_VERSION.into(),
            rows,
        }),
    };
    Ok(CommandOutput {
        code: if all_passed { EXIT_OK } else { EXIT_FAILED },
        body,
    })
}

fn out_path(cli: &Cli) -> Option<&PathBuf> {
    match &cli.command {
        Command::Verify(c) | Command::Run { common: c, .. } | Command::Sweep { common: c, .. } => {
            c.out.as_ref()
        }
    }
}

/// Dispatch a parsed command line.
pub fn execute(cli: &Cli) -> Result<CommandOutput, CliError> {
    match &cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Run {
            common,
            force_outcomes,
        } => cmd_run(common, force_outcomes.as_deref()),
        Command::Sweep { common, trials } => cmd_sweep(common, *trials),
    }
}

/// Parse `argv`, run, write the report, and return the process exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = execute(&cli).and_then(|out| {
        match out_path(&cli) {
            Some(path) => std::fs::write(path, &out.body)?,
            None => stdout.write_all(out.body.as_bytes())?,
        }
        Ok(out.code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "jrsp: {}", e.message);
            e.code
        }
    }
}
