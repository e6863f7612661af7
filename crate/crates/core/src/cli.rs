//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::estimators::{estimate_all, EstimateOptions};
use crate::ingest::{self, check_osn, IngestError, OsnVerdict};
use crate::model::{AssignmentDesign, Cell, ModelError};
use crate::moments::{HBlock, SigmaNorm};
use crate::oracle::{
    mc_study, random_identity_spec, simulate_with_workers, truth, verify_identities, with_workers,
    CheckStatus, DgpSpec, IdentityReport, McOptions, SpecError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IDENTITY: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Identity(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Identity(_) => EXIT_IDENTITY,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(format!("invalid data: {e}")),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "spillover-iv", version, about = "IV estimation of direct and spillover effects in two-unit households")]
pub struct Cli {
    /// Declarative TOML config; its values win over flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SPILLOVER_IV_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate every identified quantity from a household table.
    Estimate(EstimateArgs),
    /// Simulate a dataset and its truth manifest from a spec.
    Simulate(SimulateArgs),
    /// Check the population identities on a spec or on random specs.
    Verify(VerifyArgs),
    /// Monte Carlo calibration of estimates and intervals.
    McStudy(McArgs),
    /// Summarize a dataset: cell counts, strata, OSN diagnostic.
    Describe(DescribeArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Household CSV: household, unit, z, d, y and optional x.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the JSON report here; the table then goes to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Confidence level (default 0.95).
    #[arg(long)]
    pub ci_level: Option<f64>,
    /// Clamp type-share estimates to [0, 1].
    #[arg(long)]
    pub clamp_shares: bool,
    /// Known assignment probabilities `p00,p10,p01,p11` used as propensities.
    #[arg(long)]
    pub design_probs: Option<String>,
    /// Comma-separated estimand names or groups.
    #[arg(long)]
    pub estimands: Option<String>,
    /// Divide the moment covariance by G-1 instead of G.
    #[arg(long)]
    pub small_sample: bool,
    /// Moment block: full-8, itt-only or osn-4.
    #[arg(long)]
    pub h_block: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec group count.
    #[arg(long)]
    pub groups: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub spec: Option<PathBuf>,
    /// Check this many random specs instead.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub estimands: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long)]
    pub input: PathBuf,
}

/// Keys accepted in `--config` files.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub ci_level: Option<f64>,
    pub clamp_shares: Option<bool>,
    pub design_probs: Option<[f64; 4]>,
    pub estimands: Option<Vec<String>>,
    pub small_sample: Option<bool>,
    pub h_block: Option<String>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub groups: Option<usize>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self, CliError> {
        let s = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&s).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Resolve one setting: the file wins, with a warning when the flag
/// disagrees.
fn merge<T: PartialEq + std::fmt::Debug>(
    key: &str,
    flag: Option<T>,
    file: Option<T>,
    warnings: &mut Vec<String>,
) -> Option<T> {
    match (flag, file) {
        (Some(f), Some(c)) => {
            if f != c {
                warnings.push(format!("config file overrides --{key} ({f:?} -> {c:?})"));
            }
            Some(c)
        }
        (f, c) => c.or(f),
    }
}

fn merge_flag(key: &str, flag: bool, file: Option<bool>, warnings: &mut Vec<String>) -> bool {
    merge(key, flag.then_some(true), file, warnings).unwrap_or(false)
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn parse_probs(s: &str) -> Result<[f64; 4], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(format!("--design-probs: {e}")))?;
    v.try_into()
        .map_err(|_| CliError::Validation("--design-probs needs four values p00,p10,p01,p11".into()))
}

fn check_ci(level: f64) -> Result<f64, CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(level)
    } else {
        Err(CliError::Validation(format!("ci level {level} outside (0, 1)")))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Streams a command writes to; swapped for buffers in tests.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($t:tt)*) => {
        writeln!($w, $($t)*).map_err(|e| CliError::Io(e.to_string()))
    };
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = write!(io.err, "{}", e.render());
            return code;
        }
    };
    match run(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, io: &mut Io<'_>) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut warnings = Vec::new();
    let workers = merge("workers", cli.workers, file.workers, &mut warnings).unwrap_or(0);
    let code = match cli.command {
        Command::Estimate(a) => estimate(a, &file, workers, &mut warnings, io),
        Command::Simulate(a) => simulate(a, &file, workers, &mut warnings, io),
        Command::Verify(a) => verify(a, &file, workers, &mut warnings, io),
        Command::McStudy(a) => mc(a, &file, workers, &mut warnings, io),
        Command::Describe(a) => describe(a, io),
    };
    for w in &warnings {
        say!(io.err, "warning: {w}")?;
    }
    code
}

fn estimate(a: EstimateArgs, file: &FileConfig, workers: usize, warnings: &mut Vec<String>, io: &mut Io<'_>) -> Result<i32, CliError> {
    let ci_level = check_ci(merge("ci-level", a.ci_level, file.ci_level, warnings).unwrap_or(0.95))?;
    let clamp_shares = merge_flag("clamp-shares", a.clamp_shares, file.clamp_shares, warnings);
    let small = merge_flag("small-sample", a.small_sample, file.small_sample, warnings);
    let probs = match &a.design_probs {
        Some(s) => Some(parse_probs(s)?),
        None => None,
    };
    let design = match merge("design-probs", probs, file.design_probs, warnings) {
        Some(p) => Some(AssignmentDesign::simple(p)?),
        None => None,
    };
    let select = merge("estimands", a.estimands.as_deref().map(split_list), file.estimands.clone(), warnings);
    let h_name = merge("h-block", a.h_block, file.h_block.clone(), warnings);
    let h = match h_name {
        Some(n) => HBlock::parse(&n).ok_or_else(|| CliError::Validation(format!("unknown moment block `{n}`")))?,
        None => HBlock::Full8,
    };

    let ds = ingest::load(&a.input)?;
    let opts = EstimateOptions {
        ci_level,
        h,
        norm: if small {
            SigmaNorm::SmallSample
        } else {
            SigmaNorm::Population
        },
        clamp_shares,
        design,
        select,
    };
    let report = with_workers(workers, || estimate_all(&ds, &opts));
    let json = report.to_json_string();
    let table = report.render_table();
    match &a.output {
        Some(p) => {
            write_file(p, &(json + "\n"))?;
            write!(io.out, "{table}").map_err(|e| CliError::Io(e.to_string()))?;
        }
        None => {
            say!(io.out, "{json}")?;
            write!(io.err, "{table}").map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(EXIT_OK)
}

fn load_spec(path: &Path, seed: Option<u64>, groups: Option<usize>) -> Result<DgpSpec, CliError> {
    let mut spec = DgpSpec::from_file(path)?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    if let Some(g) = groups {
        if g == 0 {
            return Err(CliError::Validation("groups must be at least 1".into()));
        }
        spec = spec.with_groups(g);
    }
    Ok(spec)
}

/// Path of the truth manifest written next to a simulated dataset.
pub fn truth_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn simulate(a: SimulateArgs, file: &FileConfig, workers: usize, warnings: &mut Vec<String>, io: &mut Io<'_>) -> Result<i32, CliError> {
    let seed = merge("seed", a.seed, file.seed, warnings);
    let groups = merge("groups", a.groups, file.groups, warnings);
    let spec = load_spec(&a.spec, seed, groups)?;
    warnings.extend(spec.warnings());
    let ds = simulate_with_workers(&spec, workers);
    ingest::write(&ds, &a.output)?;
    let mut manifest = truth(&spec).to_json();
    manifest["seed"] = spec.seed.into();
    manifest["groups"] = spec.groups.into();
    let tp = truth_path(&a.output);
    write_file(&tp, &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"))?;
    say!(
        io.out,
        "wrote {} households to {} and truth to {}",
        ds.n_groups(),
        a.output.display(),
        tp.display()
    )?;
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs, file: &FileConfig, workers: usize, warnings: &mut Vec<String>, io: &mut Io<'_>) -> Result<i32, CliError> {
    let seed = merge("seed", a.seed, file.seed, warnings);
    let reports: Vec<(String, IdentityReport)> = match (&a.spec, a.random) {
        (Some(p), _) => {
            let spec = load_spec(p, None, None)?;
            vec![(p.display().to_string(), verify_identities(&spec))]
        }
        (None, Some(n)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let specs: Vec<DgpSpec> = (0..n).map(|_| random_identity_spec(&mut rng)).collect();
            with_workers(workers, || {
                use rayon::prelude::*;
                specs
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| (format!("random spec {i}"), verify_identities(s)))
                    .collect()
            })
        }
        (None, None) => return Err(CliError::Validation("verify needs --spec or --random".into())),
    };

    let mut failed = 0;
    let (mut pass, mut na, mut max_res) = (0, 0, 0.0f64);
    for (label, r) in &reports {
        pass += r.count(CheckStatus::Pass);
        na += r.count(CheckStatus::NotApplicable);
        max_res = max_res.max(r.max_residual());
        for c in r.failures() {
            failed += 1;
            say!(io.out, "FAIL {label}: {} residual={:.3e} {}", c.name, c.residual, c.detail)?;
        }
        if reports.len() == 1 {
            for c in &r.checks {
                let tag = match c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => continue,
                    CheckStatus::NotApplicable => "n/a ",
                };
                say!(io.out, "{tag} {} residual={:.3e}", c.name, c.residual)?;
            }
        }
    }
    say!(
        io.out,
        "{} spec(s): {pass} passed, {failed} failed, {na} not applicable, max residual {max_res:.3e}",
        reports.len()
    )?;
    if let Some(p) = &a.output {
        let json = serde_json::json!({
            "specs": reports.iter().map(|(l, r)| {
                let mut v = r.to_json();
                v["label"] = l.clone().into();
                v
            }).collect::<Vec<_>>(),
        });
        write_file(p, &(serde_json::to_string_pretty(&json).expect("json") + "\n"))?;
    }
    if failed > 0 {
        return Err(CliError::Identity(format!("{failed} identity check(s) failed")));
    }
    Ok(EXIT_OK)
}

/// Estimands calibrated when `--estimands` is not given.
pub const DEFAULT_MC_ESTIMANDS: [&str; 6] = [
    "mean_y_00",
    "mean_y_10",
    "mean_y_01",
    "mean_y_11",
    "late_direct",
    "late_indirect",
];

fn mc(a: McArgs, file: &FileConfig, workers: usize, warnings: &mut Vec<String>, io: &mut Io<'_>) -> Result<i32, CliError> {
    let seed = merge("seed", a.seed, file.seed, warnings);
    let groups = merge("groups", a.groups, file.groups, warnings);
    let reps = merge("reps", a.reps, file.reps, warnings).unwrap_or(2000);
    if reps < 2 {
        return Err(CliError::Validation("mc-study needs at least 2 replications".into()));
    }
    let ci_level = check_ci(merge("ci-level", a.ci_level, file.ci_level, warnings).unwrap_or(0.95))?;
    let estimands = merge("estimands", a.estimands.as_deref().map(split_list), file.estimands.clone(), warnings)
        .unwrap_or_else(|| DEFAULT_MC_ESTIMANDS.iter().map(|s| s.to_string()).collect());
    let spec = load_spec(&a.spec, seed, groups)?;
    warnings.extend(spec.warnings());
    let report = mc_study(
        &spec,
        &estimands,
        &McOptions {
            replications: reps,
            workers,
            ci_level,
        },
    );
    let json = serde_json::to_string_pretty(&report.to_json()).expect("json");
    match &a.output {
        Some(p) => write_file(p, &(json + "\n"))?,
        None => say!(io.out, "{json}")?,
    }
    for c in &report.estimands {
        say!(
            io.err,
            "{:<16} n={:<5} bias={:+.5} mc_sd={:.5} mean_se={:.5} coverage={:.3}",
            c.name,
            c.n_reps,
            c.bias,
            c.mc_sd,
            c.mean_se,
            c.coverage
        )?;
    }
    Ok(EXIT_OK)
}

fn describe(a: DescribeArgs, io: &mut Io<'_>) -> Result<i32, CliError> {
    let ds = ingest::load(&a.input)?;
    say!(io.out, "households: {}", ds.n_groups())?;
    let unit = ds.cell_counts();
    let group = ds.group_cell_counts();
    say!(io.out, "cell      units  households")?;
    for c in Cell::ALL {
        say!(io.out, "{:<8} {:>6} {:>11}", c.to_string(), unit[c.index()], group[c.index()])?;
    }
    let sizes = ds.stratum_sizes();
    if sizes.is_empty() {
        say!(io.out, "strata: none")?;
    } else {
        for (s, n) in &sizes {
            say!(io.out, "stratum {s}: {n} households")?;
        }
    }
    match check_osn(&ds) {
        Ok(c) => {
            say!(io.out, "P[AT] = {:.6} (se {:.6})", c.p_at, c.p_at_se)?;
            say!(io.out, "P[SC] = {:.6} (se {:.6})", c.p_sc, c.p_sc_se)?;
            say!(
                io.out,
                "one-sided noncompliance: {} ({} units with d=1, z=0)",
                match c.verdict {
                    OsnVerdict::Consistent => "consistent",
                    OsnVerdict::Violated => "violated",
                },
                c.hard_count
            )?;
        }
        Err(e) => say!(io.out, "one-sided noncompliance: not testable ({e})")?,
    }
    Ok(EXIT_OK)
}
