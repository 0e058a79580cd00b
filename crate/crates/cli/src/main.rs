use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use click_ope::analysis::{
    bias_diagnostics, check_unclipped_class, exact_expected_estimate, BiasLevel, ClassLevel,
};
use click_ope::click_models::{read_world_config, simulate_drifting_log, simulate_log, SyntheticWorld};
use click_ope::harness::{evaluate, inverse_rank, m_sweep, parse_native, parse_yandex, to_native_string, DaySlicedLog, Reference};
use click_ope::optimize::{best_ip_marginals, best_list_policy, certify, decode_marginals};
use click_ope::policies::{estimate_policy, ListDistribution, Policy};
use click_ope::{Clip, Error, EstimatorConfig, EstimatorFamily, LoggedDataset, QueryId, RewardWeights};

/// Largest list space enumerated for a default uniform logging policy.
const MAX_LISTS: usize = 100_000;
const DECODE_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "click-ope", version, about = "Offline evaluation of ranking policies from logged clicks")]
struct Cli {
    /// Worker threads (defaults to one per core). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a log from a click-model world config and write it in native format.
    Simulate(SimulateArgs),
    /// Leave-one-day-out evaluation of one estimator.
    Evaluate(EvaluateArgs),
    /// Leave-one-day-out RMSE over a grid of clipping constants.
    Sweep(SweepArgs),
    /// Optimize a policy on a log and print a bound certificate.
    Optimize(OptimizeArgs),
    /// Exact bias diagnostics of an estimator in a synthetic world.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Native,
    Yandex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    List,
    Item,
    Ip,
    Pbm,
    Rctr,
}

impl Family {
    fn to_core(self) -> EstimatorFamily {
        match self {
            Family::List => EstimatorFamily::List,
            Family::Item => EstimatorFamily::Item,
            Family::Ip => EstimatorFamily::Ip,
            Family::Pbm => EstimatorFamily::Pbm,
            Family::Rctr => EstimatorFamily::Rctr,
        }
    }
}

/// `ones`, `dcg` or `file:<path>` with one weight per position.
#[derive(Clone)]
enum ThetaSpec {
    Ones,
    Dcg,
    File(PathBuf),
}

/// `inverse-rank` or `file:<path>` with one probability per position.
#[derive(Clone)]
enum ExaminationSpec {
    InverseRank,
    File(PathBuf),
}

fn parse_theta(s: &str) -> Result<ThetaSpec, String> {
    match s {
        "ones" => Ok(ThetaSpec::Ones),
        "dcg" => Ok(ThetaSpec::Dcg),
        _ => s
            .strip_prefix("file:")
            .map(|p| ThetaSpec::File(p.into()))
            .ok_or_else(|| format!("expected ones, dcg or file:<path>, got `{s}`")),
    }
}

fn parse_examination(s: &str) -> Result<ExaminationSpec, String> {
    match s {
        "inverse-rank" => Ok(ExaminationSpec::InverseRank),
        _ => s
            .strip_prefix("file:")
            .map(|p| ExaminationSpec::File(p.into()))
            .ok_or_else(|| format!("expected inverse-rank or file:<path>, got `{s}`")),
    }
}

fn parse_clip(s: &str) -> Result<Clip, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Clip::INFINITE);
    }
    let m: f64 = s.parse().map_err(|_| format!("expected a number or `inf`, got `{s}`"))?;
    Clip::new(m).map_err(|e| e.to_string())
}

#[derive(Args)]
struct LogArgs {
    /// Logged data file.
    log: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    format: Format,
    /// Positions to keep (required for yandex logs, optional truncation otherwise).
    #[arg(long)]
    positions: Option<usize>,
}

#[derive(Args)]
struct RewardArgs {
    #[arg(long, value_parser = parse_theta, default_value = "ones")]
    theta: ThetaSpec,
    /// Examination curve for the PBM estimator.
    #[arg(long, value_parser = parse_examination, default_value = "inverse-rank")]
    examination: ExaminationSpec,
}

#[derive(Args)]
struct HarnessArgs {
    /// Number of days D; defaults to the largest day in the log.
    #[arg(long)]
    days: Option<u32>,
    /// Restrict to these query ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    queries: Vec<QueryId>,
    /// Keep the context column instead of pooling each query into one context.
    #[arg(long)]
    context_column: bool,
    /// Use the exact value in this synthetic world as the reference.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// World configuration file.
    #[arg(long)]
    world: PathBuf,
    /// Logging policy file; defaults to uniform over all lists.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Drift the logging policy linearly from --policy to this one over the days.
    #[arg(long)]
    end_policy: Option<PathBuf>,
    /// Total number of records.
    #[arg(long, default_value_t = 10_000)]
    records: usize,
    #[arg(long, default_value_t = 1)]
    days: u32,
    /// Overrides the seed in the world config.
    #[arg(long)]
    seed: Option<u64>,
    /// Truncate the simulated lists to this many positions.
    #[arg(long)]
    positions: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_enum)]
    estimator: Family,
    #[arg(long, value_parser = parse_clip, default_value = "inf")]
    clip: Clip,
    #[command(flatten)]
    reward: RewardArgs,
    #[command(flatten)]
    harness: HarnessArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    log: LogArgs,
    /// Estimator families (comma separated); defaults to all five.
    #[arg(long, value_enum, value_delimiter = ',')]
    estimator: Vec<Family>,
    /// Clipping grid (comma separated, `inf` allowed).
    #[arg(long, value_parser = parse_clip, value_delimiter = ',',
          default_value = "0,0.5,1,2,5,10,20,50,100,inf")]
    clip: Vec<Clip>,
    #[command(flatten)]
    reward: RewardArgs,
    #[command(flatten)]
    harness: HarnessArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    log: LogArgs,
    /// `list` (greedy) or `ip` (LP plus decomposition into lists).
    #[arg(long, value_enum)]
    estimator: Family,
    #[arg(long, value_parser = parse_clip)]
    clip: Clip,
    #[arg(long, value_parser = parse_theta, default_value = "ones")]
    theta: ThetaSpec,
    /// Logging policy; defaults to the list frequencies in the log.
    #[arg(long)]
    pihat: Option<PathBuf>,
    /// Only use records of this query.
    #[arg(long)]
    query: Option<QueryId>,
    /// Confidence parameter of the certificate.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Policy output file; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Certificate output file; defaults to stderr.
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    world: PathBuf,
    /// True logging policy.
    #[arg(long)]
    pi: PathBuf,
    /// Policy assumed by the estimator; defaults to --pi.
    #[arg(long)]
    pihat: Option<PathBuf>,
    /// Evaluated policy.
    #[arg(long)]
    h: PathBuf,
    #[arg(long, value_enum)]
    estimator: Family,
    #[arg(long, value_parser = parse_clip)]
    clip: Clip,
    #[command(flatten)]
    reward: RewardArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run_with_workers(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(feature = "parallel")]
fn run_with_workers(cli: Cli) -> Result<(), Error> {
    match cli.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| run(cli.command)),
        None => run(cli.command),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_workers(cli: Cli) -> Result<(), Error> {
    run(cli.command)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Optimize(a) => optimize(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn read_numbers(path: &Path) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("{}: bad number `{s}`", path.display())))
        })
        .collect()
}

fn theta_for(spec: &ThetaSpec, k: usize) -> Result<RewardWeights, Error> {
    match spec {
        ThetaSpec::Ones => RewardWeights::ones(k),
        ThetaSpec::Dcg => RewardWeights::dcg(k),
        ThetaSpec::File(p) => {
            let w = read_numbers(p)?;
            if w.len() != k {
                return Err(Error::Dimension(format!("{} has {} weights for {k} positions", p.display(), w.len())));
            }
            RewardWeights::new(w)
        }
    }
}

fn examination_for(spec: &ExaminationSpec, k: usize) -> Result<Vec<f64>, Error> {
    match spec {
        ExaminationSpec::InverseRank => Ok(inverse_rank(k)),
        ExaminationSpec::File(p) => {
            let e = read_numbers(p)?;
            if e.len() != k {
                return Err(Error::Dimension(format!("{} has {} entries for {k} positions", p.display(), e.len())));
            }
            Ok(e)
        }
    }
}

fn config_for(family: Family, clip: Clip, reward: &RewardArgs, k: usize) -> Result<EstimatorConfig, Error> {
    let theta = theta_for(&reward.theta, k)?;
    let examination = match family {
        Family::Pbm => Some(examination_for(&reward.examination, k)?),
        _ => None,
    };
    EstimatorConfig::new(family.to_core(), clip, theta, examination)
}

fn load_log(args: &LogArgs) -> Result<LoggedDataset, Error> {
    match args.format {
        Format::Native => {
            let ds = parse_native(&args.log)?;
            match args.positions {
                Some(k) => ds.truncate_positions(k),
                None => Ok(ds),
            }
        }
        Format::Yandex => {
            let k = args
                .positions
                .ok_or_else(|| Error::Config("--positions is required for yandex logs".into()))?;
            let (ds, stats) = parse_yandex(&args.log, k)?;
            eprintln!(
                "sessions {} (skipped {}), records {}, clicks kept {}, outside prefix {}, unmatched {}",
                stats.sessions,
                stats.sessions_skipped,
                stats.records,
                stats.clicks_kept,
                stats.clicks_outside_prefix,
                stats.unmatched_clicks
            );
            Ok(ds)
        }
    }
}

fn uniform_policy(world: &SyntheticWorld) -> Result<Policy, Error> {
    let lists = world.catalog().all_lists(MAX_LISTS)?;
    let dist = ListDistribution::from_weights(lists.into_iter().map(|l| (l, 1.0)))?;
    Ok(Policy::shared(world.catalog().contexts(), &dist))
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let mut world = read_world_config(&a.world)?;
    if let Some(seed) = a.seed {
        world = world.with_seed(seed);
    }
    let start = match &a.policy {
        Some(p) => Policy::read(p)?,
        None => uniform_policy(&world)?,
    };
    let log = match &a.end_policy {
        Some(p) => {
            let end = Policy::read(p)?;
            let per_day = a.records.div_ceil(a.days.max(1) as usize);
            simulate_drifting_log(&world, &start, &end, per_day, a.days)?
        }
        None => simulate_log(&world, &start, a.records, a.days)?,
    };
    let log = match a.positions {
        Some(k) => log.truncate_positions(k)?,
        None => log,
    };
    emit(a.out.as_deref(), &to_native_string(&log))
}

fn sliced(log: &LoggedDataset, h: &HarnessArgs) -> Result<DaySlicedLog, Error> {
    DaySlicedLog::new(log, h.days, h.context_column)
}

fn reference_world(h: &HarnessArgs, k: usize) -> Result<Option<SyntheticWorld>, Error> {
    let Some(path) = &h.world else { return Ok(None) };
    let world = read_world_config(path)?;
    if world.catalog().list_length() != k {
        return Err(Error::Dimension(format!(
            "world has {} positions but the log has {k}",
            world.catalog().list_length()
        )));
    }
    Ok(Some(world))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Error> {
    let log = load_log(&a.log)?;
    let k = log.list_length();
    let config = config_for(a.estimator, a.clip, &a.reward, k)?;
    let world = reference_world(&a.harness, k)?;
    let reference = world.as_ref().map_or(Reference::Empirical, Reference::Synthetic);
    let report = evaluate(&sliced(&log, &a.harness)?, &a.harness.queries, &config, reference)?;
    emit(a.harness.out.as_deref(), &report.to_tsv())
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let log = load_log(&a.log)?;
    let k = log.list_length();
    let families: Vec<EstimatorFamily> = if a.estimator.is_empty() {
        EstimatorFamily::ALL.to_vec()
    } else {
        a.estimator.iter().map(|f| f.to_core()).collect()
    };
    let theta = theta_for(&a.reward.theta, k)?;
    let examination = if families.contains(&EstimatorFamily::Pbm) {
        Some(examination_for(&a.reward.examination, k)?)
    } else {
        None
    };
    let world = reference_world(&a.harness, k)?;
    let reference = world.as_ref().map_or(Reference::Empirical, Reference::Synthetic);
    let table = m_sweep(
        &sliced(&log, &a.harness)?,
        &a.harness.queries,
        &families,
        &a.clip,
        &theta,
        examination.as_deref(),
        reference,
    )?;
    emit(a.harness.out.as_deref(), &table.to_tsv())
}

fn optimize(a: OptimizeArgs) -> Result<(), Error> {
    let mut log = load_log(&a.log)?;
    if let Some(q) = a.query {
        log = log.filter(|r| r.query == q);
        if log.is_empty() {
            return Err(Error::EmptyDataset);
        }
    }
    let k = log.list_length();
    let theta = theta_for(&a.theta, k)?;
    let pihat = match &a.pihat {
        Some(p) => Policy::read(p)?,
        None => estimate_policy(&log, 0.0)?,
    };
    let (policy, objective) = match a.estimator {
        Family::List => {
            let r = best_list_policy(&log, &pihat, &EstimatorConfig::list(a.clip, theta.clone()))?;
            (r.policy, r.objective)
        }
        Family::Ip => {
            let r = best_ip_marginals(&log, &pihat, &EstimatorConfig::ip(a.clip, theta.clone()))?;
            (decode_marginals(&r.policy, DECODE_TOLERANCE)?, r.objective)
        }
        _ => return Err(Error::Config("optimize supports --estimator list or ip".into())),
    };
    let certificate = certify(&theta, a.delta, log.len())?;
    let report = format!("objective\t{objective:.6}\nrecords\t{}\n{}", log.len(), certificate.to_report());
    emit(a.out.as_deref(), &policy.to_text())?;
    match &a.certificate {
        Some(path) => emit(Some(path), &report),
        None => {
            eprint!("{report}");
            Ok(())
        }
    }
}

fn diagnose(a: DiagnoseArgs) -> Result<(), Error> {
    let world = read_world_config(&a.world)?;
    let k = world.catalog().list_length();
    let pi = Policy::read(&a.pi)?;
    let pihat = match &a.pihat {
        Some(p) => Policy::read(p)?,
        None => pi.clone(),
    };
    let h = Policy::read(&a.h)?;
    let config = config_for(a.estimator, a.clip, &a.reward, k)?;
    let mut report = String::new();
    let class = match a.estimator {
        Family::List | Family::Ip => {
            let level = if a.estimator == Family::List { BiasLevel::List } else { BiasLevel::Ip };
            report.push_str(&bias_diagnostics(&world, &pi, &pihat, &h, &config, level)?.to_report());
            Some(if a.estimator == Family::List { ClassLevel::List } else { ClassLevel::Ip })
        }
        _ => {
            let expected = exact_expected_estimate(&world, &pi, &pihat, &h, &config)?;
            let truth = world.true_value(&h, config.theta())?;
            report.push_str(&format!(
                "clip\t{}\nexpected_estimate\t{expected:.6}\ntrue_value\t{truth:.6}\nbias\t{:.6}\n",
                a.clip,
                expected - truth
            ));
            match a.estimator {
                Family::Pbm => Some(ClassLevel::Pbm {
                    examination: config.examination().unwrap_or_default().to_vec(),
                    theta: config.theta().clone(),
                }),
                Family::Item => Some(ClassLevel::Item {
                    theta: config.theta().clone(),
                }),
                _ => None,
            }
        }
    };
    if let Some(level) = class {
        let v = check_unclipped_class(&h, &pi, a.clip, &level)?;
        report.push_str(&format!("unclipped_class_member\t{}\n", v.member));
        report.push_str(&format!("worst_ratio\t{:.6}\n", v.worst_ratio));
        if let Some(x) = v.worst_context {
            report.push_str(&format!("worst_context\t{x}\nworst_entry\t{}\n", v.worst_entry));
        }
    }
    emit(a.out.as_deref(), &report)
}
