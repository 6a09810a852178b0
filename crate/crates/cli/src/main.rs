//! Command-line surface: synthetic list simulation, chain fitting, posterior
//! summaries, model comparison, and direct utilities.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure. Failures
//! print one machine-readable JSON object to stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use porder::io::{self, FitConfig, IoError, RunConfig};
use porder::linext;
use porder::mcmc::{self, McmcError, ModelTag};
use porder::obs::{self, ObservationSet};
use porder::poset::RankList;
use porder::prior::{self, PriorError};
use porder::summary::{self, SummaryError};

#[derive(Parser)]
#[command(name = "porder", version, about = "Partial-order inference from ranked lists")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ranked lists from a known order.
    Simulate(SimulateArgs),
    /// Run the sampler on a list file and write the run directory.
    Fit(FitArgs),
    /// Summarize a fitted run: edge/tie frequencies, consensus, depths.
    Summarize(SummarizeArgs),
    /// Compare fitted runs.
    #[command(subcommand)]
    Compare(CompareCmd),
    /// Count the linear extensions of a poset file.
    CountLe(CountLeArgs),
    /// Sample the generative prior and report depth or structure fractions.
    PriorPredictive(PriorPredictiveArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Poset file with the true order.
    #[arg(long)]
    truth: PathBuf,
    /// List file whose per-line membership is copied, or a comma-separated
    /// set of list lengths for random membership.
    #[arg(long)]
    template: String,
    /// noisefree | random-error | mallows | qj
    #[arg(long)]
    model: String,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output list file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input list file.
    #[arg(long)]
    data: PathBuf,
    /// mallows | qj | noisefree
    #[arg(long)]
    model: String,
    /// JSON file with {"prior": {...}, "mcmc": {...}}; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    trace_dir: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Optional poset file with the true order; enables roc.csv.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CompareCmd {
    /// Expected log pointwise predictive density per run.
    Waic(WaicArgs),
    /// Savage-Dickey Bayes factor for the nested fixed-dimension model.
    Bf(BfArgs),
}

#[derive(Args)]
struct WaicArgs {
    /// Repeatable; one row of output per run directory.
    #[arg(long = "trace-dir", required = true)]
    trace_dirs: Vec<PathBuf>,
}

#[derive(Args)]
struct BfArgs {
    #[arg(long)]
    trace_dir: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    prior_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CountLeArgs {
    #[arg(long)]
    poset: PathBuf,
}

#[derive(Args)]
struct PriorPredictiveArgs {
    #[arg(long)]
    n: usize,
    /// JSON file with {"prior": {...}}; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report vertex-series-parallel / layered-order fractions instead of
    /// the depth histogram.
    #[arg(long)]
    structure: bool,
}

enum CliError {
    Data(String),
    Numeric(String),
    Usage(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<McmcError> for CliError {
    fn from(e: McmcError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<PriorError> for CliError {
    fn from(e: PriorError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SummaryError> for CliError {
    fn from(e: SummaryError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<porder::poset::PosetError> for CliError {
    fn from(e: porder::poset::PosetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<porder::obs::ObsError> for CliError {
    fn from(e: porder::obs::ObsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg, code) = match e {
                CliError::Usage(m) => ("usage", m, 2),
                CliError::Data(m) => ("data", m, 3),
                CliError::Numeric(m) => ("numeric", m, 4),
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": msg, "kind": kind })
            );
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => fit(args),
        Command::Summarize(args) => summarize(args),
        Command::Compare(CompareCmd::Waic(args)) => compare_waic(args),
        Command::Compare(CompareCmd::Bf(args)) => compare_bf(args),
        Command::CountLe(args) => count_le(args),
        Command::PriorPredictive(args) => prior_predictive(args),
    }
}

fn parse_model(s: &str) -> Result<ModelTag, CliError> {
    match s {
        "mallows" => Ok(ModelTag::Mallows),
        "qj" => Ok(ModelTag::QueueJump),
        "noisefree" => Ok(ModelTag::NoiseFree),
        other => Err(CliError::Usage(format!(
            "unknown model {other:?}; expected mallows, qj or noisefree"
        ))),
    }
}

/// Membership template: the real data's per-list actor sets, or random sets
/// of the given lengths.
enum Template {
    Lists(ObservationSet),
    Lengths(Vec<usize>),
}

fn load_template(spec: &str, n: usize) -> Result<Template, CliError> {
    let path = PathBuf::from(spec);
    if path.exists() {
        return Ok(Template::Lists(io::parse_lists_file(&path)?));
    }
    let lengths: Result<Vec<usize>, _> =
        spec.split(',').map(|t| t.trim().parse::<usize>()).collect();
    match lengths {
        Ok(lengths) if !lengths.is_empty() && lengths.iter().all(|&l| 2 <= l && l <= n) => {
            Ok(Template::Lengths(lengths))
        }
        _ => Err(CliError::Usage(format!(
            "template {spec:?} is neither a list file nor lengths between 2 and {n}"
        ))),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let truth = io::parse_poset_file(&args.truth)?;
    let strict = truth.strict_part();
    let n = strict.n();
    let template = load_template(&args.template, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let memberships: Vec<Vec<usize>> = match &template {
        Template::Lists(data) => data.lists().iter().map(|l| l.members().to_vec()).collect(),
        Template::Lengths(lengths) => lengths
            .iter()
            .map(|&len| {
                let mut pool: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    pool.swap(i, rng.random_range(0..=i));
                }
                pool.truncate(len);
                pool.sort_unstable();
                pool
            })
            .collect(),
    };

    let mut lists = Vec::with_capacity(memberships.len());
    for (i, members) in memberships.iter().enumerate() {
        let list = match args.model.as_str() {
            "noisefree" => obs::sample_qj(&strict, members, 0.0, &mut rng)?,
            "qj" => {
                let p = args.p.ok_or_else(|| {
                    CliError::Usage("--p is required for the qj model".into())
                })?;
                obs::sample_qj(&strict, members, p, &mut rng)?
            }
            "mallows" => {
                let theta = args.theta.ok_or_else(|| {
                    CliError::Usage("--theta is required for the mallows model".into())
                })?;
                let centre = obs::sample_qj(&strict, members, 0.0, &mut rng)?;
                obs::sample_mallows(&centre, theta, &mut rng)?
            }
            "random-error" => {
                let observed = match &template {
                    Template::Lists(data) => &data.lists()[i],
                    Template::Lengths(_) => {
                        return Err(CliError::Usage(
                            "random-error needs a list-file template to copy pair orders from"
                                .into(),
                        ))
                    }
                };
                let clean = obs::sample_qj(&strict, members, 0.0, &mut rng)?;
                random_error_list(&clean, observed, &mut rng)
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown simulation model {other:?}"
                )))
            }
        };
        lists.push(list);
    }

    let data = ObservationSet::new(n, lists).map_err(IoError::from)?;
    let mut text = format!(
        "# simulated lists: model={} seed={} truth={}\n",
        args.model,
        args.seed,
        args.truth.display()
    );
    text.push_str(&io::lists_to_string(&data));
    fs::write(&args.out, text)?;
    Ok(())
}

/// Pick one pair of actors uniformly at random and force it into the order
/// the pair has in the observed list, swapping their positions if needed.
fn random_error_list<R: Rng>(clean: &RankList, observed: &RankList, rng: &mut R) -> RankList {
    let m = clean.len();
    let mut members = clean.members().to_vec();
    if m < 2 {
        return clean.clone();
    }
    let a_idx = rng.random_range(0..m);
    let mut b_idx = rng.random_range(0..m - 1);
    if b_idx >= a_idx {
        b_idx += 1;
    }
    let (a, b) = (members[a_idx], members[b_idx]);
    let obs_a = observed.position_of(a);
    let obs_b = observed.position_of(b);
    if let (Some(pa), Some(pb)) = (obs_a, obs_b) {
        if (a_idx < b_idx) != (pa < pb) {
            members.swap(a_idx, b_idx);
        }
    }
    RankList::new(members)
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let model = parse_model(&args.model)?;
    let data = io::parse_lists_file(&args.data)?;
    if data.is_empty() {
        return Err(CliError::Data("no lists in the data file".into()));
    }
    let config = match &args.config {
        Some(path) => FitConfig::load(path)?,
        None => FitConfig::default(),
    };
    let mcmc_config = config
        .mcmc
        .to_mcmc_config(model, config.prior.clone(), data.n());
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc_config.seed);
    let trace = mcmc::run_chain(&data, &mcmc_config, &mut rng)?;
    let run = RunConfig {
        prior: config.prior,
        mcmc: io::McmcSettings {
            thin: Some(mcmc_config.thin),
            ..config.mcmc
        },
        model,
        data: args.data.clone(),
        out_dir: args.out_dir.clone(),
    };
    io::write_run(&args.out_dir, &trace, &run)?;
    println!(
        "wrote {} records to {}",
        trace.records.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let (trace, manifest) = io::read_run(&args.trace_dir)?;
    let burn_in = manifest.run.mcmc.burn_in_records.min(trace.records.len().saturating_sub(1));
    let probs = summary::edge_probabilities(&trace, burn_in)?;
    let n = trace.n;
    let dir = &args.trace_dir;

    fs::write(
        dir.join("edge_probs.csv"),
        io::matrix_csv(n, |i, j| probs.strict(i, j)),
    )?;
    fs::write(
        dir.join("ties.csv"),
        io::matrix_csv(n, |i, j| if i == j { 0.0 } else { probs.tie(i, j) }),
    )?;

    let consensus = summary::consensus(&probs, args.epsilon)?;
    fs::write(dir.join("consensus.dot"), io::consensus_to_dot(&consensus))?;

    let depth = summary::depth_histogram(&trace, burn_in)?;
    let mut depth_csv = String::from("depth,mass\n");
    for (d, mass) in depth.iter().enumerate() {
        let _ = writeln!(depth_csv, "{},{}", d + 1, mass);
    }
    fs::write(dir.join("depth_hist.csv"), depth_csv)?;

    let co = summary::cocluster_matrix(&trace, burn_in)?;
    fs::write(dir.join("cocluster.csv"), io::matrix_csv(n, |i, j| co[i][j]))?;

    if let Some(truth_path) = &args.truth {
        let truth = io::parse_poset_file(truth_path)?;
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let roc = summary::roc_curve(&probs, &truth, &grid)?;
        let mut roc_csv = String::from("epsilon,tpr,fpr\n");
        for p in roc {
            let _ = writeln!(roc_csv, "{},{},{}", p.epsilon, p.tpr, p.fpr);
        }
        fs::write(dir.join("roc.csv"), roc_csv)?;
    }
    println!("summaries written to {}", dir.display());
    Ok(())
}

fn compare_waic(args: WaicArgs) -> Result<(), CliError> {
    println!("run,elpd_waic,se");
    for dir in &args.trace_dirs {
        let (trace, manifest) = io::read_run(dir)?;
        let burn_in = manifest.run.mcmc.burn_in_records.min(trace.records.len().saturating_sub(1));
        let rows: Vec<Vec<f64>> = trace.records[burn_in..]
            .iter()
            .map(|r| r.pointwise.clone())
            .collect();
        let waic = summary::elpd_waic(&rows)?;
        println!("{},{},{}", dir.display(), waic.elpd, waic.se);
    }
    Ok(())
}

fn compare_bf(args: BfArgs) -> Result<(), CliError> {
    let (trace, manifest) = io::read_run(&args.trace_dir)?;
    let burn_in = manifest.run.mcmc.burn_in_records.min(trace.records.len().saturating_sub(1));
    let n = trace.n;
    let k0 = n.div_ceil(2);
    let posterior = summary::trace_ck(&trace, burn_in)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let prior_ck =
        summary::sample_prior_ck(n, &manifest.run.prior, args.prior_draws, &mut rng)?;
    let bf = summary::savage_dickey_bf(&prior_ck, &posterior, n, k0)?;
    println!("quantity,value");
    println!("bf_10,{}", bf.bf);
    println!("se,{}", bf.se);
    println!("prior_freq,{}", bf.prior_freq);
    println!("posterior_freq,{}", bf.posterior_freq);
    println!("nesting_point,C={n} K={k0}");
    Ok(())
}

fn count_le(args: CountLeArgs) -> Result<(), CliError> {
    let h = io::parse_poset_file(&args.poset)?;
    let (total, _) = linext::count_linear_extensions_tied(&h)?;
    println!("{total}");
    Ok(())
}

fn prior_predictive(args: PriorPredictiveArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => FitConfig::load(path)?,
        None => FitConfig::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    if args.structure {
        let mut vsp = 0usize;
        let mut bucket = 0usize;
        for _ in 0..args.samples {
            let draw = prior::sample_prior_poset(args.n, &config.prior, &mut rng)?;
            let (quotient, _) = draw.order.collapse_ties();
            vsp += usize::from(quotient.is_vsp());
            bucket += usize::from(quotient.is_bucket_order());
        }
        println!("stat,value");
        println!("vsp_fraction,{}", vsp as f64 / args.samples as f64);
        println!("bucket_fraction,{}", bucket as f64 / args.samples as f64);
    } else {
        let hist = prior::prior_depth_distribution(args.n, &config.prior, args.samples, &mut rng)?;
        println!("depth,mass");
        for (d, mass) in hist.iter().enumerate() {
            println!("{},{}", d + 1, mass);
        }
    }
    Ok(())
}
