//! `fhmm`: simulate, filter, smooth, fit and forecast factorial HMMs from
//! the command line.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fhmm_core::em::{em_fit, random_parameters, EmConfig, EmParameters, InitRanges, Termination};
use fhmm_core::exact::{filter_exact, smooth_exact};
use fhmm_core::factor_graph::{locality_exponents, parse_graph, GraphConstants};
use fhmm_core::forecast::{forecast_series, smoothed_emission_mean};
use fhmm_core::graph_inference::{graph_filter, graph_smoother, LocalityPlan, DEFAULT_JOINT_CAP_BITS};
use fhmm_core::io::{self, BenchRecord, LtvRecord};
use fhmm_core::model::experiment_chain_model;
use fhmm_core::{FactorGraph, FhmmModel, ObservationSequence, Partition};

#[derive(Parser, Debug)]
#[command(name = "fhmm", version, about = "Localized inference for factorial hidden Markov models")]
struct Cli {
    /// Worker threads for per-block parallelism (default: all cores).
    #[arg(long, global = true, env = "FHMM_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample hidden states and observations from a model.
    Simulate(SimulateArgs),
    /// Run the Graph Filter and write block marginals.
    Filter(InferArgs),
    /// Run the Graph Filter and Graph Smoother and write smoothed block marginals.
    Smooth(InferArgs),
    /// Estimate parameters with Graph-Smoother EM.
    Fit(FitArgs),
    /// Write smoothed emission means and one-step forecasts.
    Forecast(InferArgs),
    /// Compare Graph Filter/Smoother marginals with exact inference.
    Compare(InferArgs),
    /// Time filtering plus smoothing over a sweep of model sizes and radii.
    Bench(BenchArgs),
    /// Print graph constants and locality exponents as key=value lines.
    GraphStats(GraphStatsArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of observed steps T.
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for observations.csv and states.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PlanArgs {
    /// `singleton`, `trivial`, or blocks such as `0,1;2;3`.
    #[arg(long, default_value = "singleton")]
    partition: String,
    /// Localization radius m.
    #[arg(long = "radius", short = 'm', default_value_t = 0)]
    radius: usize,
    /// Cap on card(U K^) * log2 L for one block's joint table.
    #[arg(long, default_value_t = DEFAULT_JOINT_CAP_BITS)]
    joint_cap_bits: u32,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    obs: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Model giving the graph, state values and the starting point.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    obs: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    /// Number of random initializations; 0 starts from the model file.
    #[arg(long, default_value_t = 0)]
    inits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Output directory for trace CSVs and fitted_model.toml.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Model sizes M, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Radii m, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest M for which the exact recursions are also timed.
    #[arg(long, default_value_t = 12)]
    exact_limit: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GraphStatsArgs {
    /// Model file whose graph is described.
    #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
    model: Option<PathBuf>,
    /// Plain-text factor-graph file.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "singleton")]
    partition: String,
    #[arg(long = "radius", short = 'm', default_value_t = 0)]
    radius: usize,
}

fn build_plan(model: &FhmmModel, args: &PlanArgs) -> Result<LocalityPlan> {
    let partition = Arc::new(io::parse_partition(&args.partition, model.num_variables())?);
    Ok(LocalityPlan::with_joint_cap(
        model.graph(),
        partition,
        args.radius,
        model.cardinality(),
        args.joint_cap_bits,
    )?)
}

fn load(model: &Path, obs: &Path) -> Result<(FhmmModel, ObservationSequence)> {
    let model = io::load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let obs = io::load_observations_csv(obs).with_context(|| format!("loading observations {}", obs.display()))?;
    if obs.num_factors() != model.graph().num_factors() {
        bail!(
            "observations have {} columns but the model has {} factors",
            obs.num_factors(),
            model.graph().num_factors()
        );
    }
    Ok((model, obs))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = io::load_model(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let traj = model.sample_trajectory(args.steps, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_observations_csv(&args.out.join("observations.csv"), &traj.observations)?;
    io::write_states_csv(&args.out.join("states.csv"), &traj.states)?;
    Ok(())
}

fn infer(args: &InferArgs, smooth: bool) -> Result<()> {
    let (model, obs) = load(&args.model, &args.obs)?;
    let plan = build_plan(&model, &args.plan)?;
    let run = graph_filter(&model, &plan, &obs)?;
    println!("surrogate_loglik={}", run.surrogate_log_likelihood());
    if smooth {
        let smoothed = graph_smoother(&model, &plan, &run.filters)?;
        io::write_marginals_csv(&args.out, &smoothed)?;
    } else {
        io::write_marginals_csv(&args.out, &run.filters)?;
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let (template, obs) = load(&args.model, &args.obs)?;
    let plan = build_plan(&template, &args.plan)?;
    let mut config = EmConfig::new(plan);
    config.max_iterations = args.max_iterations;
    config.tolerance = args.tolerance;
    let values = template.emission().state_values().to_vec();
    let starts: Vec<FhmmModel> = if args.inits == 0 {
        vec![template.clone()]
    } else {
        (0..args.inits)
            .map(|i| {
                random_parameters(template.cardinality(), InitRanges::default(), args.seed.wrapping_add(i as u64))
                    .to_model(template.graph(), &values)
            })
            .collect::<fhmm_core::Result<_>>()?
    };
    std::fs::create_dir_all(&args.out)?;
    let mut best: Option<(f64, EmParameters)> = None;
    for (i, start) in starts.iter().enumerate() {
        let est = em_fit(start, &obs, &config)?;
        io::write_trace_csv(&args.out.join(format!("trace_{i}.csv")), &est.trace)?;
        let final_ll = est.trace.last().map_or(f64::NEG_INFINITY, |r| r.surrogate_log_likelihood);
        match &est.termination {
            Termination::Degenerate(msg) => log::warn!("init {i} stopped early: {msg}"),
            t => log::info!("init {i}: {t:?} after {} iterations", est.trace.len()),
        }
        println!(
            "init={i} iterations={} c={} sigma2={} surrogate_loglik={final_ll}",
            est.trace.len(),
            est.parameters.c,
            est.parameters.sigma2
        );
        if best.as_ref().is_none_or(|(ll, _)| final_ll > *ll) {
            best = Some((final_ll, est.parameters));
        }
    }
    let (_, params) = best.context("no initialization produced an estimate")?;
    let fitted = params.to_model(template.graph(), &values)?;
    io::save_model(&args.out.join("fitted_model.toml"), &fitted)?;
    Ok(())
}

fn forecast(args: &InferArgs) -> Result<()> {
    let (model, obs) = load(&args.model, &args.obs)?;
    let plan = build_plan(&model, &args.plan)?;
    let run = graph_filter(&model, &plan, &obs)?;
    let smoothed = graph_smoother(&model, &plan, &run.filters)?;
    let mut fit = smoothed_emission_mean(&model, &smoothed)?;
    // Time 0 has no observation to compare against.
    fit.times.remove(0);
    fit.values.remove(0);
    let ahead = forecast_series(&model, &run.filters)?;
    io::write_means_csv(&args.out, &[&fit, &ahead], Some(&obs))?;
    let rmse = |series: &fhmm_core::forecast::MeanSeries| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (&t, row) in series.times.iter().zip(&series.values) {
            if t >= 1 && t <= obs.len() {
                for (v, y) in row.iter().zip(obs.at(t)) {
                    sum += (v - y).powi(2);
                    n += 1;
                }
            }
        }
        (sum / n.max(1) as f64).sqrt()
    };
    println!("smoothed_rmse={}", rmse(&fit));
    println!("forecast_rmse={}", rmse(&ahead));
    Ok(())
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn compare(args: &InferArgs) -> Result<()> {
    let (model, obs) = load(&args.model, &args.obs)?;
    let plan = build_plan(&model, &args.plan)?;
    let run = graph_filter(&model, &plan, &obs)?;
    let smoothed = graph_smoother(&model, &plan, &run.filters)?;
    let exact = filter_exact(&model, &obs)?;
    let exact_smoothed = smooth_exact(&model, &exact.filters)?;
    let mut rows = Vec::new();
    for t in 0..=obs.len() {
        for v in 0..model.num_variables() {
            rows.push(LtvRecord {
                t,
                variable: v,
                filter_ltv: tv(
                    &run.filters[t].variable_marginal(v)?,
                    &exact.filters[t].variable_marginal(v)?,
                ),
                smoother_ltv: tv(
                    &smoothed[t].variable_marginal(v)?,
                    &exact_smoothed[t].variable_marginal(v)?,
                ),
            });
        }
    }
    io::write_compare_csv(&args.out, &rows)?;
    let n = rows.len().max(1) as f64;
    println!("mean_filter_ltv={}", rows.iter().map(|r| r.filter_ltv).sum::<f64>() / n);
    println!("mean_smoother_ltv={}", rows.iter().map(|r| r.smoother_ltv).sum::<f64>() / n);
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut rows = Vec::new();
    for &m_vars in &args.sizes {
        let model = experiment_chain_model(m_vars, 1.0, 1.0)?;
        let obs = model.sample_trajectory(args.steps, args.seed)?.observations;
        for &radius in &args.radii {
            let plan = LocalityPlan::new(model.graph(), Arc::new(Partition::singleton(m_vars)), radius, 2)?;
            let start = Instant::now();
            let run = graph_filter(&model, &plan, &obs)?;
            graph_smoother(&model, &plan, &run.filters)?;
            let seconds = start.elapsed().as_secs_f64();
            println!("method=graph M={m_vars} m={radius} seconds={seconds}");
            rows.push(BenchRecord {
                method: "graph".into(),
                num_variables: m_vars,
                radius: Some(radius),
                seconds,
                factor_evaluations: run.factor_evaluations,
            });
        }
        if m_vars <= args.exact_limit {
            let start = Instant::now();
            let run = filter_exact(&model, &obs)?;
            smooth_exact(&model, &run.filters)?;
            let seconds = start.elapsed().as_secs_f64();
            println!("method=exact M={m_vars} seconds={seconds}");
            rows.push(BenchRecord {
                method: "exact".into(),
                num_variables: m_vars,
                radius: None,
                seconds,
                factor_evaluations: (args.steps * model.graph().num_factors()) as u64 * (1u64 << m_vars),
            });
        }
    }
    io::write_bench_csv(&args.out, &rows)?;
    Ok(())
}

fn graph_stats(args: &GraphStatsArgs) -> Result<()> {
    let graph: FactorGraph = match (&args.model, &args.graph) {
        (Some(path), _) => io::load_model(path)?.graph().clone(),
        (None, Some(path)) => parse_graph(&std::fs::read_to_string(path)?)?,
        (None, None) => unreachable!("clap requires one of --model and --graph"),
    };
    let partition = io::parse_partition(&args.partition, graph.num_variables())?;
    let constants = GraphConstants::compute(&graph, &partition)?;
    let exponents = locality_exponents(&graph, &partition, args.radius)?;
    println!("num_variables={}", graph.num_variables());
    println!("num_factors={}", graph.num_factors());
    println!("num_blocks={}", partition.num_blocks());
    println!("upsilon={}", constants.upsilon);
    println!("upsilon2={}", constants.upsilon2);
    println!("upsilon_tilde={}", constants.upsilon_tilde);
    println!("n={}", constants.n);
    println!("m={}", args.radius);
    println!("a={}", exponents.a);
    println!("b={}", exponents.b);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Filter(a) => infer(a, false),
        Command::Smooth(a) => infer(a, true),
        Command::Fit(a) => fit(a),
        Command::Forecast(a) => forecast(a),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => bench(a),
        Command::GraphStats(a) => graph_stats(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
