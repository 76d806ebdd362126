use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use meinhardt_core::estimator::{estimate, EstimateReport};
use meinhardt_core::experiments::{
    estimation_campaigns, repol_sweep, CampaignResults, MPolicy, McCampaign, RepolSetup, Scenario, SimulationSpec,
};
use meinhardt_core::io::{
    estimate_from_dataset, ingest_csv_with, read_campaign_rmse, read_heatmap, read_measurements, read_repol_samples,
    read_trajectory_meta, write_campaign_table, write_measurements, write_repol_samples, write_repol_summary,
    write_trajectory, HeaderMode, IngestOptions, Manifest, RunConfig, DEFAULT_EXTERNAL_LENGTH,
};
use meinhardt_core::measurement::MeasurementRecorder;
use meinhardt_core::plot::{boxplot_svg, heatmap_svg, loglog_svg};
use meinhardt_core::{bump_kernel, simulate, Error, MeasurementLayout, TorusGrid};

#[derive(Debug, Parser)]
#[command(name = "meinhardt", version, about = "Stochastic Meinhardt model: simulate, measure, estimate D_A")]
struct Cli {
    /// TOML run configuration, or `default` for the built-in one.
    #[arg(long, global = true)]
    config: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for Monte Carlo commands (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the fine grids and time steps of the original study.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and write activator/inhibitor heatmaps.
    Simulate,
    /// Turn a simulated heatmap into local kernel measurements.
    Measure(MeasureArgs),
    /// Augmented MLE from a measurement table or an external CSV.
    Estimate(EstimateArgs),
    /// Time to repolarisation over a noise-level sweep.
    Repol(RepolArgs),
    /// Monte Carlo RMSE and coverage study.
    Campaign(CampaignArgs),
    /// Render a CSV written by another subcommand as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct MeasureArgs {
    /// Activator heatmap written by `simulate`.
    #[arg(long)]
    trajectory: PathBuf,
    /// Kernel half-width.
    #[arg(long)]
    delta: f64,
    /// Number of evenly spaced channels.
    #[arg(long)]
    channels: usize,
    /// Use every `stride`-th recorded frame.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeaderArg {
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Measurement table (with its JSON sidecar) or a frames-by-channels CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Known activator noise level for the data-driven interval.
    #[arg(long)]
    sigma_a: Option<f64>,
    /// Circumference assumed for external data.
    #[arg(long, default_value_t = DEFAULT_EXTERNAL_LENGTH)]
    length: f64,
    /// Time between frames of external data.
    #[arg(long, default_value_t = 1.0)]
    frame_dt: f64,
    /// `auto` treats the first row as a header only if some cell is not a
    /// number; use `present` for a header of numeric positions.
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    header: HeaderArg,
}

#[derive(Debug, Args)]
struct RepolArgs {
    /// Noise levels sigma_A.
    #[arg(long, value_delimiter = ',', default_value = "0,0.025,0.05,0.075,0.1")]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Linear,
    Meinhardt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fixed,
    Scaled,
    Both,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::Linear)]
    scenario: ScenarioArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
    policy: PolicyArg,
    /// Channel count of the fixed policy.
    #[arg(long, default_value_t = 5)]
    fixed_m: usize,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Resolutions as fractions of L.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotKind {
    Heatmap,
    Boxplot,
    Loglog,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    #[arg(long)]
    input: PathBuf,
    /// SVG path (default: input name with `.svg` under --out).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

fn load_config(cli: &Cli) -> meinhardt_core::Result<RunConfig> {
    let mut cfg = match cli.config.as_deref() {
        None | Some("default") => RunConfig::default(),
        Some(path) => RunConfig::load(Path::new(path))?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.paper_scale {
        let steps_per_unit = 4.0 * (2000.0 / cfg.length).powi(2) * cfg.params.D_I.max(cfg.params.D_A);
        cfg.points = 2000;
        cfg.n_steps = cfg.n_steps.max((cfg.horizon * steps_per_unit).ceil() as usize);
        cfg.record_stride = cfg.record_stride.max(cfg.n_steps / 1000);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(cli: &Cli, seed: Option<u64>, config: serde_json::Value) -> meinhardt_core::Result<()> {
    let path = Manifest::new(std::env::args().collect(), seed, config).write(&cli.out)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> meinhardt_core::Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

fn run_simulate(cli: &Cli) -> meinhardt_core::Result<()> {
    let cfg = load_config(cli)?;
    let grid = cfg.grid()?;
    let init = cfg.initial.build(&grid, &cfg.params)?;
    let traj = simulate(&cfg.params, &init, &cfg.solver_config(), &grid)?;
    let files = write_trajectory(&traj, &cli.out, "trajectory")?;
    if traj.discarded {
        eprintln!("warning: the activator went negative; the path is marked discarded");
    }
    println!("wrote {} and {}", files.activator.display(), files.inhibitor.display());
    manifest(cli, Some(cfg.seed), to_json(&cfg)?)
}

fn run_measure(cli: &Cli, args: &MeasureArgs) -> meinhardt_core::Result<()> {
    let (times, _, values) = read_heatmap(&args.trajectory)?;
    let meta_path = sibling_meta(&args.trajectory);
    let meta = read_trajectory_meta(&meta_path)?;
    let grid = TorusGrid::new(meta.length, meta.points)?;
    if values.cols() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: values.cols() });
    }
    if args.stride == 0 || args.stride >= times.len() {
        return Err(Error::StrideTooLarge { stride: args.stride, available: times.len().saturating_sub(1) });
    }
    let layout = MeasurementLayout::regular(args.channels, args.delta, meta.length)?;
    let mut rec = MeasurementRecorder::new(layout, &bump_kernel(), &grid)?;
    for j in (0..times.len()).step_by(args.stride) {
        rec.record(times[j], values.row(j))?;
    }
    let ms = rec.finish()?;
    let path = cli.out.join("measurements.csv");
    write_measurements(&ms, &path)?;
    println!("wrote {} ({} frames, {} channels)", path.display(), ms.times.len(), ms.channels());
    let config = serde_json::json!({
        "trajectory": args.trajectory,
        "delta": args.delta,
        "channels": args.channels,
        "stride": args.stride,
    });
    manifest(cli, Some(meta.seed), config)
}

/// `<dir>/trajectory_activator.csv` -> `<dir>/trajectory.json`
fn sibling_meta(heatmap: &Path) -> PathBuf {
    let stem = heatmap.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let base = stem.strip_suffix("_activator").or_else(|| stem.strip_suffix("_inhibitor")).unwrap_or(stem);
    heatmap.with_file_name(format!("{base}.json"))
}

fn run_estimate(cli: &Cli, args: &EstimateArgs) -> meinhardt_core::Result<()> {
    let report: EstimateReport = if args.input.with_extension("json").is_file() {
        let ms = read_measurements(&args.input)?;
        estimate(&ms, &bump_kernel(), args.sigma_a, args.alpha)?
    } else {
        let header = match args.header {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Present => HeaderMode::Present,
            HeaderArg::Absent => HeaderMode::Absent,
        };
        let ds = ingest_csv_with(&args.input, IngestOptions { header, length: args.length, frame_dt: args.frame_dt })?;
        estimate_from_dataset(&ds, args.alpha)?
    };
    println!("{}", report.summary_line());
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("estimate.json"), json + "\n")?;
    let config = serde_json::json!({
        "input": args.input,
        "alpha": args.alpha,
        "sigma_a": args.sigma_a,
        "length": args.length,
        "frame_dt": args.frame_dt,
    });
    manifest(cli, None, config)
}

fn run_repol(cli: &Cli, args: &RepolArgs) -> meinhardt_core::Result<()> {
    let cfg = load_config(cli)?;
    let mut setup = if cli.paper_scale { RepolSetup::paper_scale() } else { RepolSetup::default() };
    if let Some(g) = args.gamma {
        setup.gamma = g;
    }
    if let Some(h) = args.horizon {
        setup.horizon = h;
    }
    let stats = repol_sweep(&cfg.params, &args.sigmas, args.replicates, &setup, cfg.seed, cli.workers)?;
    for s in &stats {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "sigma_A = {:<6} kept {:>4}  mean tau {:>8}  variance {:>8}  discarded {:.1}%  never {}",
            s.sigma,
            s.tau_samples.len(),
            fmt(s.mean()),
            fmt(s.variance()),
            100.0 * s.discard_fraction(),
            s.n_never
        );
    }
    write_repol_samples(&stats, &cli.out.join("repol_samples.csv"))?;
    write_repol_summary(&stats, &cli.out.join("repol_summary.csv"))?;
    let config = serde_json::json!({
        "params": cfg.params,
        "sigmas": args.sigmas,
        "replicates": args.replicates,
        "setup": setup,
    });
    manifest(cli, Some(cfg.seed), config)
}

fn run_campaign(cli: &Cli, args: &CampaignArgs) -> meinhardt_core::Result<()> {
    let cfg = load_config(cli)?;
    let scenario = match args.scenario {
        ScenarioArg::Linear => Scenario::LinearZeroInit,
        ScenarioArg::Meinhardt => Scenario::FullMeinhardt,
    };
    let policies = match args.policy {
        PolicyArg::Fixed => vec![MPolicy::Fixed(args.fixed_m)],
        PolicyArg::Scaled => vec![MPolicy::Scaled],
        PolicyArg::Both => vec![MPolicy::Fixed(args.fixed_m), MPolicy::Scaled],
    };
    let campaigns: Vec<McCampaign> = policies
        .into_iter()
        .map(|p| {
            let mut c = McCampaign::new(scenario, p, args.replicates, cfg.seed);
            c.params = cfg.params;
            if cli.paper_scale {
                c.sim = SimulationSpec::paper_scale();
            }
            if let Some(fracs) = &args.deltas {
                c.delta_grid = fracs.iter().map(|f| f * c.sim.length).collect();
            }
            c
        })
        .collect();
    let results: Vec<CampaignResults> = estimation_campaigns(&campaigns, &bump_kernel(), cli.workers)?;
    for r in &results {
        println!("{} (slope {})", r.campaign.policy.label(), r.rmse_slope.map_or("-".into(), |s| format!("{s:.3}")));
        for s in &r.per_delta {
            println!(
                "  delta {:<6.3} M {:<3} rmse {:.3e}  mean {:.5}  coverage {:?}",
                s.delta, s.channels, s.rmse, s.mean, s.coverage_plugin
            );
        }
    }
    write_campaign_table(&results, &cli.out.join("campaign.csv"))?;
    manifest(cli, Some(cfg.seed), to_json(&campaigns)?)
}

fn run_plot(cli: &Cli, args: &PlotArgs) -> meinhardt_core::Result<()> {
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    let title = args.title.clone().unwrap_or_else(|| stem.clone());
    let svg = match args.kind {
        PlotKind::Heatmap => {
            let (times, xs, values) = read_heatmap(&args.input)?;
            heatmap_svg(&times, &xs, &values, &title)?
        }
        PlotKind::Boxplot => {
            let groups: Vec<(String, Vec<f64>)> =
                read_repol_samples(&args.input)?.into_iter().map(|(s, v)| (s.to_string(), v)).collect();
            boxplot_svg(&groups, &title, "tau")?
        }
        PlotKind::Loglog => loglog_svg(&read_campaign_rmse(&args.input)?, &title, "delta", "RMSE")?,
    };
    let out = args.output.clone().unwrap_or_else(|| cli.out.join(format!("{stem}.svg")));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&out, svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> meinhardt_core::Result<()> {
    match &cli.command {
        Command::Simulate => run_simulate(cli),
        Command::Measure(a) => run_measure(cli, a),
        Command::Estimate(a) => run_estimate(cli, a),
        Command::Repol(a) => run_repol(cli, a),
        Command::Campaign(a) => run_campaign(cli, a),
        Command::Plot(a) => run_plot(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
