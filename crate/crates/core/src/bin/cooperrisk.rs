use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cooperrisk::eval::{
    find_reports, format_table, load_report, run_pipeline, scenario_batch, sweep, Metric, NoiseGrid, Perception,
    PipelineConfig, Summary,
};
use cooperrisk::fusion::NoiseProfile;
use cooperrisk::planner::{write_plan_csv, GradientMode};
use cooperrisk::prediction::PredictorKind;
use cooperrisk::riskmap::{write_binary, write_csv_layers};
use cooperrisk::scenario::{generate_scenario, ScenarioLog, Template};
use cooperrisk::{Error, Result};

#[derive(Parser)]
#[command(name = "cooperrisk", version, about = "Cooperative risk-aware planning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one scenario.
    Run(RunArgs),
    /// Sweep one noise parameter over a batch and emit metric vs. level as CSV.
    Sweep(SweepArgs),
    /// Print the summary table of every report.json under a directory.
    Report { dir: PathBuf },
    /// Write a generated scenario to a JSON file.
    Generate {
        #[arg(long, default_value = "crossing")]
        template: Template,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        density: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Objects per scenario for generated templates.
    #[arg(long, default_value_t = 3)]
    density: usize,
    /// Noise override for every agent, e.g. `pos=0.4,heading=2,dropout=0.1,delay=100`
    /// (heading in degrees).
    #[arg(long)]
    noise: Option<NoiseProfile>,
    #[arg(long, default_value = "multimodal")]
    predictor: PredictorKind,
    /// Modes per object for the multi-modal predictor.
    #[arg(long)]
    modes: Option<usize>,
    /// Fuse only the ego vehicle's own detections.
    #[arg(long)]
    ego_only: bool,
    /// Feed ground-truth objects instead of simulated sensing.
    #[arg(long)]
    ground_truth: bool,
    /// Skip scene-consistency reweighting.
    #[arg(long)]
    no_consistency: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file or template name.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    planner_horizon: Option<usize>,
    #[arg(long)]
    planner_iters: Option<usize>,
    #[arg(long)]
    gradient_mode: Option<GradientMode>,
    /// Monte-Carlo samples per Gaussian in the risk map.
    #[arg(long)]
    samples: Option<usize>,
    /// Directory for the binary and CSV risk-map layers.
    #[arg(long)]
    riskmap_out: Option<PathBuf>,
    /// Directory for report.json, plan.csv and timing.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Template name.
    #[arg(long, default_value = "crossing")]
    scenario: Template,
    #[command(flatten)]
    common: Common,
    /// Scenarios in the batch, seeded `seed..seed + count`.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// `axis=start:stop:step` with axis one of pos, heading, dropout, delay.
    #[arg(long)]
    noise_grid: NoiseGrid,
    #[arg(long, default_value = "epa")]
    metric: Metric,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pipeline_config(c: &Common) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: c.seed,
        noise: c.noise,
        predictor: c.predictor,
        cooperative: !c.ego_only,
        perception: if c.ground_truth {
            Perception::GroundTruth
        } else {
            Perception::Sensed
        },
        ..Default::default()
    };
    if let Some(m) = c.modes {
        cfg.prediction.mode_count = m;
    }
    if c.no_consistency {
        cfg.consistency = None;
    }
    cfg
}

fn load_scenario(source: &str, seed: u64, density: usize) -> Result<ScenarioLog> {
    let path = Path::new(source);
    if path.exists() {
        return ScenarioLog::load(path);
    }
    let template: Template = source.parse().map_err(|_| {
        Error::Config(format!("'{source}' is neither a scenario file nor a template name"))
    })?;
    generate_scenario(template, density, seed)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "/".into(), |x| format!("{x:.4}"))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = pipeline_config(&args.common);
    if let Some(k) = args.planner_horizon {
        cfg.planner.horizon = k;
    }
    if let Some(i) = args.planner_iters {
        cfg.planner.iterations = i;
    }
    if let Some(g) = args.gradient_mode {
        cfg.planner.gradient_mode = g;
    }
    if let Some(s) = args.samples {
        cfg.riskmap.samples = s;
    }
    let log = load_scenario(&args.scenario, args.common.seed, args.common.density)?;
    let out = run_pipeline(&log, &cfg)?;
    let mut report = out.report;

    if let (Some(dir), Some(map)) = (&args.riskmap_out, &out.risk_map) {
        fs::create_dir_all(dir)?;
        let bin = dir.join("riskmap.crsk");
        write_binary(map, &bin)?;
        write_csv_layers(map, dir)?;
        report.artifacts.insert("riskmap".into(), bin.display().to_string());
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        if let Some(plan) = &out.plan {
            let path = dir.join("plan.csv");
            write_plan_csv(plan, cfg.planner.dt, &path)?;
            report.artifacts.insert("plan".into(), path.display().to_string());
        }
        let timing: serde_json::Map<String, serde_json::Value> = out
            .timing
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
        report.artifacts.insert("report".into(), dir.join("report.json").display().to_string());
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }

    println!(
        "AP {}  recall {}  minADE {}  minFDE {}  EPA {}  TOR {} -> {}  CR {}",
        fmt_opt(report.ap),
        fmt_opt(report.recall),
        fmt_opt(report.min_ade),
        fmt_opt(report.min_fde),
        fmt_opt(report.epa),
        format_args!("{:.4}", report.tor_before),
        format_args!("{:.4}", report.tor),
        fmt_opt(report.cr),
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::Config("sweep needs at least one scenario".into()));
    }
    let mut cfg = pipeline_config(&args.common);
    cfg.plan = args.metric.needs_planning();
    let logs = scenario_batch(args.scenario, args.common.density, args.common.seed, args.count)?;
    let rows = sweep(&logs, &cfg, &args.noise_grid)?;
    let mut csv = format!("{},{}\n", args.noise_grid.axis.name(), args.metric.name());
    for (level, summary) in &rows {
        let value = summary.metric(args.metric).map_or_else(String::new, |v| v.to_string());
        csv.push_str(&format!("{level},{value}\n"));
    }
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let paths = find_reports(dir)?;
    if paths.is_empty() {
        return Err(Error::Config(format!("no report.json under {}", dir.display())));
    }
    let mut all = Vec::new();
    let mut rows = Vec::new();
    for p in &paths {
        let r = load_report(p)?;
        let label = p
            .parent()
            .and_then(|d| d.strip_prefix(dir).ok())
            .map(|d| d.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        rows.push((label, Summary::of(std::slice::from_ref(&r))));
        all.push(r);
    }
    if paths.len() > 1 {
        rows.push(("all".into(), Summary::of(&all)));
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Report { dir } => report(&dir),
        Command::Generate {
            template,
            seed,
            density,
            out,
        } => generate_scenario(template, density, seed).and_then(|log| log.save(out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
