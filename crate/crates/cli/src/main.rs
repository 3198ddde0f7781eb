//! `hmdchan`: synthesize, de-noise and analyse 8-panel head-mounted receiver
//! channels.
//!
//! Thread count follows `HMDCHAN_THREADS` when set, otherwise rayon's
//! default (one worker per core).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hmd_channel::denoise::{denoise, DenoiseParams};
use hmd_channel::eigengain::{compute_grids, EigenGainGrid};
use hmd_channel::geometry::{MobilityPattern, PanelConfig};
use hmd_channel::io::{read_cir, read_grid, write_cir, write_grid};
use hmd_channel::metrics::StdConvention;
use hmd_channel::pipeline::{cir_file_name, grid_file_name, run_pipeline, scene_seed, RunConfig};
use hmd_channel::report::{denoise_table, figure_tables, metric_tables, MetricOptions, Table};
use hmd_channel::synth::{synthesize_measurement, RenderSettings, Scene};
use hmd_channel::CirSnapshot;

#[derive(Parser)]
#[command(name = "hmdchan", version, about)]
struct Cli {
    /// Worker threads for the numeric stages (0 = one per core).
    #[arg(long, env = "HMDCHAN_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every snapshot of one or more scene files to CIR containers.
    Synth(SynthArgs),
    /// De-noise CIR containers and write a de-noising report.
    Denoise(DenoiseArgs),
    /// Per-subcarrier dominant-eigenmode gain grids from CIR containers.
    Gains(GainsArgs),
    /// Metric tables from gain grids.
    Metrics(TableArgs),
    /// Plot-ready distribution tables from gain grids.
    Report(TableArgs),
    /// Synthesis through reporting in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ScaleArgs {
    /// 64 x 32 x 256 instead of 256 x 128 x 2048.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Args, Default)]
struct DenoiseFlags {
    /// Percentile of the noise-region eigenvalues used as threshold.
    #[arg(long)]
    threshold_percentile: Option<f64>,
    /// Maximum delay spread in seconds.
    #[arg(long)]
    tau_max: Option<f64>,
    /// Noise-only delay interval in seconds, as `LO,HI`.
    #[arg(long, value_parser = parse_interval)]
    noise_region: Option<(f64, f64)>,
}

impl DenoiseFlags {
    fn apply(&self, mut p: DenoiseParams) -> DenoiseParams {
        if let Some(q) = self.threshold_percentile {
            p.threshold_percentile = q;
        }
        if let Some(t) = self.tau_max {
            p.tau_max = t;
        }
        if let Some(r) = self.noise_region {
            p.noise_region = r;
        }
        p
    }

    fn is_set(&self) -> bool {
        self.threshold_percentile.is_some() || self.tau_max.is_some() || self.noise_region.is_some()
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene JSON files.
    #[arg(required = true)]
    scenes: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    scale: ScaleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample complex noise variance.
    #[arg(long, default_value_t = 1e-4)]
    noise_power: f64,
    /// Snapshot rate in Hz.
    #[arg(long)]
    snapshot_rate: Option<f64>,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(required = true)]
    cirs: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    scale: ScaleArgs,
    #[command(flatten)]
    denoise: DenoiseFlags,
}

#[derive(Args)]
struct GainsArgs {
    /// CIR containers; each is de-noised first (a no-op on de-noised input).
    #[arg(required = true)]
    cirs: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Configuration such as `fwd4`, `bwd2` or `III,VII`; repeatable.
    #[arg(short, long = "config", default_values_t = default_labels())]
    configs: Vec<String>,
    #[command(flatten)]
    scale: ScaleArgs,
    #[command(flatten)]
    denoise: DenoiseFlags,
}

#[derive(Args)]
struct TableArgs {
    /// Gain grid files; one must be the 8-panel reference.
    #[arg(required = true)]
    grids: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Divide the volatility standard deviation by I - 1.
    #[arg(long)]
    sample_std: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long = "scene")]
    scenes: Vec<PathBuf>,
    #[arg(long)]
    random_scenes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    desk_scale: bool,
    #[arg(long, value_delimiter = ',')]
    panel_counts: Option<Vec<usize>>,
    /// Panel counts whose backward variant is evaluated; `none` for none.
    #[arg(long, value_parser = parse_counts)]
    rear_headband: Option<Counts>,
    #[arg(long = "extra-config")]
    extra_configs: Vec<String>,
    #[arg(long)]
    noise_power: Option<f64>,
    #[arg(long)]
    snapshot_rate: Option<f64>,
    #[arg(long)]
    write_cirs: bool,
    #[arg(long)]
    sample_std: bool,
    #[command(flatten)]
    denoise: DenoiseFlags,
}

#[derive(Clone)]
struct Counts(Vec<usize>);

fn default_labels() -> Vec<String> {
    (1..=8).map(|p| format!("fwd{p}")).collect()
}

fn parse_interval(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn parse_counts(s: &str) -> std::result::Result<Counts, String> {
    if s.eq_ignore_ascii_case("none") || s.is_empty() {
        return Ok(Counts(Vec::new()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Counts)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Denoise(a) => denoise_cmd(a),
        Command::Gains(a) => gains(a),
        Command::Metrics(a) => tables(a, metric_tables),
        Command::Report(a) => tables(a, figure_tables),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn settings(scale: &ScaleArgs) -> RenderSettings {
    if scale.desk_scale {
        RenderSettings::desk()
    } else {
        RenderSettings::default()
    }
}

fn denoise_params(scale: &ScaleArgs, flags: &DenoiseFlags) -> DenoiseParams {
    flags.apply(if scale.desk_scale {
        DenoiseParams::desk()
    } else {
        DenoiseParams::default()
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_tables(dir: &Path, tables: &[Table]) -> Result<()> {
    for t in tables {
        t.write_to(dir)?;
        println!("{}", dir.join(t.name).display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut mobility = MobilityPattern::default();
    if let Some(r) = a.snapshot_rate {
        mobility.snapshot_rate_hz = r;
    }
    let settings = settings(&a.scale);
    let scenes = a
        .scenes
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Scene::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out)?;
    for (j, scene) in scenes.iter().enumerate() {
        let cirs = synthesize_measurement(scene, &mobility, &settings, a.noise_power, scene_seed(a.seed, j))?;
        for cir in &cirs {
            let path = a.out.join(cir_file_name(&cir.key));
            write_cir(&path, cir)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn load_cirs(paths: &[PathBuf]) -> Result<Vec<CirSnapshot>> {
    paths
        .iter()
        .map(|p| read_cir(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn denoise_cmd(a: DenoiseArgs) -> Result<()> {
    let params = denoise_params(&a.scale, &a.denoise);
    let cirs = load_cirs(&a.cirs)?;
    create_dir(&a.out)?;
    let mut reports = Vec::with_capacity(cirs.len());
    for cir in &cirs {
        let (clean, report) = denoise(cir, &params)?;
        let path = a.out.join(cir_file_name(&clean.key));
        write_cir(&path, &clean)?;
        println!("{}", path.display());
        reports.push(report);
    }
    write_tables(&a.out, &[denoise_table(&reports)])
}

fn gains(a: GainsArgs) -> Result<()> {
    let params = denoise_params(&a.scale, &a.denoise);
    let configs = a
        .configs
        .iter()
        .map(|l| l.parse::<PanelConfig>().with_context(|| format!("configuration {l:?}")))
        .collect::<Result<Vec<_>>>()?;
    let cirs = load_cirs(&a.cirs)?;
    let (grids, reports) = compute_grids(&cirs, &configs, &params)?;
    create_dir(&a.out)?;
    for g in &grids {
        let path = a.out.join(grid_file_name(&g.config));
        write_grid(&path, g)?;
        println!("{}", path.display());
    }
    write_tables(&a.out, &[denoise_table(&reports)])
}

fn tables(a: TableArgs, make: fn(&[EigenGainGrid], MetricOptions) -> hmd_channel::Result<Vec<Table>>) -> Result<()> {
    let grids = a
        .grids
        .iter()
        .map(|p| read_grid(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let opts = MetricOptions {
        std_convention: if a.sample_std {
            StdConvention::Sample
        } else {
            StdConvention::Population
        },
    };
    let tables = make(&grids, opts)?;
    create_dir(&a.out)?;
    write_tables(&a.out, &tables)
}

/// Defaults, then the config file, then flags.
fn resolve_run_config(a: &PipelineArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("[config] {}", p.display()))?,
        None => RunConfig::default(),
    };
    if !a.scenes.is_empty() {
        cfg.scenes = a.scenes.clone();
    }
    if let Some(n) = a.random_scenes {
        cfg.random_scenes = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if a.desk_scale {
        cfg.desk_scale = true;
    }
    if let Some(p) = &a.panel_counts {
        cfg.panel_counts = p.clone();
    }
    if let Some(Counts(r)) = &a.rear_headband {
        cfg.rear_headband = r.clone();
    }
    for l in &a.extra_configs {
        cfg.extra_configs
            .push(l.parse().with_context(|| format!("configuration {l:?}"))?);
    }
    if let Some(n) = a.noise_power {
        cfg.noise_power = n;
    }
    if let Some(r) = a.snapshot_rate {
        cfg.mobility.snapshot_rate_hz = r;
    }
    if a.write_cirs {
        cfg.write_cirs = true;
    }
    if a.sample_std {
        cfg.sample_std = true;
    }
    if a.denoise.is_set() {
        cfg.denoise = Some(a.denoise.apply(cfg.denoise_params()));
    }
    if cfg.scenes.is_empty() && cfg.random_scenes == 0 {
        bail!("[config] nothing to run: pass --scene, --random-scenes or a config file");
    }
    Ok(cfg)
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let cfg = resolve_run_config(&a)?;
    let summary = run_pipeline(&cfg)?;
    for f in &summary.files {
        println!("{}", f.display());
    }
    eprintln!(
        "{} scene(s) x {} snapshot(s), {} configuration(s) -> {}",
        summary.n_scenes,
        summary.n_snapshots,
        summary.configs.len(),
        cfg.output_dir.display()
    );
    Ok(())
}
