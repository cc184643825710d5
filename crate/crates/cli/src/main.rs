use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use voxsel::geometry::read_cameras;
use voxsel::pipeline::{evaluate_run, read_metrics, run_baseline, run_pipeline, verify_manifest, BaselineKind, PipelineConfig};
use voxsel::synth::{labels_from_bytes, make_scene, write_scene, SceneSpec};
use voxsel::volume::{read_volume, render_view};
use voxsel_cli::metrics_table;
use voxsel_cli::server::{router, AppState};

/// Scribble-driven 3D object selection in plane-structured voxel volumes.
#[derive(Debug, Parser)]
#[command(name = "voxsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth.
    Synth {
        /// Seed of the default desk scene.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene description (TOML) to use instead of the desk scene.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a config file.
    Segment {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the configured worker thread count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render a volume (optionally restricted to a selection) into views.
    Render {
        /// Volume file, e.g. a run's segmentation.vxv.
        #[arg(long)]
        volume: PathBuf,
        /// Label sidecar restricting the render to selected voxels.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Camera file; one image per camera.
        #[arg(long)]
        cameras: PathBuf,
        /// Output directory for view_NN.png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from a run directory's saved artifacts.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Fail unless the recomputed metrics equal metrics.tsv bit for bit.
        #[arg(long)]
        check: bool,
    },
    /// Run a baseline instead of the full method.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Override the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the interactive HTTP API (no authentication; local use only).
    Serve {
        /// Config supplying default training and graph-cut settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Graphcut3d,
    Graphcut2d,
}

fn load_config(path: &Path, output: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { seed, spec, out } => {
            let spec = match spec {
                Some(p) => SceneSpec::from_toml(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?,
                None => SceneSpec::desk(seed),
            };
            let scene = make_scene(&spec)?;
            write_scene(&scene, &out)?;
            println!("wrote {} views to {}", scene.views.len(), out.display());
        }
        Command::Segment { config, output, workers } => {
            let mut cfg = load_config(&config, output)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let out = run_pipeline(&cfg)?;
            print!("{}", metrics_table(&out.records));
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Render { volume, labels, cameras, out } => {
            let vol = read_volume(&volume)?;
            let sel = labels
                .map(|p| -> Result<Vec<bool>> { Ok(labels_from_bytes(&std::fs::read(&p).with_context(|| p.display().to_string())?)?) })
                .transpose()?;
            let cams = read_cameras(&cameras)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            for (i, cam) in cams.iter().enumerate() {
                let r = render_view(&vol, cam, sel.as_deref())?;
                r.rgb.to_png(&out.join(format!("view_{i:02}.png")))?;
            }
            println!("rendered {} views to {}", cams.len(), out.display());
        }
        Command::Eval { run, check } => {
            verify_manifest(&run)?;
            let records = evaluate_run(&run)?;
            print!("{}", metrics_table(&records));
            if check {
                let stored = read_metrics(&run)?;
                let same = stored.len() == records.len()
                    && stored.iter().zip(&records).all(|(a, b)| {
                        a.scene == b.scene && a.metric == b.metric && a.value.to_bits() == b.value.to_bits()
                    });
                if !same {
                    bail!("[eval] recomputed metrics differ from metrics.tsv");
                }
                println!("metrics match metrics.tsv");
            }
        }
        Command::Baseline { config, kind, output } => {
            let cfg = load_config(&config, output)?;
            let kind = match kind {
                Kind::Graphcut3d => BaselineKind::Graphcut3d,
                Kind::Graphcut2d => BaselineKind::Graphcut2d,
            };
            let records = run_baseline(&cfg, kind)?;
            print!("{}", metrics_table(&records));
        }
        Command::Serve { config, addr } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            let app = router(AppState::new(cfg));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("listening on http://{addr}");
                eprintln!("listening on http://{addr} (no authentication)");
                axum::serve(listener, app).await
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
