//! `criqa` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.
//! Failures print a single `criqa: error[<kind>]: <message>` line on stderr.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use criqa_core::datagen::{generate_dataset, ingest_external_renders, LoadedManifest};
use criqa_core::eval::{
    ablate_references, checkpoint_id, evaluate_scenes, export_attention, rank_scenes, render_report, score_image, EvalReport,
};
use criqa_core::image::ImageGrid;
use criqa_core::model::load_model;
use criqa_core::pfm::{read_pfm, write_pfm};
use criqa_core::train::{load_scenes, train, TrainData, TrainOptions};

pub use config::{resolve, ConfigError, RunConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "criqa", version, about = "Cross-reference image quality assessment")]
pub struct Cli {
    /// JSON configuration document.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `train.learning_rate=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker bound for parallel stages.
    #[arg(long, env = "CRIQA_WORKERS", global = true)]
    pub workers: Option<usize>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-view dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a dataset from external renders, ground truths and references.
    Ingest {
        #[arg(long)]
        renders: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scoring model.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/latest`.
        #[arg(long)]
        resume: bool,
        /// Stop after this many steps in this invocation.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Score one query image against reference views.
    Score {
        #[command(flatten)]
        input: QueryArgs,
        /// Output PFM path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score with real and with zeroed references.
    Ablate {
        #[command(flatten)]
        input: QueryArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-reference attention heatmaps for one query patch.
    Attn {
        #[command(flatten)]
        input: QueryArgs,
        /// Query patch as `row,col`.
        #[arg(long, value_parser = parse_patch)]
        patch: (usize, usize),
        /// Decoder layer; defaults to the last.
        #[arg(long)]
        layer: Option<usize>,
        /// Head; heads are averaged when omitted.
        #[arg(long)]
        head: Option<usize>,
        #[arg(long, default_value = "query")]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render tables and overlays from an evaluation directory.
    Report {
        /// Directory written by `eval`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub refs: Vec<PathBuf>,
    #[arg(long)]
    pub ckpt: PathBuf,
}

fn parse_patch(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    Ok((
        r.trim().parse().map_err(|e| format!("row: {e}"))?,
        c.trim().parse().map_err(|e| format!("col: {e}"))?,
    ))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<criqa_core::Error> for Failure {
    fn from(e: criqa_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("io error on {}: {e}", path.display()))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("criqa: error[config]: {}", one_line(&m));
            EXIT_CONFIG
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("criqa: error[runtime]: {}", one_line(&m));
            EXIT_RUNTIME
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(cli.config.as_deref(), &cli.overrides, cli.seed).map_err(|e| Failure::Config(e.0))?;
    let workers = workers(cli);
    let resolved = serde_json::to_string(&cfg).expect("config serialises");
    log::info!("resolved config: {resolved}");
    log::info!("seed: data {} train {}; workers {workers}", cfg.datagen.global_seed, cfg.train.seed);

    match &cli.command {
        Command::GenData { out } => {
            let m = generate_dataset(&cfg.datagen, out, workers)?;
            println!("{} scenes, {} records -> {}", m.scenes.len(), m.record_count(), out.join("manifest.json").display());
        }
        Command::Ingest { renders, gt, refs, out } => {
            let rep = ingest_external_renders(renders, gt, refs, &cfg.ssim, out)?;
            for s in &rep.skipped {
                log::warn!("skipped {s:?}");
            }
            println!("{} records ingested, {} skipped", rep.manifest.record_count(), rep.skipped.len());
        }
        Command::Train { manifest, out, resume, stop_after } => {
            let m = LoadedManifest::load(manifest)?;
            let t = &cfg.train;
            let data = TrainData::load(&m, t.n_ref, t.crop_size, workers)?;
            fs::create_dir_all(out).map_err(|e| io_fail(out, e))?;
            let path = out.join("config.json");
            fs::write(&path, serde_json::to_string_pretty(&cfg).expect("config serialises"))
                .map_err(|e| io_fail(&path, e))?;
            let opts = TrainOptions {
                workers,
                resume: *resume,
                stop_after: *stop_after,
            };
            let s = train(&data, t, out, &opts)?;
            let loss = s.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6}"));
            println!("{} steps, final loss {loss} -> {}", s.steps_completed, s.checkpoint.display());
        }
        Command::Score { input, out } => {
            let (model, query, refs) = load_inputs(input)?;
            let s = score_image(&model, &query, &refs)?;
            write_pfm(&s.map, out)?;
            println!("{:.6}", s.mean);
        }
        Command::Eval { manifest, ckpt, out } => {
            let model = load_model(ckpt, None)?;
            let m = LoadedManifest::load(manifest)?;
            let scenes = load_scenes(&m, model.config().n_ref + 1, workers)?;
            let config = serde_json::to_value(&cfg).expect("config serialises");
            let ev = evaluate_scenes(&model, &scenes, config, &checkpoint_id(&model), workers)?;
            let maps_dir = out.join("maps");
            fs::create_dir_all(&maps_dir).map_err(|e| io_fail(&maps_dir, e))?;
            for (id, map) in &ev.maps {
                write_pfm(map, maps_dir.join(format!("{}.pfm", file_stem(id))))?;
            }
            let files = render_report(&ev.report, out, &ev.maps)?;
            println!(
                "pearson {:.4} spearman {:.4} -> {}",
                ev.report.pearson_cross_vs_ssim,
                ev.report.spearman_rank_corr,
                files.json.display()
            );
        }
        Command::Ablate { input, out } => {
            let (model, query, refs) = load_inputs(input)?;
            let a = ablate_references(&model, &query, &refs)?;
            fs::create_dir_all(out).map_err(|e| io_fail(out, e))?;
            write_pfm(&a.map_on, out.join("with_refs.pfm"))?;
            write_pfm(&a.map_off, out.join("zeroed_refs.pfm"))?;
            let summary = serde_json::json!({
                "mean_on": a.mean_on,
                "mean_off": a.mean_off,
                "l1_delta": a.l1_delta,
            });
            let path = out.join("ablation.json");
            fs::write(&path, serde_json::to_string_pretty(&summary).expect("json")).map_err(|e| io_fail(&path, e))?;
            println!("mean with refs {:.6}, zeroed {:.6}, l1 {:.6}", a.mean_on, a.mean_off, a.l1_delta);
        }
        Command::Attn { input, patch, layer, head, id, out } => {
            let (model, query, refs) = load_inputs(input)?;
            let idx = export_attention(&model, id, &query, &refs, *patch, *layer, *head, out)?;
            for e in &idx.entries {
                println!("ref {} mass {:.6}", e.ref_index, e.mass);
            }
        }
        Command::Report { input, out } => {
            let path = input.join("report.json");
            let text = fs::read_to_string(&path).map_err(|e| io_fail(&path, e))?;
            let report: EvalReport = serde_json::from_str(&text)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            let mut maps = Vec::new();
            for s in &report.scenes {
                for r in &s.per_image {
                    let p = input.join("maps").join(format!("{}.pfm", file_stem(&r.image_id)));
                    if p.is_file() {
                        maps.push((r.image_id.clone(), read_pfm(&p)?));
                    }
                }
            }
            let files = render_report(&report, out, &maps)?;
            match rank_scenes(&report) {
                Ok(t) => {
                    let path = out.join("ranking.csv");
                    let mut text = String::from("scene_id,ssim,cross,ssim_rank,cross_rank\n");
                    for r in &t.rows {
                        text.push_str(&format!("{},{},{},{},{}\n", r.scene_id, r.ssim, r.cross, r.ssim_rank, r.cross_rank));
                    }
                    fs::write(&path, text).map_err(|e| io_fail(&path, e))?;
                    println!("rank correlation {:.4}", t.spearman);
                }
                Err(e) => log::warn!("no ranking table: {e}"),
            }
            println!("{} overlays -> {}", files.overlays.len(), out.display());
        }
    }
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn load_inputs(a: &QueryArgs) -> Result<(criqa_core::model::CrossRefModel<f32>, ImageGrid, Vec<ImageGrid>), Failure> {
    let model = load_model(&a.ckpt, None)?;
    let query = ImageGrid::load_png(&a.query)?;
    let refs = a.refs.iter().map(ImageGrid::load_png).collect::<criqa_core::Result<Vec<_>>>()?;
    Ok((model, query, refs))
}
