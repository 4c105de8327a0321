use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chartx::config::RunConfig;
use chartx::corpus::{build_dataset, ChartKind, Dataset, KindSelection, RgbImage};
use chartx::eval::{build_report, chart_id, load_ground_truth, load_predictions};
use chartx::infer::{extract, ExtractionResult, OraclePerception, Perception};
use chartx::model::NeuralPerception;
use chartx::par::{init_thread_pool, map_slice, Parallelism};
use chartx::train::{history_path, state_path, train_chart_model, train_type_model, write_losses, StateOptions};

mod selftest;

const CONFIG_HELP: &str = "JSON run configuration. Sections: generator, model (detector, anchors, \
branches), classifier, weights, schedule, inference. Missing keys take defaults (confidence \
threshold 0.8, NMS IoU 0.5, indicator tau 0.5 and k 10, 7 anchor ratios x 5 scales); unknown \
keys are rejected. `chartx selftest --print-config` shows every default.";

/// Chart data extraction: synthesize, train, extract and score.
#[derive(Parser, Debug)]
#[command(name = "chartx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an annotated synthetic chart dataset.
    Gen {
        #[arg(long, value_enum, default_value = "mixed")]
        kind: GenKind,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a bar or pie extractor, or the chart-type classifier.
    Train {
        #[arg(long, value_enum)]
        kind: TrainKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        /// Model checkpoint; the loss history goes next to it as `<stem>.history.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<stem>.state` if a previous run left one.
        #[arg(long)]
        resume: bool,
        /// Steps between trainer snapshots (0: only at the end).
        #[arg(long, default_value_t = 500)]
        checkpoint_every: usize,
        /// Print the loss every N steps (0: silent).
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Extract data from one chart image, or from every PNG in a directory.
    Infer {
        /// Directory holding type.ckpt, bar.ckpt and pie.ckpt.
        #[arg(long, required_unless_present = "oracle")]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        /// Result JSON, or an output directory when --image is a directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        /// Use ground-truth perception from this generated dataset instead of models.
        #[arg(long, value_name = "DATASET")]
        oracle: Option<PathBuf>,
    },
    /// Score predicted results against a generated dataset.
    Eval {
        /// Directory of result JSON files named after the chart images.
        #[arg(long)]
        pred: PathBuf,
        /// Generated dataset directory.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the built-in oracle and property checks.
    Selftest {
        /// Print the default configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    Bar,
    Pie,
    Mixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrainKind {
    Bar,
    Pie,
    Type,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            // Usage errors render with clap's own `error:` prefix on stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_thread_pool();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but reported failures.
fn run(cmd: Command) -> chartx::Result<bool> {
    match cmd {
        Command::Gen {
            kind,
            count,
            seed,
            config,
            out,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let kind = match kind {
                GenKind::Bar => KindSelection::Bar,
                GenKind::Pie => KindSelection::Pie,
                GenKind::Mixed => KindSelection::Mixed,
            };
            let m = build_dataset(&cfg.generator, kind, count, seed, &out, Parallelism::Parallel)?;
            println!("wrote {} charts to {}", m.entries.len(), out.display());
            Ok(true)
        }
        Command::Train {
            kind,
            data,
            config,
            out,
            resume,
            checkpoint_every,
            log_every,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let data = Dataset::open(&data)?;
            let log = |step: usize| log_every > 0 && step % log_every == 0;
            match kind {
                TrainKind::Type => {
                    let o = train_type_model(&data, cfg.classifier.clone(), &cfg.schedule, |step, loss| {
                        if log(step) {
                            println!("step {step} loss {loss:.5}");
                        }
                    })?;
                    o.model.save(&out)?;
                    write_losses(&history_path(&out), &o.losses)?;
                }
                TrainKind::Bar | TrainKind::Pie => {
                    let chart = if matches!(kind, TrainKind::Bar) { ChartKind::Bar } else { ChartKind::Pie };
                    let state = StateOptions {
                        path: state_path(&out),
                        every: checkpoint_every,
                        resume,
                    };
                    let o = train_chart_model(&data, chart, cfg.model, cfg.schedule, cfg.weights, &out, Some(&state), |r| {
                        if log(r.step) {
                            println!("step {} stage {} L_det {:.5} total {:.5}", r.step, r.stage, r.l_det, r.total);
                        }
                    })?;
                    if let Some(s) = o.stage1_end {
                        println!("stage 2 began at step {s}");
                    }
                }
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Infer {
            model_dir,
            image,
            out,
            config,
            oracle,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let images = if image.is_dir() { png_files(&image)? } else { vec![image.clone()] };
            let perception: Box<dyn Perception> = match (&oracle, &model_dir) {
                (Some(d), _) => Box::new(OracleSet::open(d)?),
                (None, Some(d)) => Box::new(NeuralPerception::load_dir(d, cfg.inference.clone())?),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let results = map_slice(&images, Parallelism::Parallel, |p| -> chartx::Result<ExtractionResult> {
                extract(perception.as_ref(), &RgbImage::load_png(p)?, &cfg.inference)
            });
            if image.is_dir() {
                std::fs::create_dir_all(&out).map_err(|e| chartx::Error::io(&out, e))?;
                let mut failed = 0;
                for (p, r) in images.iter().zip(results) {
                    let id = chart_id(&p.to_string_lossy());
                    match r {
                        Ok(r) => r.save(&out.join(format!("{id}.json")))?,
                        Err(e) => {
                            failed += 1;
                            eprintln!("error: {}: {e}", p.display());
                        }
                    }
                }
                println!("extracted {} of {} images into {}", images.len() - failed, images.len(), out.display());
                Ok(failed == 0)
            } else {
                let r = results.into_iter().next().expect("one image")?;
                r.save(&out)?;
                println!("wrote {}", out.display());
                Ok(true)
            }
        }
        Command::Eval { pred, gt, report } => {
            let preds = load_predictions(&pred)?;
            let gts = load_ground_truth(&gt)?;
            let r = build_report(&preds, &gts, Parallelism::Parallel)?;
            r.save(&report)?;
            print!("{}", r.to_table());
            Ok(true)
        }
        Command::Selftest { print_config } => {
            if print_config {
                print!("{}", RunConfig::default().to_json());
                return Ok(true);
            }
            Ok(selftest::run())
        }
    }
}

fn png_files(dir: &Path) -> chartx::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| chartx::Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    v.sort();
    Ok(v)
}

/// Ground-truth perception looked up by image content.
struct OracleSet {
    by_pixels: BTreeMap<Vec<u8>, OraclePerception>,
}

impl OracleSet {
    fn open(dir: &Path) -> chartx::Result<Self> {
        let data = Dataset::open(dir)?;
        let mut by_pixels = BTreeMap::new();
        for (i, a) in data.annotations.iter().enumerate() {
            by_pixels.insert(data.image(i)?.data, OraclePerception::new(a.clone()));
        }
        Ok(OracleSet { by_pixels })
    }
}

impl Perception for OracleSet {
    fn perceive(&self, image: &RgbImage) -> chartx::Result<chartx::infer::Percept> {
        self.by_pixels
            .get(&image.data)
            .ok_or_else(|| chartx::Error::Input("image is not part of the oracle dataset".into()))?
            .perceive(image)
    }
}
