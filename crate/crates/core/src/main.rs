use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pneumoseg::data::{generate_synthetic, load_index, SyntheticConfig};
use pneumoseg::imaging;
use pneumoseg::infer::{self, DEFAULT_MIN_AREA, DEFAULT_THETA};
use pneumoseg::model::{load_checkpoint, ModelConfig, UNet};
use pneumoseg::service::{self, ServiceConfig};
use pneumoseg::train::{self, TrainConfig};
use pneumoseg::{rle, Error, Result};

#[derive(Parser)]
#[command(name = "pneumoseg", version, about = "Binary segmentation training, inference and review service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ellipse dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.3)]
        empty_fraction: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint against a labelled index.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f32,
        #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
        min_area: usize,
        /// Emit JSON instead of the plain-text report.
        #[arg(long)]
        json: bool,
    },
    /// Segment one PNG and print its RLE.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f32,
        #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
        min_area: usize,
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long)]
        prob_out: Option<PathBuf>,
        #[arg(long)]
        overlay_out: Option<PathBuf>,
    },
    /// Print the RLE of a mask PNG (pixels >= 128 are foreground).
    Encode {
        #[arg(long)]
        mask: PathBuf,
    },
    /// Render an RLE string to a mask PNG.
    Decode {
        #[arg(long)]
        rle: String,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP review service.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, env = "PSEG_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "PSEG_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "PSEG_DATA_DIR", default_value = "pneumoseg-data")]
        data_dir: PathBuf,
    },
}

#[derive(Args)]
struct DatasetArgs {
    /// `ImageId,EncodedPixels` CSV.
    #[arg(long)]
    csv: PathBuf,
    /// Directory holding `<ImageId>.png`.
    #[arg(long)]
    images: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    image_size: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    base_channels: usize,
    #[arg(long, default_value_t = 2)]
    blocks_per_stage: usize,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f32,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f32,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Initialise the encoder from this checkpoint.
    #[arg(long)]
    init_encoder: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_dataset(args: &DatasetArgs, image_size: usize) -> Result<pneumoseg::data::DatasetIndex> {
    let (index, report) = load_index(&read(&args.csv)?, &args.images, image_size)?;
    for id in &report.missing {
        tracing::warn!(%id, "image file missing, skipped");
    }
    for id in &report.corrupt {
        tracing::warn!(%id, "image file corrupt, skipped");
    }
    Ok(index)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let mut model = UNet::build(ModelConfig {
        depth: a.depth,
        base_channels: a.base_channels,
        blocks_per_stage: a.blocks_per_stage,
        image_size: a.image_size,
        seed: a.seed,
        ..ModelConfig::default()
    })?;
    if let Some(path) = &a.init_encoder {
        let ckpt = pneumoseg::model::Checkpoint::from_bytes(&read(path)?)?;
        let n = ckpt.load_encoder_into(&mut model)?;
        tracing::info!(arrays = n, "encoder initialised");
    }
    let index = load_dataset(&a.dataset, a.image_size)?;
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        val_fraction: a.val_fraction,
        theta: a.theta,
        min_area: a.min_area,
        augment: a.augment,
        seed: a.seed,
        max_steps: a.max_steps,
    };
    let outcome = train::train(model, &index, &cfg)?;
    write(&a.out, &outcome.checkpoint.to_bytes())?;
    if let Some(path) = &a.history {
        write(path, outcome.history.to_csv().as_bytes())?;
    }
    println!(
        "best_epoch={} best_val_loss={} epochs={} steps={}",
        outcome.history.best_epoch,
        outcome.history.best_val_loss,
        outcome.history.epochs.len(),
        outcome.history.steps
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            n,
            size,
            empty_fraction,
            noise,
            seed,
        } => {
            let ds = generate_synthetic(
                &SyntheticConfig {
                    n_samples: n,
                    image_size: size,
                    empty_fraction,
                    noise_std: noise,
                    seed,
                },
                &out,
            )?;
            println!("{} {}", ds.csv_path.display(), ds.image_dir.display());
        }
        Command::Train(args) => run_train(args)?,
        Command::Eval {
            checkpoint,
            dataset,
            theta,
            min_area,
            json,
        } => {
            let model = load_checkpoint(&read(&checkpoint)?)?;
            let index = load_dataset(&dataset, model.config().image_size)?;
            let report = infer::evaluate(&model, &index, theta, min_area)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Predict {
            checkpoint,
            image,
            theta,
            min_area,
            mask_out,
            prob_out,
            overlay_out,
        } => {
            let model = load_checkpoint(&read(&checkpoint)?)?;
            let pred = infer::predict(&model, &read(&image)?, theta, min_area)?;
            if let Some(p) = mask_out {
                write(&p, &imaging::encode_mask_png(&pred.mask)?)?;
            }
            if let Some(p) = prob_out {
                write(&p, &imaging::encode_gray_png(pred.prob.width, pred.prob.height, &pred.prob.quantized())?)?;
            }
            if let Some(p) = overlay_out {
                write(&p, &imaging::encode_rgb_png(&pred.overlay)?)?;
            }
            println!("{}", pred.rle);
        }
        Command::Encode { mask } => {
            let m = imaging::decode_mask_png(&read(&mask)?)?;
            println!("{}", rle::encode(&m));
        }
        Command::Decode {
            rle: text,
            width,
            height,
            out,
        } => {
            let m = rle::decode(&text, width, height)?;
            write(&out, &imaging::encode_mask_png(&m)?)?;
        }
        Command::Serve {
            checkpoint,
            host,
            port,
            data_dir,
        } => {
            let model = load_checkpoint(&read(&checkpoint)?)?;
            let cfg = ServiceConfig { host, port, data_dir };
            let rt = tokio::runtime::Runtime::new().map_err(|source| Error::Io {
                path: PathBuf::from("tokio runtime"),
                source,
            })?;
            rt.block_on(service::serve(
                model,
                &cfg,
                |addr| {
                    println!("listening on http://{addr}");
                    let _ = std::io::stdout().flush();
                },
                async {
                    let _ = tokio::signal::ctrl_c().await;
                },
            ))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
