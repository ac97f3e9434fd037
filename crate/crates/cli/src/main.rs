use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toonwarp_core::dataset::{load_png, save_png, write_dataset, Split};
use toonwarp_core::fit::write_residual_csv;
use toonwarp_core::perceiver::{
    chain_loss, infer, load_checkpoint, save_checkpoint, write_history_csv, TinyPerceiver,
    TrainConfig,
};
use toonwarp_core::{
    fit_field, load_dataset, load_field, save_field, scale_field, synth_dataset, upsample,
    visualize_field, warp, Error, FitConfig, ImageBuffer, LossWeights, Result, SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "toonwarp",
    version,
    about = "Fit, apply and learn coarse face warp fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the warp field mapping an input onto its cartoon.
    Fit {
        input: PathBuf,
        toon: PathBuf,
        /// Output field (ATF1); the residual history goes next to it as CSV.
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Warp an image with a stored field scaled by each alpha.
    Warp(WarpArgs),
    /// Apply a field computed on one image to another, e.g. a stylized copy.
    Transfer(WarpArgs),
    /// Train a field predictor on a dataset directory.
    Train {
        dataset: PathBuf,
        /// Output checkpoint; the loss history goes next to it as CSV.
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        no_flip: bool,
        #[arg(long)]
        no_jitter: bool,
    },
    /// Score a model on a dataset and write comparison panels.
    Eval {
        dataset: PathBuf,
        out_dir: PathBuf,
        /// Checkpoint to evaluate; the untrained reference model when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Write a synthetic paired dataset.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// smooth-random, bulge or translation
        #[arg(long, default_value = "bulge")]
        style: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 4.0)]
        magnitude: f64,
    },
    /// Render a field as a color wheel image.
    Viz {
        field: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
}

#[derive(Args)]
struct WarpArgs {
    input: PathBuf,
    field: PathBuf,
    out: PathBuf,
    /// One value or a comma-separated sweep such as 1,1.5,2.
    #[arg(long, default_value = "1")]
    alpha: String,
    #[arg(long, default_value_t = 256)]
    size: usize,
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.7)]
    lambda2: f64,
    #[arg(long, default_value_t = 1e-6)]
    lambda3: f64,
}

impl WeightArgs {
    fn weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.lambda1, self.lambda2, self.lambda3)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "error: invalid-argument: {}",
                first.trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TOONWARP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "TOONWARP_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            input,
            toon,
            out,
            iters,
            lr,
            size,
        } => cmd_fit(&input, &toon, &out, iters, lr, size),
        Command::Warp(args) | Command::Transfer(args) => cmd_warp(&args),
        Command::Train {
            dataset,
            out,
            epochs,
            batch,
            lr,
            seed,
            size,
            weights,
            no_flip,
            no_jitter,
        } => {
            let mut cfg = TrainConfig {
                epochs,
                batch_size: batch,
                weights: weights.weights()?,
                seed,
                ..TrainConfig::default()
            };
            cfg.adam.lr = lr;
            cfg.augment.flip = !no_flip;
            cfg.augment.jitter = !no_jitter;
            cmd_train(&dataset, &out, size, &cfg)
        }
        Command::Eval {
            dataset,
            out_dir,
            model,
            alpha,
            size,
            weights,
        } => cmd_eval(
            &dataset,
            &out_dir,
            model.as_deref(),
            alpha,
            size,
            &weights.weights()?,
        ),
        Command::Synth {
            out_dir,
            count,
            style,
            seed,
            size,
            grid,
            magnitude,
        } => {
            let cfg = SynthConfig {
                resolution: size,
                grid,
                magnitude,
            };
            let samples = synth_dataset(seed, count, style.parse()?, &cfg)?;
            write_dataset(&out_dir, &samples, Split::Train)?;
            println!("wrote {} samples to {}", samples.len(), out_dir.display());
            Ok(())
        }
        Command::Viz { field, out, size } => {
            let field = load_field(&field)?;
            save_png(&visualize_field(&upsample(&field, size, size)?), &out)
        }
    }
}

fn load_resized(path: &Path, size: usize) -> Result<ImageBuffer> {
    load_png(path)?.resize(size, size)
}

fn cmd_fit(
    input: &Path,
    toon: &Path,
    out: &Path,
    iters: usize,
    lr: f64,
    size: usize,
) -> Result<()> {
    let x_in = load_resized(input, size)?;
    let x_toon = load_resized(toon, size)?;
    let cfg = FitConfig {
        iterations: iters,
        lr,
        ..FitConfig::default()
    };
    let fit = fit_field(&x_in, &x_toon, &cfg)?;
    save_field(&fit.field, out)?;
    write_residual_csv(out.with_extension("csv"), &fit.history)?;
    println!(
        "residual {:.6} -> {:.6} after {} iterations",
        fit.initial_residual(),
        fit.best_residual,
        fit.history.len() - 1
    );
    Ok(())
}

fn parse_alphas(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("bad alpha `{part}`")))
        })
        .collect()
}

/// `out.png` for a single alpha, `out_alpha1.5.png` and so on for a sweep.
fn alpha_path(out: &Path, alpha: f64, sweep: bool) -> PathBuf {
    if !sweep {
        return out.to_path_buf();
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "png".into());
    out.with_file_name(format!("{stem}_alpha{alpha}.{ext}"))
}

fn cmd_warp(args: &WarpArgs) -> Result<()> {
    let alphas = parse_alphas(&args.alpha)?;
    let image = load_resized(&args.input, args.size)?;
    let field = load_field(&args.field)?;
    for &alpha in &alphas {
        let dense = upsample(&scale_field(&field, alpha)?, args.size, args.size)?;
        let path = alpha_path(&args.out, alpha, alphas.len() > 1);
        save_png(&warp(&image, &dense)?, &path)?;
        println!("alpha {alpha}: {}", path.display());
    }
    Ok(())
}

fn cmd_train(dataset: &Path, out: &Path, size: usize, cfg: &TrainConfig) -> Result<()> {
    let samples = load_dataset(dataset, size)?;
    let outcome = toonwarp_core::train(&TinyPerceiver::reference(cfg.seed), &samples, cfg)?;
    save_checkpoint(&outcome.model, out)?;
    write_history_csv(out.with_extension("csv"), &outcome.history)?;
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        println!(
            "total loss {:.6} -> {:.6} over {} epochs",
            first.report.total,
            last.report.total,
            outcome.history.len()
        );
    }
    Ok(())
}

fn cmd_eval(
    dataset: &Path,
    out_dir: &Path,
    model: Option<&Path>,
    alpha: f64,
    size: usize,
    weights: &LossWeights,
) -> Result<()> {
    let samples = load_dataset(dataset, size)?;
    let model = match model {
        Some(path) => load_checkpoint(path)?,
        None => TinyPerceiver::reference(0),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut csv = String::from("id,recon,warp,reg,total\n");
    for s in &samples {
        let r = chain_loss(&model, s, weights)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.id, r.recon, r.warp, r.reg, r.total
        ));
        let cartoon = infer(&model, &s.x_in, alpha)?.cartoon;
        save_png(
            &panel(&[&s.x_in, &cartoon, &s.x_toon])?,
            out_dir.join(format!("{}.png", s.id)),
        )?;
    }
    let path = out_dir.join("losses.csv");
    std::fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
    println!("evaluated {} samples", samples.len());
    Ok(())
}

/// Places equally sized images side by side.
fn panel(images: &[&ImageBuffer]) -> Result<ImageBuffer> {
    let (h, w) = images[0].dims();
    ImageBuffer::from_fn(h, w * images.len(), |i, j| images[j / w].pixel(i, j % w))
}
