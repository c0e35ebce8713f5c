//! Batch front end: dataset synthesis, training, out-of-sample embedding,
//! recognition evaluation, and self-verification.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssimm_core::distortion::{synth_dataset, write_dataset, DistortionKind};
use ssimm_core::image::GrayImage;
use ssimm_core::kernels::KernelKind;
use ssimm_core::model::{ExperimentConfig, Method, TrainedModel};
use ssimm_core::pipeline::{
    embed_images, evaluate_oos, evaluate_training, train, write_report, EmbeddedSet,
    LabeledDataset,
};
use ssimm_core::verify::run_verify;
use ssimm_core::Error;

#[derive(Parser)]
#[command(
    name = "ssimm",
    about = "SSIM-driven image structure manifold learning",
    version
)]
struct Cli {
    /// Worker thread cap (also via SSIMM_THREADS); defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an iso-MSE distortion corpus from a base image.
    Synth(SynthArgs),
    /// Train an embedding model on a synthesized corpus.
    Train(TrainArgs),
    /// Embed out-of-sample images with a trained model.
    Embed(EmbedArgs),
    /// Evaluate distortion recognition (leave-one-out, or on embeddings).
    Eval(EvalArgs),
    /// Run the gradient and projection self-check suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Base image (binary 8-bit PGM).
    #[arg(long)]
    image: PathBuf,
    /// Output directory for PGM files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// MSE levels: "start:end:step" (inclusive) or a comma list.
    #[arg(long, default_value = "45:900:45")]
    levels: String,
    /// Distortion kinds (comma list of names), default all six.
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Synthesized corpus directory (manifest.json + PGMs).
    #[arg(long)]
    data: PathBuf,
    /// llise | kllise | lle | klle
    #[arg(long)]
    method: String,
    /// linear | polynomial | rbf | sigmoid
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// Kernel scale; defaults to 1/q (block methods) or 1/d (whole image).
    #[arg(long)]
    gamma: Option<f64>,
    /// Block length in pixels.
    #[arg(long, default_value_t = 64)]
    q: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Neighbor count.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Reconstruction-stage penalty override.
    #[arg(long)]
    recon_rho: Option<f64>,
    /// Reconstruction-stage learning rate override.
    #[arg(long)]
    recon_eta: Option<f64>,
    /// Embedding-stage penalty override.
    #[arg(long)]
    embed_rho: Option<f64>,
    /// Embedding-stage learning rate override.
    #[arg(long)]
    embed_eta: Option<f64>,
    /// Iteration cap override for both solver stages.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Residual tolerance override for both solver stages.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model archive (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of images to embed (manifest.json + PGMs).
    #[arg(long)]
    images: PathBuf,
    /// Output embeddings file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Embeddings file from `embed`; when absent, runs leave-one-out on the
    /// training set.
    #[arg(long)]
    oos: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_levels(text: &str) -> Result<Vec<f64>, Error> {
    let parse_one = |s: &str| -> Result<f64, Error> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("bad MSE level '{s}'")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "levels range must be start:end:step, got '{text}'"
            )));
        }
        let (start, end, step) = (parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
        if step <= 0.0 || end < start {
            return Err(Error::InvalidParameter(format!(
                "degenerate levels range '{text}'"
            )));
        }
        let mut levels = Vec::new();
        let mut v = start;
        while v <= end + 1e-9 {
            levels.push(v);
            v += step;
        }
        Ok(levels)
    } else {
        text.split(',').map(parse_one).collect()
    }
}

fn parse_kinds(text: &str) -> Result<Vec<DistortionKind>, Error> {
    if text == "all" {
        return Ok(DistortionKind::ALL_DISTORTIONS.to_vec());
    }
    text.split(',')
        .map(|name| {
            DistortionKind::ALL_DISTORTIONS
                .iter()
                .copied()
                .find(|k| k.name() == name.trim())
                .ok_or_else(|| Error::InvalidParameter(format!("unknown distortion '{name}'")))
        })
        .collect()
}

fn parse_kernel(name: &str) -> Result<KernelKind, Error> {
    Ok(match name {
        "linear" => KernelKind::Linear,
        "polynomial" => KernelKind::Polynomial,
        "rbf" => KernelKind::Rbf,
        "sigmoid" => KernelKind::Sigmoid,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown kernel '{other}' (expected linear|polynomial|rbf|sigmoid)"
            )))
        }
    })
}

fn init_threads(cli_threads: Option<usize>) -> Result<(), Error> {
    let threads = cli_threads.or_else(|| {
        std::env::var("SSIMM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let base = GrayImage::read_pgm(&args.image)?;
    let levels = parse_levels(&args.levels)?;
    let kinds = parse_kinds(&args.kinds)?;
    eprintln!(
        "synth: {} kinds x {} levels from {}",
        kinds.len(),
        levels.len(),
        args.image.display()
    );
    let set = synth_dataset(&base, &levels, &kinds, args.seed)?;
    write_dataset(&args.out, &set)?;
    eprintln!("synth: wrote {} images to {}", set.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let dataset = LabeledDataset::load_dir(&args.data)?;
    let method = Method::parse(&args.method)?;
    let mut config = ExperimentConfig::for_method(method, args.q, args.p, args.k, args.seed);
    config.kernel_kind = parse_kernel(&args.kernel)?;
    config.gamma = args.gamma;
    if let Some(v) = args.recon_rho {
        config.recon.rho = v;
    }
    if let Some(v) = args.recon_eta {
        config.recon.eta = v;
    }
    if let Some(v) = args.embed_rho {
        config.embed.rho = v;
    }
    if let Some(v) = args.embed_eta {
        config.embed.eta = v;
    }
    if let Some(v) = args.max_iter {
        config.recon.max_iter = v;
        config.embed.max_iter = v;
    }
    if let Some(v) = args.tol {
        config.recon.tol = v;
        config.embed.tol = v;
    }
    eprintln!(
        "train: {} on {} images (q={}, p={}, k={})",
        method.name(),
        dataset.len(),
        config.q,
        config.p,
        config.k
    );
    let model = train(&dataset, &config)?;
    model.save(&args.out)?;
    eprintln!("train: model written to {}", args.out.display());
    Ok(())
}

fn cmd_embed(args: &EmbedArgs) -> Result<(), Error> {
    let model = TrainedModel::load(&args.model)?;
    let dataset = LabeledDataset::load_dir(&args.images)?;
    eprintln!(
        "embed: {} images through {} model",
        dataset.len(),
        model.config.method.name()
    );
    let set = embed_images(&model, &dataset)?;
    set.save(&args.out)?;
    eprintln!("embed: embeddings written to {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let model = TrainedModel::load(&args.model)?;
    let report = match &args.oos {
        Some(path) => {
            let set = EmbeddedSet::load(path)?;
            eprintln!("eval: {} out-of-sample images", set.entries.len());
            evaluate_oos(&model, &set)?
        }
        None => {
            eprintln!("eval: leave-one-out on {} training images", model.n());
            evaluate_training(&model)?
        }
    };
    write_report(&args.out, &report)?;
    eprintln!(
        "eval: image accuracy {:.4}; report in {}",
        report.image_accuracy,
        args.out.display()
    );
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, Error> {
    let report = run_verify(args.seed)?;
    for check in &report.checks {
        println!(
            "{}: {} (worst {:.3e}, tolerance {:.0e})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.worst,
            check.tolerance
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let outcome = match &cli.command {
        Command::Synth(args) => cmd_synth(args).map(|()| true),
        Command::Train(args) => cmd_train(args).map(|()| true),
        Command::Embed(args) => cmd_embed(args).map(|()| true),
        Command::Eval(args) => cmd_eval(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges_are_inclusive() {
        let levels = parse_levels("45:900:45").unwrap();
        assert_eq!(levels.len(), 20);
        assert_eq!(levels[0], 45.0);
        assert_eq!(levels[19], 900.0);
    }

    #[test]
    fn level_lists_parse() {
        assert_eq!(parse_levels("500").unwrap(), vec![500.0]);
        assert_eq!(parse_levels("45,90").unwrap(), vec![45.0, 90.0]);
        assert!(parse_levels("45:900").is_err());
        assert!(parse_levels("abc").is_err());
    }

    #[test]
    fn kinds_parse_by_name() {
        assert_eq!(parse_kinds("all").unwrap().len(), 6);
        let kinds = parse_kinds("gaussian_noise,jpeg_like").unwrap();
        assert_eq!(kinds, vec![DistortionKind::GaussianNoise, DistortionKind::JpegLike]);
        assert!(parse_kinds("sepia").is_err());
    }

    #[test]
    fn kernels_parse_by_name() {
        assert_eq!(parse_kernel("rbf").unwrap(), KernelKind::Rbf);
        assert!(parse_kernel("quadratic").is_err());
    }
}
