use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lnmask::checkpoint::Checkpoint;
use lnmask::config::{grf_pair, RunConfig};
use lnmask::data::{encode_idx_f64, write_pgm};
use lnmask::distributions::logitnormal_pdf;
use lnmask::eval::{collapse_distribution, eval_fixed_mask, export_covariance, mask_to_f64, CollapsedMask, DEFAULT_MC_SAMPLES};
use lnmask::io::write_atomic;
use lnmask::model::DecoderKind;
use lnmask::samplers::{SamplerKind, SamplerParams};
use lnmask::training::{train_loop, Model, CHECKPOINT_FILE};
use lnmask::{Error, Result};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "lnmask", version, about = "Learn sparse pixel masks with correlated logitNormal distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a sampler and decoder from a JSON run config.
    Train(TrainArgs),
    /// Fixed-mask test MSE of the collapsed masks of a trained run.
    Eval(EvalArgs),
    /// Collapse a checkpoint into selection probabilities and top-K masks.
    Collapse(CollapseArgs),
    /// Write a window of the vanilla pre-sigmoid covariance W W^T.
    ExportCov(ExportCovArgs),
    /// Generate Gaussian random field datasets as f64 IDX files.
    GenData(GenDataArgs),
    /// Tabulate the logitNormal density on a grid over (0, 1).
    DensityPlot(DensityArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_sparse: Option<f64>,
    #[arg(long)]
    lambda_temp: Option<f64>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        let t = &mut c.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lambda_sparse {
            t.lambda_sparse = v;
        }
        if let Some(v) = self.lambda_temp {
            t.lambda_temp = Some(v);
        }
        if let Some(v) = &self.sampler {
            t.sampler = v.parse::<SamplerKind>()?;
        }
        if let Some(v) = &self.decoder {
            t.decoder = v.parse::<DecoderKind>()?;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: Overrides,
    /// Defaults to the checkpoint in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CollapseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ExportCovArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    /// First pixel index of the window.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 64)]
    len: usize,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value_t = 1000)]
    train_count: usize,
    #[arg(long, default_value_t = 200)]
    test_count: usize,
    #[arg(long, default_value_t = 3.0)]
    slope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 1.78)]
    sigma: f64,
    /// Number of grid intervals; the endpoints 0 and 1 carry the limit value 0.
    #[arg(long, default_value_t = 20000)]
    intervals: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Collapse(a) => collapse(a),
        Command::ExportCov(a) => export_cov(a),
        Command::GenData(a) => gen_data(a),
        Command::DensityPlot(a) => density(a),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let data = cfg.data.load()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(&cfg.output_dir.join("config.json"), cfg.to_json().as_bytes())?;
    log::info!("training on {} ({} images)", data.train.provenance, data.train.len());
    let out = train_loop(&data.train, &cfg.train, Some(&cfg.output_dir))?;
    if let Some(last) = out.metrics.last() {
        println!("epoch {} recon {} sparsity {} total {}", last.epoch, last.recon_mse, last.sparsity_l0, last.total);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let path = a.checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    let model = Model::from_checkpoint(Checkpoint::load(&path)?)?;
    let data = cfg.data.load()?;
    if data.test.side != model.sampler.side() {
        return Err(Error::Config(format!(
            "checkpoint is for {0}x{0} images, test split is {1}x{1}",
            model.sampler.side(),
            data.test.side
        )));
    }
    let c = collapse_distribution(&model.sampler, cfg.eval.mc_samples, cfg.train.seed)?;
    let mut csv = String::from("features,test_mse\n");
    for (k, mask) in &c.masks {
        let mse = eval_fixed_mask(&mask_to_f64(mask), &model.decoder, &data.test)?;
        writeln!(csv, "{k},{mse}").expect("string write");
        println!("{k} features: test mse {mse}");
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(&cfg.output_dir.join("eval.csv"), csv.as_bytes())
}

fn collapse(a: CollapseArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let c = collapse_distribution(&ck.sampler, a.mc_samples, a.seed)?;
    std::fs::create_dir_all(&a.output_dir)?;
    write_collapse(&a.output_dir, &c)?;
    println!("l0_estimate {}", c.l0_estimate);
    Ok(())
}

fn write_collapse(dir: &Path, c: &CollapsedMask) -> Result<()> {
    let n = c.side;
    write_pgm(&c.probs, n, n, &dir.join("probs.pgm"))?;
    let mut probs = String::from("pixel,prob\n");
    for (i, p) in c.probs.iter().enumerate() {
        writeln!(probs, "{i},{p}").expect("string write");
    }
    write_atomic(&dir.join("probs.csv"), probs.as_bytes())?;
    let mut summary = String::from("features,l0_estimate\n");
    for (k, mask) in &c.masks {
        write_pgm(&mask_to_f64(mask), n, n, &dir.join(format!("mask_{k}.pgm")))?;
        let mut idx = String::from("pixel\n");
        for (i, _) in mask.iter().enumerate().filter(|(_, &on)| on) {
            writeln!(idx, "{i}").expect("string write");
        }
        write_atomic(&dir.join(format!("mask_{k}.csv")), idx.as_bytes())?;
        writeln!(summary, "{k},{}", c.l0_estimate).expect("string write");
    }
    write_atomic(&dir.join("collapse.csv"), summary.as_bytes())
}

fn export_cov(a: ExportCovArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let SamplerParams::Vanilla(p) = &ck.sampler else {
        return Err(Error::Config(format!("export-cov needs a vanilla checkpoint, got {}", ck.sampler.kind())));
    };
    let cov = export_covariance(p, a.start, a.len)?;
    let mut csv = String::from("pixel");
    for j in 0..a.len {
        write!(csv, ",{}", a.start + j).expect("string write");
    }
    csv.push('\n');
    for (i, row) in cov.chunks(a.len).enumerate() {
        write!(csv, "{}", a.start + i).expect("string write");
        for v in row {
            write!(csv, ",{v}").expect("string write");
        }
        csv.push('\n');
    }
    std::fs::create_dir_all(&a.output_dir)?;
    write_atomic(&a.output_dir.join(format!("cov_{}_{}.csv", a.start, a.len)), csv.as_bytes())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let pair = grf_pair(a.side, a.train_count, a.test_count, a.slope, a.seed)?;
    std::fs::create_dir_all(&a.output_dir)?;
    for (name, ds) in [("train-fields-idx3-f64", &pair.train), ("test-fields-idx3-f64", &pair.test)] {
        write_atomic(&a.output_dir.join(name), &encode_idx_f64(ds.len(), ds.side, ds.side, ds.images()))?;
    }
    println!("wrote {} train and {} test fields of {}x{}", pair.train.len(), pair.test.len(), a.side, a.side);
    Ok(())
}

fn density(a: DensityArgs) -> Result<()> {
    if a.intervals < 2 {
        return Err(Error::Config("need at least two grid intervals".into()));
    }
    let mut csv = String::from("y,density\n");
    for i in 0..=a.intervals {
        let y = i as f64 / a.intervals as f64;
        let p = if i == 0 || i == a.intervals { 0.0 } else { logitnormal_pdf(y, a.mu, a.sigma)? };
        writeln!(csv, "{y},{p}").expect("string write");
    }
    std::fs::create_dir_all(&a.output_dir)?;
    write_atomic(&a.output_dir.join("density.csv"), csv.as_bytes())
}
