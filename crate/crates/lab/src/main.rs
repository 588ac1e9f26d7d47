use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use normgen::checkpoint::{self, CheckpointMeta, NormalizationInfo};
use normgen::config::{DatasetKind, DatasetSpec, ExperimentConfig};
use normgen::ingest::{ingest, IngestOutcome};
use normgen::protocol::{prepare_data, run_sweep};
use normgen::report::{write_report, RECORDS_FILE};
use normgen::summary::summarize;
use normgen::table::ResultsTable;
use normgen_core::analysis::{evaluate, linear_fit};
use normgen_core::normalize::{absorb_batchnorm, max_relative_deviation, normalize_layerwise, NormKind};
use normgen_core::nn::Mode;
use normgen_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Weight-normalization generalization experiments.
#[derive(Parser)]
#[command(name = "normgen", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Norm for layer-wise normalization: fro, l1 or linf.
    #[arg(long, global = true)]
    norm: Option<NormKind>,
    /// Train on a random subset of this many examples.
    #[arg(long, global = true)]
    subset_size: Option<usize>,
    /// Sweep points trained concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reuse completed sweep points whose inputs are unchanged.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw dataset files and write a provenance manifest.
    Ingest {
        #[arg(long, value_parser = parse_kind)]
        dataset: Option<DatasetKind>,
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Manifest directory (defaults to the dataset directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured protocol and write table, checkpoints and summary.
    Sweep,
    /// Layer-wise normalize a checkpoint (absorbing batch norm first).
    Normalize {
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss and error of a checkpoint on the configured dataset.
    Evaluate { checkpoint: PathBuf },
    /// Least-squares fit between two columns of a results table.
    Fit {
        table: PathBuf,
        #[arg(long, default_value = "norm_train_loss")]
        x: String,
        #[arg(long, default_value = "norm_test_loss")]
        y: String,
        /// Restrict to these sweep kinds (comma separated).
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
    },
    /// Write plot-data panels for a finished sweep.
    Report { run_dir: PathBuf },
    /// Min-norm gradient descent on a random underdetermined system.
    DemoLinear {
        #[arg(long, default_value_t = 20)]
        examples: usize,
        #[arg(long, default_value_t = 50)]
        dims: usize,
    },
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    match s {
        "mnist" => Ok(DatasetKind::Mnist),
        "cifar10" => Ok(DatasetKind::Cifar10),
        "cifar100" => Ok(DatasetKind::Cifar100),
        _ => Err(format!("unknown dataset `{s}`")),
    }
}

impl Cli {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let path = self.config.as_ref().context("--config is required for this command")?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = &self.norm {
            cfg.norm = n.to_string();
        }
        if let Some(n) = self.subset_size {
            cfg.dataset.subset_size = Some(n);
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { dataset, dir, out } => {
            let spec = match (&cli.config, dataset, dir) {
                (_, Some(kind), Some(dir)) => DatasetSpec {
                    kind: *kind,
                    dir: dir.clone(),
                    subset_size: cli.subset_size,
                    test_subset_size: None,
                    subset_seed: cli.seed.unwrap_or(0),
                },
                (Some(_), None, None) => cli.experiment()?.dataset,
                _ => bail!("give either --config or both --dataset and --dir"),
            };
            let out = out.clone().unwrap_or_else(|| spec.dir.clone());
            let (m, outcome) = ingest(&spec, &out)?;
            match outcome {
                IngestOutcome::Written(p) => println!("wrote {}", p.display()),
                IngestOutcome::UpToDate(p) => println!("{} is up to date", p.display()),
            }
            println!("{} train / {} test examples, digest {}", m.train_examples, m.test_examples, m.source_digest);
        }
        Command::Sweep => {
            let cfg = cli.experiment()?;
            let data = prepare_data(&cfg.dataset)?;
            info!("{} train / {} test examples", data.train.len(), data.test.len());
            std::fs::create_dir_all(&cfg.output_dir)?;
            std::fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())?;
            let records = run_sweep(&cfg, &data, cli.resume)?;
            let table = ResultsTable::from_records(&records)?;
            table.write(&cfg.output_dir.join("results.csv"))?;
            std::fs::write(cfg.output_dir.join(RECORDS_FILE), serde_json::to_vec_pretty(&records)?)?;
            let summary = summarize(&cfg, &records, data.train.len());
            std::fs::write(cfg.output_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
            print!("{}", table.to_csv());
            if let Some(f) = &summary.normalized_fit {
                println!("normalized fit: slope {:.4} intercept {:.4} R2 {:.4}", f.slope, f.intercept, f.r2);
            }
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Normalize { checkpoint: path, out } => {
            let kind = cli.norm.unwrap_or_else(NormKind::fro);
            let (net, header, digest) = checkpoint::load::<f64>(path)?;
            let mut absorption_deviation = None;
            let plain = if net.has_batchnorm() {
                let absorbed = absorb_batchnorm(&net)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
                let [c, h, w] = net.input_shape();
                let x: Vec<f64> = (0..16 * c * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
                let x = Tensor::new(vec![16, c, h, w], x)?;
                let before = net.forward(&x, Mode::Eval)?;
                let after = absorbed.forward(&x, Mode::Eval)?;
                absorption_deviation = Some(max_relative_deviation(&before, 1.0, &after)?);
                absorbed
            } else {
                net
            };
            let n = normalize_layerwise(&plain, kind)?;
            let meta = CheckpointMeta {
                normalized: Some(NormalizationInfo {
                    kind,
                    rho: n.rho.clone(),
                    product_norm: n.product_norm,
                    source_digest: Some(digest),
                }),
                ..header.meta()
            };
            let out = out.clone().unwrap_or_else(|| path.with_extension(format!("{kind}.ngc")));
            let new_digest = checkpoint::save(&n.network, &meta, &out)?;
            print_json(&serde_json::json!({
                "output": out,
                "digest": new_digest,
                "norm": kind.to_string(),
                "rho": n.rho,
                "product_norm": n.product_norm,
                "absorbed_batchnorm": absorption_deviation.is_some(),
                "absorption_max_relative_deviation": absorption_deviation,
            }))?;
        }
        Command::Evaluate { checkpoint: path } => {
            let cfg = cli.experiment()?;
            let (net, header, digest) = checkpoint::load::<f32>(path)?;
            let data = prepare_data(&cfg.dataset)?;
            print_json(&serde_json::json!({
                "checkpoint": path,
                "digest": digest,
                "epoch": header.epoch,
                "train": evaluate(&net, &data.train)?,
                "test": evaluate(&net, &data.test)?,
            }))?;
        }
        Command::Fit { table, x, y, kinds } => {
            let t = ResultsTable::read(table)?;
            let pts = t.pairs(x, y, kinds.as_deref())?;
            print_json(&serde_json::json!({ "x": x, "y": y, "fit": linear_fit(&pts)? }))?;
        }
        Command::Report { run_dir } => {
            for p in write_report(run_dir)? {
                println!("{}", p.display());
            }
        }
        Command::DemoLinear { examples, dims } => {
            print_json(&normgen::demo::demo_linear(*examples, *dims, cli.seed.unwrap_or(0))?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
