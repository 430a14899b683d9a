use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deformapprox::bench::THREADS_ENV;
use deformapprox::pipeline::{
    cmd_bench, cmd_demo, cmd_eval, cmd_extract, cmd_train, demo_config, rig_gen, Pipeline, PipelineError, RigKind, RigSection, Trained,
};

#[derive(Parser)]
#[command(name = "deformapprox", version, about = "Learned rig deformation approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Arm,
    Face,
}

/// Dataset location and split; override the config.
#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Dataset file (relative to the working directory).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Every n-th frame is validation.
    #[arg(long)]
    stride: Option<usize>,
    /// First validation frame.
    #[arg(long)]
    offset: Option<usize>,
}

impl DataArgs {
    fn apply(&self, p: &mut Pipeline) {
        if let Some(d) = &self.dataset {
            let abs = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
            p.config.paths.dataset = abs.to_string_lossy().into_owned();
        }
        p.config.split.stride = self.stride.unwrap_or(p.config.split.stride);
        p.config.split.offset = self.offset.unwrap_or(p.config.split.offset);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural rig (JSON + OBJ).
    RigGen {
        #[arg(long, value_enum, default_value = "arm")]
        kind: Kind,
        /// Arm rings along the bone axis.
        #[arg(long, default_value_t = 20)]
        segments: usize,
        /// Arm vertices per ring.
        #[arg(long, default_value_t = 12)]
        radial: usize,
        /// Face grid resolution.
        #[arg(long, default_value_t = 16)]
        grid: usize,
        /// Face controller count.
        #[arg(long, default_value_t = 6)]
        bumps: usize,
        /// Face bump seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Rig JSON path.
        #[arg(long, default_value = "rig.json")]
        out: PathBuf,
        /// OBJ path; defaults to the JSON path with an .obj extension.
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Sample a clip and write (or append) dataset rows.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        append: bool,
    },
    /// Train the deformer, or an ensemble with --ensemble.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Continue from the checkpoint if one exists.
        #[arg(long)]
        resume: bool,
        /// Train K members (K from the config when omitted).
        #[arg(long, num_args = 0..=1, default_missing_value = "0")]
        ensemble: Option<usize>,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Metrics CSVs and heat maps.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Also paint the ensemble uncertainty.
        #[arg(long)]
        uncertainty: bool,
    },
    /// Timing tables.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Characters for the sequential vs batched comparison.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// End-to-end run: rig, dataset, training, evaluation and benchmark.
    Demo {
        #[arg(long, default_value = "demo")]
        out: PathBuf,
        /// Use the face rig instead of the arm.
        #[arg(long)]
        face: bool,
        #[arg(long)]
        epochs: Option<u64>,
    },
}

fn with_overrides(config: &PathBuf, f: impl FnOnce(&mut Pipeline)) -> Result<Pipeline, PipelineError> {
    let mut p = Pipeline::load(config)?;
    f(&mut p);
    p.config.model.validate()?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::RigGen { kind, segments, radial, grid, bumps, seed, out, obj } => {
            let defaults = RigSection::default();
            let section = RigSection {
                kind: match kind {
                    Kind::Arm => RigKind::Arm,
                    Kind::Face => RigKind::Face,
                },
                segments,
                radial,
                grid,
                bumps,
                seed: seed.unwrap_or(defaults.seed),
            };
            let obj = obj.unwrap_or_else(|| out.with_extension("obj"));
            let rig = rig_gen(&section, &out, &obj)?;
            log::info!("wrote {} ({} vertices) and {}", out.display(), rig.mesh.vertex_count(), obj.display());
        }
        Command::Extract { config, data, append } => {
            cmd_extract(&with_overrides(&config, |p| data.apply(p))?, append)?;
        }
        Command::Train { config, data, resume, ensemble, epochs, seed } => {
            let p = with_overrides(&config, |p| {
                data.apply(p);
                if let Some(e) = epochs {
                    p.config.model.epochs = e;
                }
                if let Some(s) = seed {
                    p.config.model.seed = s;
                    p.config.ensemble.base_seed = s;
                }
            })?;
            let members = ensemble.map(|k| if k == 0 { p.config.ensemble.members } else { k });
            match cmd_train(&p, resume, members)? {
                Trained::Single(m) => log::info!("saved model: {} PCA components, {} subspace networks", m.pca.k(), m.groups.len()),
                Trained::Ensemble(e) => log::info!("saved ensemble of {} members", e.len()),
            }
        }
        Command::Eval { config, data, uncertainty } => {
            let s = cmd_eval(&with_overrides(&config, |p| data.apply(p))?, uncertainty)?;
            log::info!("train RMSE {:.3e}, validation RMSE {:.3e} (bbox diagonal {:.4})", s.train.rmse, s.validation.rmse, s.bbox_diagonal);
        }
        Command::Bench { config, data, batch, reps, warmup, threads } => {
            let p = with_overrides(&config, |p| {
                data.apply(p);
                let b = &mut p.config.bench;
                b.characters = batch.unwrap_or(b.characters);
                b.reps = reps.unwrap_or(b.reps);
                b.warmup = warmup.unwrap_or(b.warmup);
                b.threads = threads.or(b.threads);
            })?;
            cmd_bench(&p)?;
        }
        Command::Demo { out, face, epochs } => {
            let mut cfg = demo_config(face);
            if let Some(e) = epochs {
                cfg.model.epochs = e;
            }
            let s = cmd_demo(&out, cfg)?;
            log::info!(
                "demo ({}): train RMSE {:.3e}, validation RMSE {:.3e}, linear baseline {:.3e}",
                s.rig,
                s.eval.train.rmse,
                s.eval.validation.rmse,
                s.eval.linear_validation.rmse
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
