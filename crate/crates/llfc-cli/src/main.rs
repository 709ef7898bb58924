mod checkpoint;
mod config;
mod error;
mod pipeline;
mod report;

use checkpoint::{load_checkpoint, save_checkpoint, save_permutation};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{ExperimentConfig, Format};
use error::{CliError, Result};
use llfc::conditions::condition_report;
use llfc::connectivity::{error_curve, llfc_metrics, AlphaGrid};
use llfc::nn::{forward, init_params, train, MlpSpec};
use llfc::permutation::{activation_matching, apply, weight_matching};
use pipeline::{build_dataset, build_split, train_pair};
use report::{condition_rows, config_hash};
use std::path::PathBuf;
use std::process::ExitCode;

/// Linear mode connectivity experiments on small ReLU networks.
#[derive(Parser)]
#[command(name = "llfc", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the dataset and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the report formats.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct PairPaths {
    /// Checkpoint of model A (default: <out>/model_a.bin).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Checkpoint of model B (default: <out>/model_b.bin).
    #[arg(long)]
    b: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchMethod {
    Weight,
    Activation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the configured dataset and write it as an IDX pair.
    GenData(Common),
    /// Train a single model and write a checkpoint.
    Train(Common),
    /// Produce a spawned or independent pair per the method block.
    Spawn(Common),
    /// Align checkpoint B to checkpoint A with a permutation.
    Match {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
        #[arg(long, value_enum)]
        method: MatchMethod,
    },
    /// Error curve along the linear interpolation of two checkpoints.
    Interp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
    },
    /// Layerwise feature-connectivity metrics for two checkpoints.
    Llfc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
    },
    /// Weak-additivity and commutativity distances for two checkpoints.
    Conditions {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
    },
    /// Stitching errors for two checkpoints.
    Stitch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
    },
    /// Stable rank of every weight matrix of a checkpoint pair.
    Srank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairPaths,
    },
    /// Full pipeline: data, training, matching, all configured reports.
    Run(Common),
}

struct Ctx {
    cfg: ExperimentConfig,
    /// canonical serialized config (after flag overrides), used for hashing
    canonical: String,
}

impl Ctx {
    fn load(common: &Common) -> Result<Ctx> {
        let (mut cfg, _raw) = ExperimentConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            cfg.override_seed(seed);
        }
        if let Some(out) = &common.out {
            cfg.output.dir = out.clone();
        }
        if let Some(f) = common.format {
            cfg.output.formats = vec![match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }];
        }
        // hash the experiment, not its destination: the same configuration
        // written to two different directories must carry the same hash
        let mut for_hash = cfg.clone();
        for_hash.output = Default::default();
        let canonical =
            toml::to_string(&for_hash).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Ctx { cfg, canonical })
    }

    fn hash(&self) -> String {
        config_hash(&self.canonical)
    }

    fn out_dir(&self) -> &PathBuf {
        &self.cfg.output.dir
    }

    fn pair_paths(&self, pair: &PairPaths) -> (PathBuf, PathBuf) {
        (
            pair.a.clone().unwrap_or_else(|| self.out_dir().join("model_a.bin")),
            pair.b.clone().unwrap_or_else(|| self.out_dir().join("model_b.bin")),
        )
    }

    fn grid(&self) -> AlphaGrid {
        AlphaGrid::uniform(self.cfg.analysis.alpha_points)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(common) => {
            let ctx = Ctx::load(&common)?;
            let data = build_dataset(&ctx.cfg)?;
            let dir = ctx.out_dir();
            std::fs::create_dir_all(dir)?;
            let images = dir.join("images.idx");
            let labels = dir.join("labels.idx");
            llfc::data::save_idx(&data, data.dim(), 1, &images, &labels)?;
            println!("{}", images.display());
            println!("{}", labels.display());
        }
        Cmd::Train(common) => {
            let ctx = Ctx::load(&common)?;
            let (train_data, _) = build_split(&ctx.cfg)?;
            let spec = MlpSpec::new(ctx.cfg.model.dims.clone())
                .map_err(|e| CliError::Config(e.to_string()))?;
            let tc = ctx.cfg.training.to_train_config();
            let init = init_params(&spec, tc.seed);
            let (trained, history) = train(&init, &train_data, &tc)?;
            let path = ctx.out_dir().join("model.bin");
            save_checkpoint(&trained, &path)?;
            if let Some(last) = history.last() {
                println!("final train error {}", last.train_error);
            }
            println!("{}", path.display());
        }
        Cmd::Spawn(common) => {
            let ctx = Ctx::load(&common)?;
            let (train_data, _) = build_split(&ctx.cfg)?;
            let pair = train_pair(&ctx.cfg, &train_data)?;
            let dir = ctx.out_dir();
            let pa = dir.join("model_a.bin");
            let pb = dir.join("model_b.bin");
            save_checkpoint(&pair.a, &pa)?;
            save_checkpoint(&pair.b, &pb)?;
            println!("{}", pa.display());
            println!("{}", pb.display());
        }
        Cmd::Match { common, pair, method } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let a = load_checkpoint(&pa)?;
            let b = load_checkpoint(&pb)?;
            let pi = match method {
                MatchMethod::Weight => weight_matching(&a, &b, ctx.cfg.training.seed, 100)?,
                MatchMethod::Activation => {
                    let (train_data, _) = build_split(&ctx.cfg)?;
                    let ta = forward(&a, &train_data.x)?;
                    let tb = forward(&b, &train_data.x)?;
                    activation_matching(&ta, &tb)?
                }
            };
            let aligned = apply(&b, &pi)?;
            let dir = ctx.out_dir();
            let pi_path = dir.join("permutation.json");
            let aligned_path = dir.join("model_b_matched.bin");
            save_permutation(&pi, &pi_path)?;
            save_checkpoint(&aligned, &aligned_path)?;
            println!("{}", pi_path.display());
            println!("{}", aligned_path.display());
        }
        Cmd::Interp { common, pair } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let (a, b) = (load_checkpoint(&pa)?, load_checkpoint(&pb)?);
            let (_, eval) = build_split(&ctx.cfg)?;
            let grid = ctx.grid();
            let (curve, barrier) = error_curve(&a, &b, &eval, &grid)?;
            for f in report::emit_curve(
                grid.values(),
                &curve,
                barrier,
                ctx.out_dir(),
                &ctx.cfg.output.formats,
                &ctx.hash(),
            )? {
                println!("{}", f.display());
            }
        }
        Cmd::Llfc { common, pair } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let (a, b) = (load_checkpoint(&pa)?, load_checkpoint(&pb)?);
            let (_, eval) = build_split(&ctx.cfg)?;
            let rep = llfc_metrics(&a, &b, &eval, &ctx.grid())?;
            for f in
                report::emit_llfc(&rep, ctx.out_dir(), &ctx.cfg.output.formats, &ctx.hash())?
            {
                println!("{}", f.display());
            }
        }
        Cmd::Conditions { common, pair } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let (a, b) = (load_checkpoint(&pa)?, load_checkpoint(&pb)?);
            let (_, eval) = build_split(&ctx.cfg)?;
            let rep = condition_report(&a, &b, &eval, &ctx.grid())?;
            let rows = condition_rows(&rep, a.layers());
            for f in report::emit_conditions(
                &rows,
                ctx.out_dir(),
                &ctx.cfg.output.formats,
                &ctx.hash(),
            )? {
                println!("{}", f.display());
            }
        }
        Cmd::Stitch { common, pair } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let (a, b) = (load_checkpoint(&pa)?, load_checkpoint(&pb)?);
            let (_, eval) = build_split(&ctx.cfg)?;
            let rows = pipeline::stitch_rows(&a, &b, &eval)?;
            for f in report::emit_stitch(
                &rows,
                ctx.out_dir(),
                &ctx.cfg.output.formats,
                &ctx.hash(),
            )? {
                println!("{}", f.display());
            }
        }
        Cmd::Srank { common, pair } => {
            let ctx = Ctx::load(&common)?;
            let (pa, pb) = ctx.pair_paths(&pair);
            let (a, b) = (load_checkpoint(&pa)?, load_checkpoint(&pb)?);
            let rows = pipeline::srank_rows(&a, &b)?;
            for f in report::emit_srank(
                &rows,
                ctx.out_dir(),
                &ctx.cfg.output.formats,
                &ctx.hash(),
            )? {
                println!("{}", f.display());
            }
        }
        Cmd::Run(common) => {
            let ctx = Ctx::load(&common)?;
            for f in pipeline::run_experiment(&ctx.cfg, &ctx.canonical)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
