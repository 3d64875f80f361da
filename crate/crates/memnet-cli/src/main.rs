//! Command-line frontend: collect data into a short-term memory, train a
//! long-term model, write recall grids as PGM, score recalls, and
//! finite-difference-check the loss gradients.

mod config;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{pick, pick_opt, FileConfig};
use memnet::checkpoint::{
    checkpoint_from_memory, checkpoint_from_trainer, load_memory, load_trainer, Checkpoint,
};
use memnet::envs::{gridworld, idx, shapes, ImageSet};
use memnet::long_term::{LongTermModel, ModelConfig, Variant, PARAM_NAMES};
use memnet::short_term::{onehot, Batch, Sample, ShortTermMemory};
use memnet::tensor::{Rng, Tensor};
use memnet::trainer::{eval_recall, gridworld_recall_gap, TrainConfig};

#[derive(Parser)]
#[command(
    name = "memnet",
    version,
    about = "Class-balanced short-term memory with generative long-term recall"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a dataset into a short-term memory file
    Collect(CollectArgs),
    /// Train a long-term model from a memory file
    Train(TrainArgs),
    /// Write a PGM grid of per-class recalls from a checkpoint
    Recall(RecallArgs),
    /// Score recalls (and recognition) against reference data
    Eval(EvalArgs),
    /// Compare loss gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dataset {
    Shapes,
    Gridworld,
    Idx,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    A,
    B,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::A => Variant::TypeA,
            VariantArg::B => Variant::TypeB,
        }
    }
}

fn parse_dataset(s: &str) -> Result<Dataset> {
    match s {
        "shapes" => Ok(Dataset::Shapes),
        "gridworld" => Ok(Dataset::Gridworld),
        "idx" => Ok(Dataset::Idx),
        other => bail!("unknown dataset {other:?} (expected shapes, gridworld or idx)"),
    }
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "a" | "type_a" => Ok(Variant::TypeA),
        "b" | "type_b" => Ok(Variant::TypeB),
        other => bail!("unknown variant {other:?} (expected a or b)"),
    }
}

#[derive(Args)]
struct CollectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    dataset: Option<Dataset>,
    /// Samples per class (shapes and idx datasets)
    #[arg(long)]
    per_class: Option<usize>,
    /// Greedy collection episodes (gridworld)
    #[arg(long)]
    episodes: Option<usize>,
    /// Q-learning pre-training episodes (gridworld)
    #[arg(long)]
    q_episodes: Option<usize>,
    /// IDX image file
    #[arg(long)]
    idx_images: Option<PathBuf>,
    /// IDX label file
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    /// Mean-pool factor applied to IDX images
    #[arg(long)]
    downsample: Option<usize>,
    /// Per-class queue capacity
    #[arg(long)]
    capacity: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Memory file written by `collect`
    #[arg(long)]
    memory: PathBuf,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Class-prior scale
    #[arg(long)]
    lambda1: Option<f64>,
    /// Root reconstruction weight
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    root_dim: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
}

#[derive(Args)]
struct RecallArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Recalls per class (grid rows)
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    dataset: Option<Dataset>,
    /// Held-out reference samples per class (shapes)
    #[arg(long)]
    held_out: Option<usize>,
    /// Recalls per class to score
    #[arg(long)]
    samples: Option<usize>,
    /// Memory file; required for the gridworld visited/unvisited gap
    #[arg(long)]
    memory: Option<PathBuf>,
    #[arg(long)]
    idx_images: Option<PathBuf>,
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    #[arg(long)]
    downsample: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    /// Independent checks per variant
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Probed coordinates per parameter tensor
    #[arg(long, default_value_t = 25)]
    coords: usize,
    /// Batch rows per check
    #[arg(long, default_value_t = 4)]
    batch: usize,
}

const DEFAULT_SEED: u64 = 42;
const DEFAULT_EVAL_SEED: u64 = 100;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Collect(args) => cmd_collect(args).map(|()| 0),
        Command::Train(args) => cmd_train(args).map(|()| 0),
        Command::Recall(args) => cmd_recall(args).map(|()| 0),
        Command::Eval(args) => cmd_eval(args).map(|()| 0),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn out_dir(common: &Common, file: &FileConfig) -> Result<PathBuf> {
    let dir = pick(
        common.out.clone(),
        file.out_dir.clone(),
        PathBuf::from("out"),
    );
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn screens_tile_side() -> (usize, usize) {
    (gridworld::SCREEN_SIDE, gridworld::SCREEN_SIDE)
}

fn cmd_collect(args: CollectArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dataset = match (args.dataset, &file.dataset) {
        (Some(d), _) => d,
        (None, Some(s)) => parse_dataset(s)?,
        (None, None) => bail!("no dataset selected (use --dataset or a config file)"),
    };
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let capacity = pick(args.capacity, file.capacity, 256);
    if capacity == 0 {
        bail!("--capacity must be at least 1");
    }
    let dir = out_dir(&args.common, &file)?;
    let mut rng = Rng::new(seed);

    let (mem, width, height) = match dataset {
        Dataset::Shapes => {
            let per_class = pick(args.per_class, file.per_class, 200);
            let mut mem = ShortTermMemory::new(shapes::NUM_CLASSES, capacity);
            for class in 0..shapes::NUM_CLASSES {
                for _ in 0..per_class {
                    mem.insert(Sample {
                        class_id: class,
                        payload: shapes::synth_shape(class, &mut rng)?,
                    })?;
                }
            }
            (mem, shapes::SIDE, shapes::SIDE)
        }
        Dataset::Gridworld => {
            let q_episodes = pick(args.q_episodes, file.q_episodes, 500);
            let episodes = pick(args.episodes, file.episodes, 20);
            let policy = gridworld::train_q_policy(q_episodes, 0.1, 0.9, 0.1, &mut rng);
            let mut mem = ShortTermMemory::new(gridworld::NUM_STATES, capacity);
            gridworld::collect_screens(&policy, episodes, &mut mem, &mut rng)?;
            let (w, h) = screens_tile_side();
            (mem, w, h)
        }
        Dataset::Idx => {
            let set = load_idx_set(
                args.idx_images.or(file.idx_images.clone()),
                args.idx_labels.or(file.idx_labels.clone()),
                pick(args.downsample, file.downsample, 1),
            )?;
            let num_classes = set
                .labels
                .iter()
                .max()
                .map(|m| m + 1)
                .ok_or_else(|| anyhow!("empty IDX dataset"))?;
            let per_class = pick_opt(args.per_class, file.per_class);
            let mut taken = vec![0usize; num_classes];
            let mut mem = ShortTermMemory::new(num_classes, capacity);
            for i in 0..set.len() {
                let label = set.labels[i];
                if per_class
                    .map(|limit| taken[label] >= limit)
                    .unwrap_or(false)
                {
                    continue;
                }
                taken[label] += 1;
                mem.insert(Sample {
                    class_id: label,
                    payload: Tensor::vector(set.image(i).to_vec()),
                })?;
            }
            (mem, set.width, set.height)
        }
    };

    let mut cp = checkpoint_from_memory(&mem)?;
    cp.push_scalar("data.width", width as f64);
    cp.push_scalar("data.height", height as f64);
    let path = dir.join("memory.man1");
    cp.save(&path)?;
    println!(
        "wrote {} (classes: {:?})",
        path.display(),
        mem.class_counts()
    );
    Ok(())
}

fn load_idx_set(
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    downsample: usize,
) -> Result<ImageSet> {
    let images = images.ok_or_else(|| anyhow!("idx dataset needs --idx-images"))?;
    let labels = labels.ok_or_else(|| anyhow!("idx dataset needs --idx-labels"))?;
    let set = idx::load_idx(&images, &labels)?;
    Ok(idx::downsample(&set, downsample)?)
}

#[derive(Serialize)]
struct StepJson {
    step: u64,
    total: f64,
    kl: f64,
    recon: f64,
    root_mse: f64,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dir = out_dir(&args.common, &file)?;

    let mem_cp = Checkpoint::load(&args.memory)?;
    let mem = memnet::checkpoint::memory_from_checkpoint(&mem_cp)?;
    let input_dim = mem
        .payload_dim()
        .ok_or_else(|| anyhow!("memory {} holds no samples", args.memory.display()))?;

    let variant = match (args.variant, &file.variant) {
        (Some(v), _) => v.into(),
        (None, Some(s)) => parse_variant(s)?,
        (None, None) => Variant::TypeB,
    };
    let mut cfg = TrainConfig::new(variant, input_dim, mem.num_classes());
    cfg.steps = pick(args.steps, file.steps, cfg.steps);
    cfg.batch_size = pick(args.batch_size, file.batch_size, cfg.batch_size);
    cfg.seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    cfg.lambda1 = pick(args.lambda1, file.lambda1, cfg.lambda1);
    cfg.lambda2 = pick(args.lambda2, file.lambda2, cfg.lambda2);
    cfg.root_dim = pick(args.root_dim, file.root_dim, cfg.root_dim);
    cfg.latent_dim = pick(args.latent_dim, file.latent_dim, cfg.latent_dim);
    cfg.adam = file.adam_config();
    cfg.capacity = mem.capacity();

    let (trainer, history) = memnet::trainer::train(cfg, &mem)?;

    let mut cp = checkpoint_from_trainer(&trainer);
    cp.push_scalar("data.width", mem_cp.scalar("data.width").unwrap_or(0.0));
    cp.push_scalar("data.height", mem_cp.scalar("data.height").unwrap_or(0.0));
    let ckpt_path = dir.join("checkpoint.man1");
    cp.save(&ckpt_path)?;

    let rows: Vec<StepJson> = history
        .iter()
        .map(|r| StepJson {
            step: r.step,
            total: r.total,
            kl: r.kl,
            recon: r.recon,
            root_mse: r.root_mse,
        })
        .collect();
    let hist_path = dir.join("history.json");
    std::fs::write(&hist_path, serde_json::to_string_pretty(&rows)?)
        .with_context(|| format!("writing {}", hist_path.display()))?;

    match history.last() {
        Some(last) => println!(
            "wrote {} after {} steps (final loss {:.4})",
            ckpt_path.display(),
            trainer.step,
            last.total
        ),
        None => println!("wrote {} (no steps run)", ckpt_path.display()),
    }
    Ok(())
}

/// Tile side lengths for rendering recalls, from the checkpoint's data
/// fields, falling back to a square layout.
fn tile_dims(cp: &Checkpoint, input_dim: usize) -> Result<(usize, usize)> {
    let w = cp.scalar("data.width").unwrap_or(0.0) as usize;
    let h = cp.scalar("data.height").unwrap_or(0.0) as usize;
    if w > 0 && h > 0 && w * h == input_dim {
        return Ok((w, h));
    }
    let side = (input_dim as f64).sqrt() as usize;
    if side * side != input_dim {
        bail!("cannot infer tile shape for {input_dim} pixels");
    }
    Ok((side, side))
}

fn cmd_recall(args: RecallArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dir = out_dir(&args.common, &file)?;
    let cp = Checkpoint::load(&args.checkpoint)?;
    let trainer = memnet::checkpoint::trainer_from_checkpoint(&cp)?;
    let model = &trainer.model;
    let priors = model.class_priors()?;
    let samples = pick(args.samples, file.samples, 4);
    let seed = pick(args.common.seed, file.seed, DEFAULT_SEED);
    let mut rng = Rng::new(seed);

    let (tile_w, tile_h) = tile_dims(&cp, model.config().input_dim)?;
    let mut columns = Vec::with_capacity(model.config().num_classes);
    for class in 0..model.config().num_classes {
        let recalls = model.recall(&priors, class, samples, &mut rng)?;
        let tiles: Vec<Tensor> = (0..recalls.rows())
            .map(|r| Tensor::vector(recalls.row(r).to_vec()))
            .collect();
        columns.push(tiles);
    }
    let (pixels, width, height) = memnet::pgm::image_grid(&columns, tile_w, tile_h)?;
    let path = dir.join("recall.pgm");
    memnet::pgm::write_pgm(&path, &pixels, width, height)?;
    println!("wrote {} ({width}x{height})", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ClassJson {
    class_id: usize,
    skipped: bool,
    accuracy: f64,
    centroid_mse: f64,
    latent_mean_distance: Option<f64>,
}

#[derive(Serialize)]
struct GapJson {
    visited: Vec<usize>,
    visited_mse: f64,
    unvisited_mse: Option<f64>,
}

#[derive(Serialize)]
struct MetricsJson {
    mean_accuracy: f64,
    recognize_accuracy: Option<f64>,
    classes: Vec<ClassJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gridworld: Option<GapJson>,
}

fn gridworld_screens() -> Result<ImageSet> {
    let rows: Vec<Tensor> = (0..gridworld::NUM_STATES)
        .map(gridworld::render_screen)
        .collect::<memnet::Result<_>>()?;
    Ok(ImageSet::new(
        Tensor::from_rows(&rows)?,
        (0..gridworld::NUM_STATES).collect(),
        gridworld::SCREEN_SIDE,
        gridworld::SCREEN_SIDE,
    )?)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dir = out_dir(&args.common, &file)?;
    let trainer = load_trainer(&args.checkpoint)?;
    let model = &trainer.model;
    let priors = model.class_priors()?;
    let samples = pick(args.samples, file.samples, 32);
    let seed = pick(args.common.seed, file.seed, DEFAULT_EVAL_SEED);
    let mut rng = Rng::new(seed);

    let dataset = match (args.dataset, &file.dataset) {
        (Some(d), _) => d,
        (None, Some(s)) => parse_dataset(s)?,
        (None, None) => bail!("no dataset selected (use --dataset or a config file)"),
    };

    let (real, gap) = match dataset {
        Dataset::Shapes => {
            ensure_classes(model, shapes::NUM_CLASSES)?;
            let held_out = pick(args.held_out, file.held_out, 50);
            (shapes::synth_dataset(held_out, &mut rng)?, None)
        }
        Dataset::Idx => {
            let set = load_idx_set(
                args.idx_images.or(file.idx_images.clone()),
                args.idx_labels.or(file.idx_labels.clone()),
                pick(args.downsample, file.downsample, 1),
            )?;
            let max_label = set.labels.iter().max().copied().unwrap_or(0);
            if max_label >= model.config().num_classes {
                bail!(
                    "dataset has label {max_label} but the model knows {} classes",
                    model.config().num_classes
                );
            }
            (set, None)
        }
        Dataset::Gridworld => {
            ensure_classes(model, gridworld::NUM_STATES)?;
            let memory = args
                .memory
                .ok_or_else(|| anyhow!("gridworld eval needs --memory for the visited set"))?;
            let mem = load_memory(&memory)?;
            let gap = gridworld_recall_gap(model, &priors, &mem.class_counts(), samples, &mut rng)?;
            (gridworld_screens()?, Some(gap))
        }
    };

    let report = eval_recall(model, &priors, &real, samples, &mut rng)?;
    let metrics = MetricsJson {
        mean_accuracy: report.mean_accuracy,
        recognize_accuracy: report.recognize_accuracy,
        classes: report
            .classes
            .iter()
            .map(|c| ClassJson {
                class_id: c.class_id,
                skipped: c.skipped,
                accuracy: c.accuracy,
                centroid_mse: c.centroid_mse,
                latent_mean_distance: c.latent_mean_distance,
            })
            .collect(),
        gridworld: gap.map(|g| GapJson {
            visited: g.visited,
            visited_mse: g.visited_mse,
            unvisited_mse: g.unvisited_mse,
        }),
    };
    let path = dir.join("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&metrics)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote {} (mean recall accuracy {:.3})",
        path.display(),
        metrics.mean_accuracy
    );
    if let Some(g) = &metrics.gridworld {
        println!(
            "gridworld: visited_mse {:.5}, unvisited_mse {}",
            g.visited_mse,
            g.unvisited_mse
                .map(|v| format!("{v:.5}"))
                .unwrap_or_else(|| "undefined (all states visited)".into())
        );
    }
    Ok(())
}

fn ensure_classes(model: &LongTermModel, expected: usize) -> Result<()> {
    if model.config().num_classes != expected {
        bail!(
            "checkpoint was trained with {} classes, dataset has {expected}",
            model.config().num_classes
        );
    }
    Ok(())
}

fn gradcheck_batch(config: &ModelConfig, rows: usize, rng: &mut Rng) -> Result<Batch> {
    let mut payloads = Tensor::zeros(vec![rows, config.input_dim]);
    for v in payloads.data_mut() {
        *v = rng.uniform();
    }
    let class_ids: Vec<usize> = (0..rows).map(|r| r % config.num_classes).collect();
    let keys = Tensor::from_rows(
        &class_ids
            .iter()
            .map(|&c| onehot(c, config.num_classes))
            .collect::<memnet::Result<Vec<_>>>()?,
    )?;
    Ok(Batch {
        payloads,
        class_ids,
        keys,
    })
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    let mut worst_per_group = vec![0.0f64; PARAM_NAMES.len()];
    let mut overall = 0.0f64;
    for variant in [Variant::TypeA, Variant::TypeB] {
        for seed in 0..args.seeds {
            let mut rng = Rng::new(seed);
            let config = ModelConfig {
                variant,
                input_dim: 12,
                root_dim: 8,
                latent_dim: 4,
                num_classes: 3,
                lambda1: 6.0,
                lambda2: 1.0,
            };
            let model = LongTermModel::new(config.clone(), &mut rng)?;
            let batch = gradcheck_batch(&config, args.batch, &mut rng)?;
            let eps = rng.sample_normal(vec![args.batch, config.latent_dim]);
            let report = model.loss_grad_check(&batch, &eps, args.coords, &mut rng)?;
            println!("{variant} seed={seed} max_rel_err={:.3e}", report.max);
            for (w, e) in worst_per_group.iter_mut().zip(&report.per_input) {
                *w = w.max(*e);
            }
            overall = overall.max(report.max);
        }
    }
    println!("\nper-parameter worst relative error:");
    for (name, err) in PARAM_NAMES.iter().zip(&worst_per_group) {
        println!("  {name:<16} {err:.3e}");
    }
    let pass = overall < GRADCHECK_TOLERANCE;
    println!(
        "\noverall max {overall:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}
