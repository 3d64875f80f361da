//! Training loop, evaluation metrics, and their configuration.

use crate::envs::gridworld;
use crate::envs::ImageSet;
use crate::error::{Error, Result};
use crate::long_term::{ClassPriorSet, LongTermModel, ModelConfig, Variant};
use crate::short_term::ShortTermMemory;
use crate::tensor::{Adam, AdamConfig, Rng, Tensor};

/// Everything a training run depends on. A config plus a memory snapshot
/// pins the run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub input_dim: usize,
    pub root_dim: usize,
    pub latent_dim: usize,
    pub num_classes: usize,
    pub adam: AdamConfig,
    pub capacity: usize,
}

impl TrainConfig {
    /// Defaults: 2000 steps, batch 32, seed 42, root 64, latent 16,
    /// lambda1 6, lambda2 1, Adam defaults, queue capacity 256.
    pub fn new(variant: Variant, input_dim: usize, num_classes: usize) -> Self {
        TrainConfig {
            variant,
            steps: 2000,
            batch_size: 32,
            seed: 42,
            lambda1: 6.0,
            lambda2: 1.0,
            input_dim,
            root_dim: 64,
            latent_dim: 16,
            num_classes,
            adam: AdamConfig::default(),
            capacity: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.capacity == 0 {
            return Err(Error::Contract {
                op: "TrainConfig",
                msg: "batch_size and capacity must be positive".into(),
            });
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            input_dim: self.input_dim,
            root_dim: self.root_dim,
            latent_dim: self.latent_dim,
            num_classes: self.num_classes,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }
}

/// Loss breakdown of one completed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
    pub root_mse: f64,
}

pub type TrainHistory = Vec<StepRecord>;

/// Model, optimizer, RNG and step counter bundled so a run can be
/// checkpointed and resumed bit-exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: LongTermModel,
    pub opt: Adam,
    pub rng: Rng,
    pub step: u64,
}

impl Trainer {
    /// Seeds the RNG and initializes the model from it.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let model = LongTermModel::new(cfg.model_config(), &mut rng)?;
        let opt = Adam::new(cfg.adam, &model.params());
        Ok(Trainer {
            cfg,
            model,
            opt,
            rng,
            step: 0,
        })
    }

    /// Rebuilds a trainer from checkpointed state without consuming any
    /// RNG draws.
    pub fn restore(
        cfg: TrainConfig,
        params: Vec<Tensor>,
        opt: Adam,
        rng: Rng,
        step: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut model = LongTermModel::zeros(cfg.model_config())?;
        model.set_params(params)?;
        let (m, v) = opt.moments();
        for ((p, m), v) in model.params().iter().zip(m).zip(v) {
            if p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(Error::dimension("Trainer::restore", p.shape(), m.shape()));
            }
        }
        Ok(Trainer {
            cfg,
            model,
            opt,
            rng,
            step,
        })
    }

    /// Runs `steps` updates: sample a batch, evaluate the loss graph,
    /// backprop, Adam step. Returns one record per step.
    pub fn run(&mut self, mem: &ShortTermMemory, steps: u64) -> Result<TrainHistory> {
        if mem.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let mut history = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let batch = mem.sample_batch(self.cfg.batch_size, &mut self.rng)?;
            let graph = self.model.total_loss(&batch, &mut self.rng)?;
            let terms = graph.terms;
            let grads = graph.param_grads()?;
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut params = self.model.params_mut();
            self.opt.step(&mut params, &grad_refs)?;
            self.step += 1;
            history.push(StepRecord {
                step: self.step,
                total: terms.total,
                kl: terms.kl,
                recon: terms.recon,
                root_mse: terms.root_mse,
            });
        }
        Ok(history)
    }
}

/// Convenience: build a trainer and run `cfg.steps` updates.
pub fn train(cfg: TrainConfig, mem: &ShortTermMemory) -> Result<(Trainer, TrainHistory)> {
    let mut trainer = Trainer::new(cfg)?;
    let steps = trainer.cfg.steps;
    let history = trainer.run(mem, steps)?;
    Ok((trainer, history))
}

/// Per-class recall quality against a real image set.
#[derive(Debug, Clone)]
pub struct ClassEval {
    pub class_id: usize,
    /// True when the class has no samples in the reference set.
    pub skipped: bool,
    /// Fraction of recalls landing on the own-class centroid.
    pub accuracy: f64,
    /// Mean per-pixel squared error of recalls to the own-class centroid.
    pub centroid_mse: f64,
    /// Type B only: distance of the mean posterior mean of real class
    /// samples to the class prior mean.
    pub latent_mean_distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub classes: Vec<ClassEval>,
    /// Mean recall accuracy over non-skipped classes.
    pub mean_accuracy: f64,
    /// Type B only: recognition accuracy over the whole reference set.
    pub recognize_accuracy: Option<f64>,
}

/// Generates `n_per_class` recalls per class and scores them against
/// nearest centroids of `real`. Classes absent from `real` are skipped.
pub fn eval_recall(
    model: &LongTermModel,
    priors: &ClassPriorSet,
    real: &ImageSet,
    n_per_class: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    let num_classes = model.config().num_classes;
    let centroids: Vec<Option<Tensor>> = (0..num_classes).map(|c| real.class_centroid(c)).collect();
    if centroids.iter().all(|c| c.is_none()) {
        return Err(Error::Contract {
            op: "eval_recall",
            msg: "reference set has no evaluated class".into(),
        });
    }

    let mut classes = Vec::with_capacity(num_classes);
    let mut acc_sum = 0.0;
    let mut acc_n = 0usize;
    for class_id in 0..num_classes {
        let Some(centroid) = &centroids[class_id] else {
            classes.push(ClassEval {
                class_id,
                skipped: true,
                accuracy: 0.0,
                centroid_mse: 0.0,
                latent_mean_distance: None,
            });
            continue;
        };
        let recalls = model.recall(priors, class_id, n_per_class, rng)?;
        let mut hits = 0usize;
        let mut mse_sum = 0.0;
        for r in 0..recalls.rows() {
            let row = Tensor::vector(recalls.row(r).to_vec());
            if nearest_centroid(&row, &centroids) == Some(class_id) {
                hits += 1;
            }
            mse_sum += row.mse(centroid)?;
        }
        let n = recalls.rows().max(1) as f64;
        let accuracy = hits as f64 / n;
        let latent_mean_distance = match model.variant() {
            Variant::TypeB => Some(latent_mean_distance(model, priors, real, class_id)?),
            Variant::TypeA => None,
        };
        acc_sum += accuracy;
        acc_n += 1;
        classes.push(ClassEval {
            class_id,
            skipped: false,
            accuracy,
            centroid_mse: mse_sum / n,
            latent_mean_distance,
        });
    }

    let recognize_accuracy = match model.variant() {
        Variant::TypeB => Some(recognize_accuracy(model, priors, real)?),
        Variant::TypeA => None,
    };
    Ok(EvalReport {
        classes,
        mean_accuracy: acc_sum / acc_n.max(1) as f64,
        recognize_accuracy,
    })
}

/// Index of the closest available centroid; ties go to the lowest class id.
pub fn nearest_centroid(image: &Tensor, centroids: &[Option<Tensor>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, centroid) in centroids.iter().enumerate() {
        let Some(centroid) = centroid else { continue };
        let d = image.l2_distance(centroid).ok()?;
        if best.map(|(_, bd)| d < bd).unwrap_or(true) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c)
}

/// `|| mean_mu(real class samples) - lambda1 * c'_i ||_2`.
fn latent_mean_distance(
    model: &LongTermModel,
    priors: &ClassPriorSet,
    real: &ImageSet,
    class_id: usize,
) -> Result<f64> {
    let idx = real.class_indices(class_id);
    let rows: Vec<Tensor> = idx
        .iter()
        .map(|&i| Tensor::vector(real.image(i).to_vec()))
        .collect();
    let x = Tensor::from_rows(&rows)?;
    let h = model.encode_features(&x)?;
    let posterior = model.posterior(None, &h)?;
    let l = model.config().latent_dim;
    let mut mean = vec![0.0; l];
    for r in 0..posterior.mu.rows() {
        for (m, v) in mean.iter_mut().zip(posterior.mu.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= posterior.mu.rows() as f64;
    }
    Tensor::vector(mean).l2_distance(&Tensor::vector(priors.mean(class_id)?.to_vec()))
}

/// Fraction of reference images whose recognized class matches the label.
pub fn recognize_accuracy(
    model: &LongTermModel,
    priors: &ClassPriorSet,
    real: &ImageSet,
) -> Result<f64> {
    if real.is_empty() {
        return Err(Error::Contract {
            op: "recognize_accuracy",
            msg: "empty reference set".into(),
        });
    }
    let mut hits = 0usize;
    for i in 0..real.len() {
        let x = Tensor::vector(real.image(i).to_vec());
        if model.recognize(priors, &x)? == real.labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / real.len() as f64)
}

/// Recall error split by data availability.
#[derive(Debug, Clone)]
pub struct RecallGap {
    /// States whose queues held data during training.
    pub visited: Vec<usize>,
    /// Mean per-pixel MSE of recalls vs the true screen, over visited states.
    pub visited_mse: f64,
    /// Same over unvisited states; `None` when every state was visited.
    pub unvisited_mse: Option<f64>,
}

/// Compares per-state recalls against the true rendered screens, averaged
/// separately over states with non-empty vs empty queues (`counts`).
pub fn gridworld_recall_gap(
    model: &LongTermModel,
    priors: &ClassPriorSet,
    counts: &[usize],
    n_per_state: usize,
    rng: &mut Rng,
) -> Result<RecallGap> {
    if counts.len() != gridworld::NUM_STATES || model.config().num_classes != gridworld::NUM_STATES
    {
        return Err(Error::Contract {
            op: "gridworld_recall_gap",
            msg: format!(
                "need {} states, got {} counts and {} classes",
                gridworld::NUM_STATES,
                counts.len(),
                model.config().num_classes
            ),
        });
    }
    let mut visited = Vec::new();
    let mut visited_sum = 0.0;
    let mut unvisited_sum = 0.0;
    let mut unvisited_n = 0usize;
    for (state, &count) in counts.iter().enumerate() {
        let target = gridworld::render_screen(state)?;
        let recalls = model.recall(priors, state, n_per_state, rng)?;
        let mut mse = 0.0;
        for r in 0..recalls.rows() {
            mse += Tensor::vector(recalls.row(r).to_vec()).mse(&target)?;
        }
        mse /= recalls.rows().max(1) as f64;
        if count > 0 {
            visited.push(state);
            visited_sum += mse;
        } else {
            unvisited_sum += mse;
            unvisited_n += 1;
        }
    }
    if visited.is_empty() {
        return Err(Error::EmptyMemory);
    }
    Ok(RecallGap {
        visited_mse: visited_sum / visited.len() as f64,
        unvisited_mse: (unvisited_n > 0).then(|| unvisited_sum / unvisited_n as f64),
        visited,
    })
}
