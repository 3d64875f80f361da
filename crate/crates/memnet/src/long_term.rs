//! Long-term generative memory.
//!
//! Two variants share one architecture (feature codec, posterior head, root
//! decoder):
//!
//! * Type A conditions the posterior and the root decoder on the class
//!   one-hot key and regularizes toward `N(0, I)`; recall decodes
//!   `z ~ N(0, I)` under the requested condition.
//! * Type B is unconditional; each class owns the prior `N(lambda1 * c'_i, I)`
//!   whose mean is a scaled one-hot, zero-padded up to the latent width.
//!   Class information reaches the network only through the KL pull toward
//!   that mean, which is what makes the posterior mean usable for
//!   recognition, and recall samples directly from the class prior.
//!
//! The loss is `KL + BCE + lambda2 * MSE(h_root, h_root_hat)` in both cases.

use crate::error::{Error, Result};
use crate::short_term::{onehot, Batch};
use crate::tensor::{GradCheckReport, NodeId, ReduceAxis, Rng, Tape, Tensor};

/// Sigmoid outputs are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

const ENC_HIDDEN1: usize = 256;
const ENC_HIDDEN2: usize = 128;
const HEAD_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    TypeA,
    TypeB,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::TypeA => write!(f, "type_a"),
            Variant::TypeB => write!(f, "type_b"),
        }
    }
}

/// Parameters of the scaled, zero-padded one-hot construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaHotConfig {
    pub num_classes: usize,
    pub lambda1: f64,
    pub padded_dim: usize,
}

impl LambdaHotConfig {
    pub fn new(num_classes: usize, lambda1: f64, padded_dim: usize) -> Result<Self> {
        if num_classes == 0 || lambda1 <= 0.0 || padded_dim < num_classes {
            return Err(Error::Contract {
                op: "LambdaHotConfig",
                msg: format!(
                    "need num_classes > 0, lambda1 > 0, padded_dim >= num_classes; \
                     got {num_classes}, {lambda1}, {padded_dim}"
                ),
            });
        }
        Ok(LambdaHotConfig {
            num_classes,
            lambda1,
            padded_dim,
        })
    }
}

/// `lambda1` at index `i`, zeros elsewhere including the padding tail.
pub fn lambda_hot(cfg: &LambdaHotConfig, i: usize) -> Result<Tensor> {
    if i >= cfg.num_classes {
        return Err(Error::IndexOutOfRange {
            what: "lambda_hot",
            index: i,
            len: cfg.num_classes,
        });
    }
    let mut t = Tensor::zeros(vec![cfg.padded_dim]);
    t.data_mut()[i] = cfg.lambda1;
    Ok(t)
}

/// Diagonal Gaussian `N(mu, diag(exp(logvar)))` over a batch.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub logvar: Tensor,
}

impl GaussianPosterior {
    /// `exp(logvar / 2)`, strictly positive by construction.
    pub fn std(&self) -> Tensor {
        Tensor::new(
            self.logvar.shape().to_vec(),
            self.logvar.data().iter().map(|v| (0.5 * v).exp()).collect(),
        )
        .expect("same shape")
    }
}

/// The long-term memory proper: one `N(lambda1 * c'_i, I)` per class, stored
/// as the `[num_classes, padded_dim]` matrix of means.
#[derive(Debug, Clone)]
pub struct ClassPriorSet {
    means: Tensor,
    lambda1: f64,
}

impl ClassPriorSet {
    pub fn new(cfg: &LambdaHotConfig) -> Result<Self> {
        let rows: Vec<Tensor> = (0..cfg.num_classes)
            .map(|i| lambda_hot(cfg, i))
            .collect::<Result<_>>()?;
        Ok(ClassPriorSet {
            means: Tensor::from_rows(&rows)?,
            lambda1: cfg.lambda1,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.shape()[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.means.shape()[1]
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Mean vector of class `i`.
    pub fn mean(&self, i: usize) -> Result<&[f64]> {
        if i >= self.num_classes() {
            return Err(Error::IndexOutOfRange {
                what: "class prior",
                index: i,
                len: self.num_classes(),
            });
        }
        Ok(self.means.row(i))
    }
}

/// Shape parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_dim: usize,
    pub root_dim: usize,
    pub latent_dim: usize,
    pub num_classes: usize,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ModelConfig {
    /// Defaults: root 64, latent 16, lambda1 6, lambda2 1.
    pub fn new(variant: Variant, input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            variant,
            input_dim,
            root_dim: 64,
            latent_dim: 16,
            num_classes,
            lambda1: 6.0,
            lambda2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.root_dim == 0
            || self.latent_dim == 0
            || self.num_classes == 0
            || self.lambda1 <= 0.0
        {
            return Err(Error::Contract {
                op: "ModelConfig",
                msg: format!("all dims must be positive and lambda1 > 0: {self:?}"),
            });
        }
        // The padded lambda-hot vector lives directly in latent space.
        if self.variant == Variant::TypeB && self.latent_dim < self.num_classes {
            return Err(Error::Contract {
                op: "ModelConfig",
                msg: format!(
                    "type B needs latent_dim >= num_classes, got {} < {}",
                    self.latent_dim, self.num_classes
                ),
            });
        }
        Ok(())
    }

    /// The lambda-hot construction implied by this model: padded to the
    /// latent width so prior means need no truncation.
    pub fn lambda_hot_config(&self) -> Result<LambdaHotConfig> {
        LambdaHotConfig::new(self.num_classes, self.lambda1, self.latent_dim)
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: Tensor,
    b: Tensor,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: Tensor::zeros(vec![fan_in, fan_out]),
            b: Tensor::zeros(vec![fan_out]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
            .collect();
        Linear {
            w: Tensor::new(vec![fan_in, fan_out], data).expect("sized above"),
            b: Tensor::zeros(vec![fan_out]),
        }
    }
}

struct LayerIds {
    w: NodeId,
    b: NodeId,
}

/// Leaf ids of all parameters on one tape, in `PARAM_NAMES` order.
struct GraphIds {
    layers: Vec<LayerIds>,
}

impl GraphIds {
    fn from_slice(ids: &[NodeId]) -> Self {
        GraphIds {
            layers: ids
                .chunks(2)
                .map(|c| LayerIds { w: c[0], b: c[1] })
                .collect(),
        }
    }
}

// Layer indices into GraphIds / params order.
const L_ENC1: usize = 0;
const L_ENC2: usize = 1;
const L_ENC3: usize = 2;
const L_POST_H: usize = 3;
const L_POST_MU: usize = 4;
const L_POST_LOGVAR: usize = 5;
const L_DEC_H: usize = 6;
const L_DEC_OUT: usize = 7;
const L_FEAT1: usize = 8;
const L_FEAT2: usize = 9;
const L_FEAT3: usize = 10;

/// Checkpoint names of the parameter tensors, in `params()` order.
pub const PARAM_NAMES: [&str; 22] = [
    "enc1.w",
    "enc1.b",
    "enc2.w",
    "enc2.b",
    "enc3.w",
    "enc3.b",
    "post_h.w",
    "post_h.b",
    "post_mu.w",
    "post_mu.b",
    "post_logvar.w",
    "post_logvar.b",
    "dec_h.w",
    "dec_h.b",
    "dec_out.w",
    "dec_out.b",
    "feat1.w",
    "feat1.b",
    "feat2.w",
    "feat2.b",
    "feat3.w",
    "feat3.b",
];

/// Scalar values of the three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
    pub root_mse: f64,
}

/// A recorded loss evaluation: the tape, the scalar root, and the leaf ids
/// of the parameters so gradients can be pulled out in `params()` order.
pub struct LossGraph {
    pub tape: Tape,
    pub root: NodeId,
    pub terms: LossTerms,
    param_ids: Vec<NodeId>,
}

impl LossGraph {
    /// Runs backward and returns one gradient per parameter tensor.
    pub fn param_grads(mut self) -> Result<Vec<Tensor>> {
        let grads = self.tape.backward(self.root)?;
        Ok(self
            .param_ids
            .iter()
            .map(|id| grads.get(*id).clone())
            .collect())
    }
}

/// Feature codec plus posterior and root decoder, in either variant.
#[derive(Debug, Clone)]
pub struct LongTermModel {
    config: ModelConfig,
    layers: Vec<Linear>,
}

impl LongTermModel {
    /// Seeded Glorot init. Weight draws happen in `PARAM_NAMES` order.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let shapes = Self::layer_shapes(&config);
        let layers = shapes
            .iter()
            .map(|&(i, o)| Linear::init(i, o, rng))
            .collect();
        Ok(LongTermModel { config, layers })
    }

    /// All-zero parameters; handy for tests of the zero-network fixed points.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = Self::layer_shapes(&config)
            .iter()
            .map(|&(i, o)| Linear::zeros(i, o))
            .collect();
        Ok(LongTermModel { config, layers })
    }

    fn layer_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
        let d = config.input_dim;
        let r = config.root_dim;
        let l = config.latent_dim;
        let cond = match config.variant {
            Variant::TypeA => config.num_classes,
            Variant::TypeB => 0,
        };
        vec![
            (d, ENC_HIDDEN1),
            (ENC_HIDDEN1, ENC_HIDDEN2),
            (ENC_HIDDEN2, r),
            (cond + r, HEAD_HIDDEN),
            (HEAD_HIDDEN, l),
            (HEAD_HIDDEN, l),
            (cond + l, HEAD_HIDDEN),
            (HEAD_HIDDEN, r),
            (r, ENC_HIDDEN2),
            (ENC_HIDDEN2, ENC_HIDDEN1),
            (ENC_HIDDEN1, d),
        ]
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Parameter tensors in `PARAM_NAMES` order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Replaces all parameters (checkpoint restore); shapes must match.
    pub fn set_params(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != PARAM_NAMES.len() {
            return Err(Error::Contract {
                op: "set_params",
                msg: format!(
                    "expected {} tensors, got {}",
                    PARAM_NAMES.len(),
                    values.len()
                ),
            });
        }
        for (current, new) in self.params_mut().into_iter().zip(values) {
            if current.shape() != new.shape() {
                return Err(Error::dimension("set_params", current.shape(), new.shape()));
            }
            *current = new;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    /// Class priors implied by this model's config.
    pub fn class_priors(&self) -> Result<ClassPriorSet> {
        ClassPriorSet::new(&self.config.lambda_hot_config()?)
    }

    fn leaf_params(&self, tape: &mut Tape) -> GraphIds {
        GraphIds {
            layers: self
                .layers
                .iter()
                .map(|l| LayerIds {
                    w: tape.leaf(l.w.clone()),
                    b: tape.leaf(l.b.clone()),
                })
                .collect(),
        }
    }

    fn expect_cond(&self, op: &'static str, cond: Option<NodeId>) -> Result<Option<NodeId>> {
        match (self.config.variant, cond) {
            (Variant::TypeA, None) => {
                Err(Error::Variant(format!("{op}: type A requires a condition")))
            }
            (Variant::TypeB, Some(_)) => {
                Err(Error::Variant(format!("{op}: type B takes no condition")))
            }
            (_, c) => Ok(c),
        }
    }

    fn linear_graph(tape: &mut Tape, x: NodeId, layer: &LayerIds) -> Result<NodeId> {
        let xw = tape.matmul(x, layer.w)?;
        tape.add(xw, layer.b)
    }

    /// `x -> 256 -> relu -> 128 -> relu -> root` (linear output).
    fn encode_graph(&self, tape: &mut Tape, g: &GraphIds, x: NodeId) -> Result<NodeId> {
        let h = Self::linear_graph(tape, x, &g.layers[L_ENC1])?;
        let h = tape.relu(h);
        let h = Self::linear_graph(tape, h, &g.layers[L_ENC2])?;
        let h = tape.relu(h);
        Self::linear_graph(tape, h, &g.layers[L_ENC3])
    }

    /// `concat(cond?, h_root) -> 64 -> relu -> (mu, logvar)`.
    fn posterior_graph(
        &self,
        tape: &mut Tape,
        g: &GraphIds,
        cond: Option<NodeId>,
        h_root: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let input = match self.expect_cond("posterior", cond)? {
            Some(c) => tape.concat_cols(c, h_root)?,
            None => h_root,
        };
        let h = Self::linear_graph(tape, input, &g.layers[L_POST_H])?;
        let h = tape.relu(h);
        let mu = Self::linear_graph(tape, h, &g.layers[L_POST_MU])?;
        let logvar = Self::linear_graph(tape, h, &g.layers[L_POST_LOGVAR])?;
        Ok((mu, logvar))
    }

    /// `concat(cond?, z) -> 64 -> relu -> root` (linear output).
    fn decode_root_graph(
        &self,
        tape: &mut Tape,
        g: &GraphIds,
        cond: Option<NodeId>,
        z: NodeId,
    ) -> Result<NodeId> {
        let input = match self.expect_cond("decode_root", cond)? {
            Some(c) => tape.concat_cols(c, z)?,
            None => z,
        };
        let h = Self::linear_graph(tape, input, &g.layers[L_DEC_H])?;
        let h = tape.relu(h);
        Self::linear_graph(tape, h, &g.layers[L_DEC_OUT])
    }

    /// `root -> 128 -> relu -> 256 -> relu -> input -> sigmoid`.
    fn decode_features_graph(
        &self,
        tape: &mut Tape,
        g: &GraphIds,
        h_root: NodeId,
    ) -> Result<NodeId> {
        let h = Self::linear_graph(tape, h_root, &g.layers[L_FEAT1])?;
        let h = tape.relu(h);
        let h = Self::linear_graph(tape, h, &g.layers[L_FEAT2])?;
        let h = tape.relu(h);
        let out = Self::linear_graph(tape, h, &g.layers[L_FEAT3])?;
        Ok(tape.sigmoid(out))
    }

    fn run_graph(&self, f: impl FnOnce(&mut Tape, &GraphIds) -> Result<NodeId>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let g = self.leaf_params(&mut tape);
        let out = f(&mut tape, &g)?;
        Ok(tape.value(out).clone())
    }

    /// Deterministic feature encoding of a `[batch, input_dim]` tensor.
    pub fn encode_features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_width("encode_features", x, self.config.input_dim)?;
        self.run_graph(|tape, g| {
            let xid = tape.leaf(x.clone());
            self.encode_graph(tape, g, xid)
        })
    }

    /// Posterior over latents for encoded roots. Type A requires one-hot
    /// condition rows; type B forbids them.
    pub fn posterior(&self, cond: Option<&Tensor>, h_root: &Tensor) -> Result<GaussianPosterior> {
        self.check_width("posterior", h_root, self.config.root_dim)?;
        let mut tape = Tape::new();
        let g = self.leaf_params(&mut tape);
        let hid = tape.leaf(h_root.clone());
        let cid = cond.map(|c| tape.leaf(c.clone()));
        let (mu, logvar) = self.posterior_graph(&mut tape, &g, cid, hid)?;
        Ok(GaussianPosterior {
            mu: tape.value(mu).clone(),
            logvar: tape.value(logvar).clone(),
        })
    }

    /// Decodes latents back to root vectors.
    pub fn decode_root(&self, cond: Option<&Tensor>, z: &Tensor) -> Result<Tensor> {
        self.check_width("decode_root", z, self.config.latent_dim)?;
        self.run_graph(|tape, g| {
            let zid = tape.leaf(z.clone());
            let cid = cond.map(|c| tape.leaf(c.clone()));
            self.decode_root_graph(tape, g, cid, zid)
        })
    }

    /// Decodes root vectors to observations in `(0, 1)`.
    pub fn decode_features(&self, h_root: &Tensor) -> Result<Tensor> {
        self.check_width("decode_features", h_root, self.config.root_dim)?;
        self.run_graph(|tape, g| {
            let hid = tape.leaf(h_root.clone());
            self.decode_features_graph(tape, g, hid)
        })
    }

    fn check_width(&self, op: &'static str, t: &Tensor, want: usize) -> Result<()> {
        if t.shape().len() != 2 || t.shape()[1] != want {
            return Err(Error::dimension(op, &[t.rows(), want], t.shape()));
        }
        Ok(())
    }

    /// Per-sample prior mean rows for a batch: lambda-hot rows for type B,
    /// zeros (a standard-normal prior) for type A.
    fn prior_mean_rows(&self, class_ids: &[usize]) -> Result<Tensor> {
        match self.config.variant {
            Variant::TypeA => Ok(Tensor::zeros(vec![class_ids.len(), self.config.latent_dim])),
            Variant::TypeB => {
                let cfg = self.config.lambda_hot_config()?;
                let rows: Vec<Tensor> = class_ids
                    .iter()
                    .map(|&c| lambda_hot(&cfg, c))
                    .collect::<Result<_>>()?;
                Tensor::from_rows(&rows)
            }
        }
    }

    fn build_loss_graph(
        &self,
        tape: &mut Tape,
        g: &GraphIds,
        batch: &Batch,
        eps: &Tensor,
    ) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
        let rows = batch.payloads.rows();
        if rows == 0 {
            return Err(Error::Contract {
                op: "total_loss",
                msg: "empty batch".into(),
            });
        }
        self.check_width("total_loss", &batch.payloads, self.config.input_dim)?;
        if eps.shape() != [rows, self.config.latent_dim] {
            return Err(Error::dimension(
                "total_loss",
                &[rows, self.config.latent_dim],
                eps.shape(),
            ));
        }

        let x = tape.leaf(batch.payloads.clone());
        let cond = match self.config.variant {
            Variant::TypeA => Some(tape.leaf(batch.keys.clone())),
            Variant::TypeB => None,
        };
        let prior_means = tape.leaf(self.prior_mean_rows(&batch.class_ids)?);
        let eps_id = tape.leaf(eps.clone());

        let h_root = self.encode_graph(tape, g, x)?;
        let (mu, logvar) = self.posterior_graph(tape, g, cond, h_root)?;

        // z = mu + exp(logvar / 2) * eps
        let half = tape.scale(logvar, 0.5);
        let std = tape.exp(half);
        let noise = tape.mul(std, eps_id)?;
        let z = tape.add(mu, noise)?;

        let h_hat = self.decode_root_graph(tape, g, cond, z)?;
        let x_hat = self.decode_features_graph(tape, g, h_hat)?;

        // Reconstruction: per-sample BCE summed over pixels, mean over batch.
        let xc = tape.clamp(x_hat, BCE_CLAMP, 1.0 - BCE_CLAMP);
        let log_xc = tape.log(xc)?;
        let on = tape.mul(x, log_xc)?;
        let neg_xc = tape.scale(xc, -1.0);
        let one_minus_xc = tape.add_scalar(neg_xc, 1.0);
        let log_omxc = tape.log(one_minus_xc)?;
        let neg_x = tape.scale(x, -1.0);
        let one_minus_x = tape.add_scalar(neg_x, 1.0);
        let off = tape.mul(one_minus_x, log_omxc)?;
        let ll = tape.add(on, off)?;
        let ll_sum = tape.sum(ll, ReduceAxis::All)?;
        let recon = tape.scale(ll_sum, -1.0 / rows as f64);

        // KL(N(mu, var) || N(m, I)) = 0.5 * sum(var + (mu - m)^2 - 1 - logvar),
        // per sample, mean over batch.
        let diff = tape.sub(mu, prior_means)?;
        let diff_sq = tape.mul(diff, diff)?;
        let var = tape.exp(logvar);
        let s = tape.add(var, diff_sq)?;
        let s = tape.add_scalar(s, -1.0);
        let s = tape.sub(s, logvar)?;
        let kl_sum = tape.sum(s, ReduceAxis::All)?;
        let kl = tape.scale(kl_sum, 0.5 / rows as f64);

        // Root reconstruction penalty.
        let r = tape.sub(h_root, h_hat)?;
        let r_sq = tape.mul(r, r)?;
        let root_mse = tape.mean(r_sq, ReduceAxis::All)?;

        let partial = tape.add(kl, recon)?;
        let weighted = tape.scale(root_mse, self.config.lambda2);
        let total = tape.add(partial, weighted)?;
        Ok((total, kl, recon, root_mse))
    }

    /// Runs the full pipeline on a batch with explicit reparameterization
    /// noise and returns the recorded graph.
    pub fn total_loss_with_eps(&self, batch: &Batch, eps: &Tensor) -> Result<LossGraph> {
        let mut tape = Tape::new();
        let g = self.leaf_params(&mut tape);
        let param_ids: Vec<NodeId> = g.layers.iter().flat_map(|l| [l.w, l.b]).collect();
        let (total, kl, recon, root_mse) = self.build_loss_graph(&mut tape, &g, batch, eps)?;
        let terms = LossTerms {
            total: tape.value(total).item()?,
            kl: tape.value(kl).item()?,
            recon: tape.value(recon).item()?,
            root_mse: tape.value(root_mse).item()?,
        };
        Ok(LossGraph {
            tape,
            root: total,
            terms,
            param_ids,
        })
    }

    /// As [`total_loss_with_eps`](Self::total_loss_with_eps), drawing the
    /// noise from `rng`.
    pub fn total_loss(&self, batch: &Batch, rng: &mut Rng) -> Result<LossGraph> {
        let eps = rng.sample_normal(vec![batch.payloads.rows(), self.config.latent_dim]);
        self.total_loss_with_eps(batch, &eps)
    }

    /// Finite-difference check of the loss gradient, probing up to
    /// `coords_per_tensor` random coordinates per parameter tensor.
    pub fn loss_grad_check(
        &self,
        batch: &Batch,
        eps: &Tensor,
        coords_per_tensor: usize,
        rng: &mut Rng,
    ) -> Result<GradCheckReport> {
        let inputs: Vec<Tensor> = self.params().into_iter().cloned().collect();
        crate::tensor::grad_check_sampled(
            |tape, ids| {
                let g = GraphIds::from_slice(ids);
                let (total, _, _, _) = self.build_loss_graph(tape, &g, batch, eps)?;
                Ok(total)
            },
            &inputs,
            1e-5,
            coords_per_tensor,
            rng,
        )
    }

    /// Generates `n` observations of class `class_id`. Type B samples the
    /// class prior; type A samples `N(0, I)` under the one-hot condition.
    pub fn recall(
        &self,
        priors: &ClassPriorSet,
        class_id: usize,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        if class_id >= self.config.num_classes {
            return Err(Error::IndexOutOfRange {
                what: "recall class",
                index: class_id,
                len: self.config.num_classes,
            });
        }
        self.check_priors(priors)?;
        let l = self.config.latent_dim;
        let mut z = rng.sample_normal(vec![n, l]);
        let cond = match self.config.variant {
            Variant::TypeB => {
                let mean = priors.mean(class_id)?;
                for row in 0..n {
                    let data = z.data_mut();
                    for (j, m) in mean.iter().enumerate() {
                        data[row * l + j] += m;
                    }
                }
                None
            }
            Variant::TypeA => {
                let key = onehot(class_id, self.config.num_classes)?;
                let data: Vec<f64> = key
                    .data()
                    .iter()
                    .cycle()
                    .take(n * key.numel())
                    .cloned()
                    .collect();
                Some(Tensor::new(vec![n, key.numel()], data)?)
            }
        };
        let h_hat = self.decode_root(cond.as_ref(), &z)?;
        self.decode_features(&h_hat)
    }

    /// Type B recognition: the class whose prior mean is nearest to the
    /// posterior mean of `x` (ties broken by the lowest index).
    pub fn recognize(&self, priors: &ClassPriorSet, x: &Tensor) -> Result<usize> {
        if self.config.variant != Variant::TypeB {
            return Err(Error::Variant(
                "recognize: only type B stores class information in mu".into(),
            ));
        }
        self.check_priors(priors)?;
        let row = if x.shape().len() == 1 {
            Tensor::new(vec![1, x.numel()], x.data().to_vec())?
        } else {
            x.clone()
        };
        let h = self.encode_features(&row)?;
        let posterior = self.posterior(None, &h)?;
        let mu = posterior.mu.row(0);
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for i in 0..priors.num_classes() {
            let m = priors.mean(i)?;
            let dist: f64 = mu.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        Ok(best)
    }

    fn check_priors(&self, priors: &ClassPriorSet) -> Result<()> {
        if priors.num_classes() != self.config.num_classes
            || priors.latent_dim() != self.config.latent_dim
        {
            return Err(Error::Contract {
                op: "class_priors",
                msg: format!(
                    "prior set is {}x{}, model expects {}x{}",
                    priors.num_classes(),
                    priors.latent_dim(),
                    self.config.num_classes,
                    self.config.latent_dim
                ),
            });
        }
        Ok(())
    }
}

/// `z = mu + exp(logvar / 2) * eps`, elementwise.
pub fn reparameterize(posterior: &GaussianPosterior, eps: &Tensor) -> Result<Tensor> {
    if posterior.mu.shape() != eps.shape() || posterior.logvar.shape() != eps.shape() {
        return Err(Error::dimension(
            "reparameterize",
            posterior.mu.shape(),
            eps.shape(),
        ));
    }
    let data = posterior
        .mu
        .data()
        .iter()
        .zip(posterior.logvar.data())
        .zip(eps.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(eps.shape().to_vec(), data)
}

/// Closed-form `KL(N(mu, var) || N(m, I))` per sample, mean over the batch:
/// `0.5 * sum_d(var + (mu - m)^2 - 1 - logvar)`.
pub fn kl_to_prior(posterior: &GaussianPosterior, prior_mean: &Tensor) -> Result<f64> {
    let shape = posterior.mu.shape();
    if shape.len() != 2 || posterior.logvar.shape() != shape {
        return Err(Error::dimension(
            "kl_to_prior",
            shape,
            posterior.logvar.shape(),
        ));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if prior_mean.numel() != cols {
        return Err(Error::dimension("kl_to_prior", &[cols], prior_mean.shape()));
    }
    let mut total = 0.0;
    for r in 0..rows {
        let mu = posterior.mu.row(r);
        let lv = posterior.logvar.row(r);
        for d in 0..cols {
            let var = lv[d].exp();
            let diff = mu[d] - prior_mean.data()[d];
            total += var + diff * diff - 1.0 - lv[d];
        }
    }
    Ok(0.5 * total / rows as f64)
}

/// Per-sample binary cross-entropy summed over pixels, mean over the batch.
/// Predictions are clamped away from 0 and 1 so the result stays finite.
pub fn reconstruction_loss(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::dimension(
            "reconstruction_loss",
            x.shape(),
            x_hat.shape(),
        ));
    }
    let rows = if x.shape().len() == 2 {
        x.shape()[0]
    } else {
        1
    };
    let mut total = 0.0;
    for (&xi, &pi) in x.data().iter().zip(x_hat.data()) {
        let p = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= xi * p.ln() + (1.0 - xi) * (1.0 - p).ln();
    }
    Ok(total / rows as f64)
}
