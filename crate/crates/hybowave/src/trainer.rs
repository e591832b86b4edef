//! Full-batch training with Adam and early stopping on validation AUC,
//! finite-difference gradient verification, and the ablation driver.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoder::{draw_dropout_mask, EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::graph::{sample_training_negatives, EdgeSplit, Graph};
use crate::manifold::Activation;
use crate::metrics::{compute_auc, Metrics};
use crate::model::Model;
use crate::objective::ContrastiveConfig;
use crate::optim::{Adam, AdamConfig};
use crate::stream::{substream, TAG_DROPOUT};
use crate::wavelet::ScaleSet;

/// All run hyperparameters. Serializes flat so configuration files and
/// provenance blocks stay human-diffable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub curvature: f64,
    pub activation: Activation,
    pub dropout: f64,
    pub temperature: f64,
    /// Weight of the contrastive term in the total loss.
    pub contrastive_weight: f64,
    pub scales: Vec<usize>,
    pub use_wavelet: bool,
    pub use_contrastive: bool,
    pub encoder: EncoderKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 2000,
            patience: 100,
            seed: 42,
            input_dim: 128,
            hidden_dim: 16,
            num_layers: 2,
            curvature: 1.0,
            activation: Activation::Relu,
            dropout: 0.2,
            temperature: 0.2,
            contrastive_weight: 1.0,
            scales: vec![1, 2, 3, 4],
            use_wavelet: true,
            use_contrastive: true,
            encoder: EncoderKind::LorentzGnn,
        }
    }
}

impl TrainConfig {
    /// Rejects out-of-range settings. A zero learning rate is accepted so
    /// frozen runs can exercise the early-stopping machinery.
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Contract(format!(
                "learning_rate must be a nonnegative finite real, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::Contract("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Contract("max_epochs must be >= 1".into()));
        }
        if self.temperature <= 0.0 || self.temperature.is_nan() {
            return Err(Error::Contract(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !self.contrastive_weight.is_finite() {
            return Err(Error::Contract("contrastive_weight must be finite".into()));
        }
        self.encoder_config().validate()?;
        ScaleSet::new(self.scales.clone())?;
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            curvature: self.curvature,
            activation: self.activation,
            dropout_rate: self.dropout,
            seed: self.seed,
        }
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.temperature,
            view_dropout: self.dropout,
        }
    }
}

fn epoch_masks(
    model: &Model,
    seed: u64,
    epoch: u64,
) -> (Option<Array2<f64>>, Option<Array2<f64>>) {
    let draw = |index: u64| {
        if model.dropout_rate() > 0.0 {
            let mut rng = substream(seed, TAG_DROPOUT, index);
            Some(draw_dropout_mask(
                model.num_nodes(),
                model.input_dim(),
                model.dropout_rate(),
                &mut rng,
            ))
        } else {
            None
        }
    };
    let mask1 = draw(2 * epoch);
    let mask2 = if model.uses_contrastive() {
        draw(2 * epoch + 1)
    } else {
        None
    };
    (mask1, mask2)
}

/// Trains on the split's positives with fresh per-epoch negatives, keeps the
/// parameters with the best validation AUC, and reports test metrics from
/// that checkpoint. Single-threaded and bit-reproducible for a fixed seed.
pub fn train(g: &Graph, split: &EdgeSplit, cfg: &TrainConfig) -> Result<(Checkpoint, Metrics)> {
    cfg.validate()?;
    if split.train_pos.is_empty()
        || split.val_pos.is_empty()
        || split.val_neg.is_empty()
        || split.test_pos.is_empty()
        || split.test_neg.is_empty()
    {
        return Err(Error::Contract(
            "train/val/test partitions must all be nonempty".into(),
        ));
    }
    let mut model = Model::new(g, cfg)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.learning_rate));
    let mut losses = Vec::new();
    let mut best: Option<(f64, usize, crate::model::ModelParams)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let negatives = sample_training_negatives(g, split.train_pos.len(), cfg.seed, epoch as u64)?;
        let (mask1, mask2) = epoch_masks(&model, cfg.seed, epoch as u64);
        let (loss, grads) =
            model.loss_and_grads(&split.train_pos, &negatives, mask1.as_ref(), mask2.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        adam.step(model.adam_tensors(&grads))?;
        losses.push(loss);

        let embeddings = model.embeddings();
        let val_auc = compute_auc(
            &model.score_pairs(&embeddings, &split.val_pos),
            &model.score_pairs(&embeddings, &split.val_neg),
        )?;
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_auc > *b);
        if improved {
            best = Some((val_auc, epoch, model.params.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    let (best_val_auc, best_epoch, best_params) = best.expect("at least one epoch ran");
    model.params = best_params;
    let embeddings = model.embeddings();
    let (auc, aupr) = model.evaluate(&embeddings, &split.test_pos, &split.test_neg)?;
    let metrics = Metrics {
        auc,
        aupr,
        best_epoch,
        losses,
    };
    let checkpoint = Checkpoint::from_model(g, cfg, &model, best_val_auc, best_epoch, &split.train_pos);
    Ok((checkpoint, metrics))
}

/// Rebuilds a model from a checkpoint and evaluates it on the given pairs.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    pos: &[(u32, u32)],
    neg: &[(u32, u32)],
) -> Result<(f64, f64)> {
    let (_, model) = checkpoint.rebuild()?;
    let embeddings = model.embeddings();
    model.evaluate(&embeddings, pos, neg)
}

/// Per-tensor outcome of the finite-difference gradient check.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Maximum relative error per tensor, in tensor order.
    pub tensors: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central finite-difference step for gradient verification.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Pass threshold on the per-entry relative error.
pub const GRAD_CHECK_TOL: f64 = 1e-4;

/// Verifies analytic gradients of the full training loss against central
/// finite differences on a small probe instance (at most 10 nodes, tangent
/// width 4). Dropout masks and negatives are frozen so the loss is a
/// deterministic function of the parameters.
pub fn verify_gradients(cfg: &TrainConfig, probe_nodes: usize) -> Result<GradCheckReport> {
    gradient_check_impl(cfg, probe_nodes, None)
}

pub(crate) fn gradient_check_impl(
    cfg: &TrainConfig,
    probe_nodes: usize,
    corrupt: Option<&str>,
) -> Result<GradCheckReport> {
    if !(4..=10).contains(&probe_nodes) {
        return Err(Error::Contract(format!(
            "probe size must be between 4 and 10 nodes, got {probe_nodes}"
        )));
    }
    // ring plus one chord so degrees are irregular
    let n = probe_nodes as u32;
    let mut edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    edges.push((0, n - 1));
    let chord = (0u32, n / 2);
    if !edges.contains(&chord) {
        edges.push(chord);
    }
    let g = Graph::from_index_edges(probe_nodes, &edges)?;

    let probe_cfg = TrainConfig {
        input_dim: 5,
        hidden_dim: 4,
        num_layers: cfg.num_layers.clamp(1, 2),
        scales: cfg.scales.clone(),
        ..cfg.clone()
    };
    probe_cfg.validate()?;
    let mut model = Model::new(&g, &probe_cfg)?;

    let pos: Vec<(u32, u32)> = g.edges()[..3].to_vec();
    let mut neg = Vec::new();
    'outer: for a in 0..n {
        for b in (a + 1)..n {
            if !g.has_edge(a, b) {
                neg.push((a, b));
                if neg.len() == 3 {
                    break 'outer;
                }
            }
        }
    }
    let (mask1, mask2) = epoch_masks(&model, probe_cfg.seed, 0);

    let (_, grads) = model.loss_and_grads(&pos, &neg, mask1.as_ref(), mask2.as_ref())?;
    let names = model.tensor_names();
    let mut tensors = Vec::with_capacity(names.len());
    let mut max_rel = 0.0f64;
    for name in &names {
        let analytic: Vec<f64> = grads
            .tensor(name)
            .iter()
            .map(|&v| if corrupt == Some(name.as_str()) { v * 1.1 } else { v })
            .collect();
        let mut tensor_max = 0.0f64;
        for idx in 0..analytic.len() {
            model.with_tensor_mut(name, |t| t[idx] += GRAD_CHECK_STEP);
            let up = model.loss_only(&pos, &neg, mask1.as_ref(), mask2.as_ref())?;
            model.with_tensor_mut(name, |t| t[idx] -= 2.0 * GRAD_CHECK_STEP);
            let down = model.loss_only(&pos, &neg, mask1.as_ref(), mask2.as_ref())?;
            model.with_tensor_mut(name, |t| t[idx] += GRAD_CHECK_STEP);
            let fd = (up - down) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic[idx];
            // relative error with an absolute floor so finite-difference noise
            // on near-zero entries does not dominate
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_CHECK_TOL);
            tensor_max = tensor_max.max(rel);
        }
        max_rel = max_rel.max(tensor_max);
        tensors.push((name.clone(), tensor_max));
    }
    Ok(GradCheckReport {
        tensors,
        max_rel_error: max_rel,
        tolerance: GRAD_CHECK_TOL,
        passed: max_rel <= GRAD_CHECK_TOL,
    })
}

/// One ablation cell: encoder kind with the wavelet and contrastive modules
/// jointly enabled or disabled.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub encoder: EncoderKind,
    pub wavelet_and_contrastive: bool,
    pub auc: f64,
    pub aupr: f64,
}

/// Runs the 3 x 2 ablation grid with a shared seed and split. The
/// `(lorentz_gnn, true)` cell is exactly a plain [`train`] run.
pub fn ablate(g: &Graph, split: &EdgeSplit, base_cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(6);
    for kind in [
        EncoderKind::LorentzGnn,
        EncoderKind::EuclideanGnn,
        EncoderKind::LorentzShallow,
    ] {
        for aux in [true, false] {
            let cfg = TrainConfig {
                encoder: kind,
                use_wavelet: aux,
                use_contrastive: aux,
                ..base_cfg.clone()
            };
            let (_, metrics) = train(g, split, &cfg)?;
            rows.push(AblationRow {
                encoder: kind,
                wavelet_and_contrastive: aux,
                auc: metrics.auc,
                aupr: metrics.aupr,
            });
        }
    }
    Ok(rows)
}
