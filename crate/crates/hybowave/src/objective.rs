//! Contrastive view alignment, distance-based link scoring, probability
//! decoding, and total loss assembly.
//!
//! Two stochastic views of the node embeddings are aligned with a
//! one-directional InfoNCE loss over their cosine similarity matrix; link
//! probabilities come from a Fermi-Dirac decoder applied to squared hyperbolic
//! distances. The total training loss is mean-reduced binary cross-entropy
//! over positive and negative pairs plus `lambda` times the contrastive term.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{sqdist, Curvature, LorentzPoints};

/// Probabilities are clipped to `[EPS, 1-EPS]` inside the cross-entropy.
pub const PROB_CLIP_EPS: f64 = 1e-7;

/// Contrastive-alignment hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// Temperature scaling the cosine similarities.
    pub temperature: f64,
    /// Dropout rate used to generate the two views.
    pub view_dropout: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.2,
            view_dropout: 0.2,
        }
    }
}

/// Fermi-Dirac decoder parameters plus the contrastive mixing weight.
///
/// `p(link) = 1 / (1 + exp((sqdist - offset)/sharpness))`. The sharpness is
/// stored through a softplus reparameterization so it stays positive under
/// unconstrained optimization. `contrastive_weight` is a fixed hyperparameter,
/// not a learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderParams {
    /// Distance offset `r` (learnable).
    pub offset: f64,
    /// Raw sharpness parameter; the effective `t` is `softplus(raw)`.
    pub sharpness_raw: f64,
    /// Weight `lambda` on the contrastive term of the total loss.
    pub contrastive_weight: f64,
}

impl Default for DecoderParams {
    fn default() -> Self {
        DecoderParams {
            offset: 2.0,
            // softplus^{-1}(1) so the effective sharpness starts at 1.0
            sharpness_raw: (std::f64::consts::E - 1.0).ln(),
            contrastive_weight: 1.0,
        }
    }
}

impl DecoderParams {
    /// Effective sharpness `t = softplus(raw) > 0`.
    pub fn sharpness(&self) -> f64 {
        softplus(self.sharpness_raw)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Divides each row by its Euclidean norm. Errors on a zero row.
pub fn l2_normalize_rows(z: &Array2<f64>) -> Result<Array2<f64>> {
    let (out, _) = normalize_with_norms(z)?;
    Ok(out)
}

fn normalize_with_norms(z: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Contract(format!(
                "cannot L2-normalize zero row {i}"
            )));
        }
        row.mapv_inplace(|v| v / norm);
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Norms at or below this are treated as exact zeros inside the contrastive
/// loss (a ReLU stack can zero a whole tangent row).
const ZERO_ROW_NORM: f64 = 1e-30;

/// Like [`normalize_with_norms`] but zero rows pass through unchanged with a
/// zero norm marker instead of erroring. A zero view has no direction to
/// align: its similarities are all zero, its loss term is the constant
/// `ln N`, and it receives no gradient (the ReLU subgradient convention).
fn normalize_guarded(z: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.nrows());
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > ZERO_ROW_NORM {
            row.mapv_inplace(|v| v / norm);
            norms.push(norm);
        } else {
            norms.push(0.0);
        }
    }
    (out, norms)
}

/// Temperature-scaled similarity matrix `S_ij = (z1_i . z2_j) / tau`.
/// Rows are expected to be L2-normalized already.
pub fn similarity_matrix(z1: &Array2<f64>, z2: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if z1.dim() != z2.dim() {
        return Err(Error::Contract(format!(
            "similarity_matrix shape mismatch: {:?} vs {:?}",
            z1.dim(),
            z2.dim()
        )));
    }
    if tau <= 0.0 || tau.is_nan() {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    Ok(z1.dot(&z2.t()) / tau)
}

/// One-directional InfoNCE over two views of the same node set:
/// `L = -(1/N) sum_i log(exp(S_ii) / sum_j exp(S_ij))`, computed with
/// log-sum-exp stabilization. Rows are L2-normalized internally; exactly-zero
/// rows contribute a constant `ln N` term.
pub fn info_nce_loss(view1: &Array2<f64>, view2: &Array2<f64>, tau: f64) -> Result<f64> {
    let (z1, _) = normalize_guarded(view1);
    let (z2, _) = normalize_guarded(view2);
    let s = similarity_matrix(&z1, &z2, tau)?;
    let n = s.nrows();
    let mut loss = 0.0;
    for i in 0..n {
        let row = s.row(i);
        loss += log_sum_exp(row) - row[i];
    }
    Ok(loss / n as f64)
}

fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}

/// InfoNCE loss together with gradients with respect to both raw
/// (unnormalized) views.
pub(crate) fn info_nce_with_grads(
    view1: &Array2<f64>,
    view2: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (z1, n1) = normalize_guarded(view1);
    let (z2, n2) = normalize_guarded(view2);
    let s = similarity_matrix(&z1, &z2, tau)?;
    let n = s.nrows();
    let mut loss = 0.0;
    // dL/dS = (softmax(S, rows) - I) / N
    let mut gs = Array2::zeros((n, n));
    for i in 0..n {
        let row = s.row(i);
        let lse = log_sum_exp(row);
        loss += lse - row[i];
        for j in 0..n {
            let p = (row[j] - lse).exp();
            gs[[i, j]] = (p - if i == j { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    loss /= n as f64;
    let g_z1 = gs.dot(&z2) / tau;
    let g_z2 = gs.t().dot(&z1) / tau;
    let g_t1 = normalize_vjp(&z1, &n1, &g_z1);
    let g_t2 = normalize_vjp(&z2, &n2, &g_z2);
    Ok((loss, g_t1, g_t2))
}

/// Backward of row normalization `y = x/||x||`: `g_x = (g - (g.y) y) / ||x||`.
/// Rows flagged with a zero norm receive no gradient.
fn normalize_vjp(y: &Array2<f64>, norms: &[f64], g: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(y.dim());
    for i in 0..y.nrows() {
        if norms[i] == 0.0 {
            continue;
        }
        let yrow = y.row(i);
        let grow = g.row(i);
        let proj = grow.dot(&yrow);
        for j in 0..y.ncols() {
            out[[i, j]] = (grow[j] - proj * yrow[j]) / norms[i];
        }
    }
    out
}

/// Link score between two manifold rows: the negated squared geodesic
/// distance, so higher means more likely interaction.
pub fn link_score(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, c: Curvature) -> f64 {
    -sqdist(x, y, c)
}

/// Fermi-Dirac probability of a link given a squared distance.
pub fn link_probability(sqd: f64, params: &DecoderParams) -> f64 {
    sigmoid((params.offset - sqd) / params.sharpness())
}

/// Cross-entropy terms and gradients computed from raw squared distances.
/// The first `n_pos` entries are positives, the rest negatives.
pub(crate) struct BceGrads {
    pub loss: f64,
    pub g_sqd: Vec<f64>,
    pub g_offset: f64,
    pub g_sharpness_raw: f64,
}

pub(crate) fn bce_from_sqdists(sqd: &[f64], n_pos: usize, decoder: &DecoderParams) -> BceGrads {
    let m = sqd.len() as f64;
    let t = decoder.sharpness();
    // p < eps for positives (z below z_lo) and 1-p < eps for negatives
    // (z above -z_lo) saturate the clipped log; their gradient is zero.
    let z_lo = (PROB_CLIP_EPS / (1.0 - PROB_CLIP_EPS)).ln();
    let mut loss = 0.0;
    let mut g_sqd = Vec::with_capacity(sqd.len());
    let mut g_offset = 0.0;
    let mut g_t = 0.0;
    for (k, &d) in sqd.iter().enumerate() {
        let z = (decoder.offset - d) / t;
        let positive = k < n_pos;
        let (term, dz) = if positive {
            if z <= z_lo {
                (-(PROB_CLIP_EPS.ln()), 0.0)
            } else {
                (softplus(-z), sigmoid(z) - 1.0)
            }
        } else if z >= -z_lo {
            (-(PROB_CLIP_EPS.ln()), 0.0)
        } else {
            (softplus(z), sigmoid(z))
        };
        loss += term;
        let dl_dz = dz / m;
        g_sqd.push(-dl_dz / t);
        g_offset += dl_dz / t;
        g_t += dl_dz * (-z / t);
    }
    BceGrads {
        loss: loss / m,
        g_sqd,
        g_offset,
        g_sharpness_raw: g_t * sigmoid(decoder.sharpness_raw),
    }
}

/// Total training loss: mean binary cross-entropy of decoded link
/// probabilities over `pos + neg` pairs, plus `lambda` times the InfoNCE
/// alignment of the two views (when provided).
pub fn total_loss(
    embeddings: &LorentzPoints,
    pos: &[(u32, u32)],
    neg: &[(u32, u32)],
    views: Option<(&Array2<f64>, &Array2<f64>)>,
    decoder: &DecoderParams,
    contrastive: &ContrastiveConfig,
) -> Result<f64> {
    if pos.is_empty() {
        return Err(Error::Contract("total_loss needs a nonempty positive set".into()));
    }
    let c = embeddings.curvature();
    let mut sqd = Vec::with_capacity(pos.len() + neg.len());
    for &(a, b) in pos.iter().chain(neg.iter()) {
        sqd.push(sqdist(
            embeddings.row(a as usize),
            embeddings.row(b as usize),
            c,
        ));
    }
    let bce = bce_from_sqdists(&sqd, pos.len(), decoder);
    let mut loss = bce.loss;
    if decoder.contrastive_weight != 0.0 {
        if let Some((v1, v2)) = views {
            loss += decoder.contrastive_weight * info_nce_loss(v1, v2, contrastive.temperature)?;
        }
    }
    Ok(loss)
}
