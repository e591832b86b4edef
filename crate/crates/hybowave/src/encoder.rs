//! Graph-convolution encoder in the Lorentz model, with feature attention on
//! the input columns and additive attention across layer outputs.
//!
//! Each convolution works through the exp/log sandwich at the origin:
//! aggregate neighbor tangents with the self-loop mean `P = D^-1 (A + I)`,
//! apply the affine map `W t + b` in the tangent space, lift back with the
//! exponential map, then apply the hyperbolic activation. The encoder also
//! runs in a flat reference mode (identity manifold maps, Euclidean mean
//! aggregation) used by the ablation harness, and in a shallow mode where the
//! lifted feature table itself is the embedding.
//!
//! Every stage caches what its backward pass needs; gradients are chained
//! vector-Jacobian products, checked against finite differences in the
//! training harness.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{random_walk_matrix, Csr, Graph};
use crate::manifold::{
    self, exp_spatial, exp_spatial_vjp, log_spatial, log_spatial_vjp, Activation, Curvature,
    LorentzPoints,
};
use crate::stream::{substream, TAG_INIT};

/// Which encoder variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Full Lorentz graph convolution stack.
    #[default]
    LorentzGnn,
    /// Same architecture with identity manifold maps and Euclidean distances.
    EuclideanGnn,
    /// Feature table lifted to the manifold, no convolution layers.
    LorentzShallow,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::LorentzGnn => "lorentz_gnn",
            EncoderKind::EuclideanGnn => "euclidean_gnn",
            EncoderKind::LorentzShallow => "lorentz_shallow",
        }
    }
}

/// Point representation and distance used by the pipeline.
#[derive(Debug, Clone, Copy)]
pub enum Geometry {
    Lorentz(Curvature),
    Euclidean,
}

impl Geometry {
    pub fn ambient_dim(&self, d: usize) -> usize {
        match self {
            Geometry::Lorentz(_) => d + 1,
            Geometry::Euclidean => d,
        }
    }

    /// Lifts spatial tangents to points.
    pub fn exp(&self, t: &Array2<f64>) -> Array2<f64> {
        match self {
            Geometry::Lorentz(c) => exp_spatial(t, *c),
            Geometry::Euclidean => t.clone(),
        }
    }

    pub fn exp_vjp(&self, t: &Array2<f64>, g_points: &Array2<f64>) -> Array2<f64> {
        match self {
            Geometry::Lorentz(c) => exp_spatial_vjp(t, g_points, *c),
            Geometry::Euclidean => g_points.clone(),
        }
    }

    /// Maps points back to spatial tangents.
    pub fn log(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Geometry::Lorentz(c) => log_spatial(x, *c),
            Geometry::Euclidean => x.clone(),
        }
    }

    pub fn log_vjp(&self, x: &Array2<f64>, g_tangent: &Array2<f64>) -> Array2<f64> {
        match self {
            Geometry::Lorentz(c) => log_spatial_vjp(x, g_tangent, *c),
            Geometry::Euclidean => g_tangent.clone(),
        }
    }

    /// Squared distance between two point rows.
    pub fn sqdist(&self, x: ndarray::ArrayView1<'_, f64>, y: ndarray::ArrayView1<'_, f64>) -> f64 {
        match self {
            Geometry::Lorentz(c) => manifold::sqdist(x, y, *c),
            Geometry::Euclidean => {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(y.iter()) {
                    acc += (a - b) * (a - b);
                }
                acc
            }
        }
    }

    pub fn sqdist_vjp(
        &self,
        x: ndarray::ArrayView1<'_, f64>,
        y: ndarray::ArrayView1<'_, f64>,
        g: f64,
    ) -> (Array1<f64>, Array1<f64>) {
        match self {
            Geometry::Lorentz(c) => manifold::sqdist_vjp(x, y, *c, g),
            Geometry::Euclidean => {
                let mut gx = Array1::zeros(x.len());
                let mut gy = Array1::zeros(y.len());
                for j in 0..x.len() {
                    let diff = 2.0 * g * (x[j] - y[j]);
                    gx[j] = diff;
                    gy[j] = -diff;
                }
                (gx, gy)
            }
        }
    }
}

/// Architecture and regularization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub curvature: f64,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_dim: 128,
            hidden_dim: 16,
            num_layers: 2,
            curvature: 1.0,
            activation: Activation::Relu,
            dropout_rate: 0.2,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Contract("encoder dimensions must be >= 1".into()));
        }
        if self.num_layers == 0 {
            return Err(Error::Contract("num_layers must be >= 1".into()));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::Contract(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Curvature::new(self.curvature)?;
        Ok(())
    }
}

/// All learnable encoder tensors.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    /// N x input_dim learnable node features.
    pub feature_table: Array2<f64>,
    /// Softmax gate over input columns (feature importance).
    pub feature_gate: Array1<f64>,
    /// Per-layer weights, `layer_weights[0]` is input_dim x hidden_dim.
    pub layer_weights: Vec<Array2<f64>>,
    pub layer_biases: Vec<Array1<f64>>,
    /// Query vector of the cross-layer attention (length = tangent width).
    pub layer_query: Array1<f64>,
}

impl EncoderParams {
    /// Seeded initialization: features are i.i.d. normal scaled by
    /// `1/sqrt(input_dim)`, weights are uniform in `[-1/sqrt(fan_in),
    /// 1/sqrt(fan_in)]`, biases and the feature gate start at zero.
    pub fn init(n: usize, cfg: &EncoderConfig, kind: EncoderKind, rng: &mut ChaCha20Rng) -> Self {
        let feature_table = init_features_with(n, cfg.input_dim, rng);
        let feature_gate = Array1::zeros(cfg.input_dim);
        let mut layer_weights = Vec::new();
        let mut layer_biases = Vec::new();
        if kind != EncoderKind::LorentzShallow {
            let mut d_prev = cfg.input_dim;
            for _ in 0..cfg.num_layers {
                let bound = 1.0 / (d_prev as f64).sqrt();
                layer_weights.push(Array2::from_shape_fn((d_prev, cfg.hidden_dim), |_| {
                    rng.random_range(-bound..bound)
                }));
                layer_biases.push(Array1::zeros(cfg.hidden_dim));
                d_prev = cfg.hidden_dim;
            }
        }
        let width = tangent_width(cfg, kind);
        let qb = 1.0 / (width as f64).sqrt();
        let layer_query = Array1::from_shape_fn(width, |_| rng.random_range(-qb..qb));
        EncoderParams {
            feature_table,
            feature_gate,
            layer_weights,
            layer_biases,
            layer_query,
        }
    }
}

/// Width of the tangent vectors the encoder emits: `hidden_dim` for the
/// convolutional variants, `input_dim` for the shallow one.
pub(crate) fn tangent_width(cfg: &EncoderConfig, kind: EncoderKind) -> usize {
    match kind {
        EncoderKind::LorentzShallow => cfg.input_dim,
        _ => cfg.hidden_dim,
    }
}

/// Seeded feature table: i.i.d. `N(0, 1/input_dim)` entries, drawn row-major.
pub fn init_features(n: usize, cfg: &EncoderConfig) -> Array2<f64> {
    let mut rng = substream(cfg.seed, TAG_INIT, 0);
    init_features_with(n, cfg.input_dim, &mut rng)
}

pub(crate) fn init_features_with(n: usize, d_in: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let scale = 1.0 / (d_in as f64).sqrt();
    Array2::from_shape_fn((n, d_in), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// Importance weights over input columns: `softmax(gate)`, summing to 1.
pub fn feature_importance(gate: &Array1<f64>) -> Array1<f64> {
    softmax(gate.view())
}

/// The `k` most important input features, sorted by weight descending.
pub fn top_k_features(gate: &Array1<f64>, k: usize) -> Vec<(usize, f64)> {
    let imp = feature_importance(gate);
    let mut pairs: Vec<(usize, f64)> = imp.iter().copied().enumerate().collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs.truncate(k);
    pairs
}

fn softmax(v: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = v.mapv(|x| (x - m).exp());
    let sum = out.sum();
    out.mapv_inplace(|x| x / sum);
    out
}

/// Rescales input columns by `input_dim * softmax(gate)` so a zero gate is
/// the identity. The softmax itself is exposed via [`feature_importance`].
pub fn apply_feature_attention(x: &Array2<f64>, gate: &Array1<f64>) -> Result<Array2<f64>> {
    if x.ncols() != gate.len() {
        return Err(Error::Contract(format!(
            "feature attention shape mismatch: {} columns vs gate length {}",
            x.ncols(),
            gate.len()
        )));
    }
    let scale = feature_importance(gate) * gate.len() as f64;
    Ok(x * &scale)
}

/// Inverted-scaling dropout mask: entries are `0` with probability `rate`
/// and `1/(1-rate)` otherwise.
pub(crate) fn draw_dropout_mask(
    n: usize,
    d: usize,
    rate: f64,
    rng: &mut ChaCha20Rng,
) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((n, d), |_| {
        if rng.random_range(0.0..1.0) < rate {
            0.0
        } else {
            keep
        }
    })
}

// ---------------------------------------------------------------------------
// Cached forward / backward pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// `P * t_in`
    pub agg: Array2<f64>,
    /// `agg W + b`
    pub u: Array2<f64>,
    /// `exp(u)`
    pub h_pre: Array2<f64>,
    /// `log(h_pre)`
    pub v: Array2<f64>,
    /// `act(v)`
    pub r: Array2<f64>,
    /// `exp(r)`
    pub h_out: Array2<f64>,
    /// `log(h_out)`, collected for the cross-layer attention
    pub t_out: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// `tanh(t_l)` per collected layer
    pub th: Vec<Array2<f64>>,
    /// N x L attention weights (rows sum to 1)
    pub alpha: Array2<f64>,
    /// Attention-aggregated tangent, N x width
    pub t_final: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    pub importance: Array1<f64>,
    pub mask: Option<Array2<f64>>,
    /// attention-scaled features times the dropout mask
    pub dropped: Array2<f64>,
    /// `exp(dropped)`
    pub h0: Array2<f64>,
    /// `log(h0)`
    pub t0: Array2<f64>,
    pub layers: Vec<LayerCache>,
    pub attn: AttentionCache,
    /// `exp(t_final)`: the encoder embeddings
    pub h_enc: Array2<f64>,
}

impl EncoderCache {
    /// Tangents collected for attention: every layer output, or the lifted
    /// features when there are no layers.
    pub fn collected(&self) -> Vec<&Array2<f64>> {
        if self.layers.is_empty() {
            vec![&self.t0]
        } else {
            self.layers.iter().map(|l| &l.t_out).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderGrads {
    pub feature_table: Array2<f64>,
    pub feature_gate: Array1<f64>,
    pub layer_weights: Vec<Array2<f64>>,
    pub layer_biases: Vec<Array1<f64>>,
    pub layer_query: Array1<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrads {
            feature_table: Array2::zeros(params.feature_table.dim()),
            feature_gate: Array1::zeros(params.feature_gate.len()),
            layer_weights: params
                .layer_weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            layer_biases: params
                .layer_biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
            layer_query: Array1::zeros(params.layer_query.len()),
        }
    }
}

pub(crate) fn encoder_forward(
    params: &EncoderParams,
    geometry: &Geometry,
    p: &Csr,
    act: Activation,
    mask: Option<&Array2<f64>>,
) -> EncoderCache {
    let d_in = params.feature_table.ncols();
    let importance = feature_importance(&params.feature_gate);
    let scale = &importance * d_in as f64;
    let scaled = &params.feature_table * &scale;
    let dropped = match mask {
        Some(m) => &scaled * m,
        None => scaled.clone(),
    };
    let h0 = geometry.exp(&dropped);
    let t0 = geometry.log(&h0);

    let mut layers = Vec::with_capacity(params.layer_weights.len());
    let mut t_in = &t0;
    for (w, b) in params.layer_weights.iter().zip(&params.layer_biases) {
        let agg = p.spmm(t_in);
        let u = agg.dot(w) + b;
        let h_pre = geometry.exp(&u);
        let v = geometry.log(&h_pre);
        let r = v.mapv(|x| act.apply(x));
        let h_out = geometry.exp(&r);
        let t_out = geometry.log(&h_out);
        layers.push(LayerCache {
            agg,
            u,
            h_pre,
            v,
            r,
            h_out,
            t_out,
        });
        t_in = &layers.last().unwrap().t_out;
    }

    let collected: Vec<&Array2<f64>> = if layers.is_empty() {
        vec![&t0]
    } else {
        layers.iter().map(|l| &l.t_out).collect()
    };
    let attn = attention_forward(&collected, &params.layer_query);
    let h_enc = geometry.exp(&attn.t_final);

    EncoderCache {
        importance,
        mask: mask.cloned(),
        dropped,
        h0,
        t0,
        layers,
        attn,
        h_enc,
    }
}

/// Additive attention over the collected layer tangents: per node `v`,
/// `alpha_l = softmax_l(q . tanh(t_l[v]))` and the output is
/// `sum_l alpha_l t_l[v]`.
pub(crate) fn attention_forward(tangents: &[&Array2<f64>], q: &Array1<f64>) -> AttentionCache {
    let l = tangents.len();
    let (n, d) = tangents[0].dim();
    let th: Vec<Array2<f64>> = tangents.iter().map(|t| t.mapv(f64::tanh)).collect();
    let mut alpha = Array2::zeros((n, l));
    let mut t_final = Array2::zeros((n, d));
    for v in 0..n {
        let mut scores = Array1::zeros(l);
        for (k, t) in th.iter().enumerate() {
            scores[k] = t.row(v).dot(q);
        }
        let a = softmax(scores.view());
        for (k, t) in tangents.iter().enumerate() {
            for j in 0..d {
                t_final[[v, j]] += a[k] * t[[v, j]];
            }
        }
        alpha.row_mut(v).assign(&a);
    }
    AttentionCache { th, alpha, t_final }
}

/// Backward of [`attention_forward`]: returns cotangents for every collected
/// tangent and the gradient of the query vector.
pub(crate) fn attention_backward(
    tangents: &[&Array2<f64>],
    q: &Array1<f64>,
    cache: &AttentionCache,
    g_final: &Array2<f64>,
) -> (Vec<Array2<f64>>, Array1<f64>) {
    let l = tangents.len();
    let (n, d) = tangents[0].dim();
    let mut g_ts: Vec<Array2<f64>> = (0..l).map(|_| Array2::zeros((n, d))).collect();
    let mut g_q = Array1::zeros(q.len());
    for v in 0..n {
        let gout = g_final.row(v);
        // c_k = dL/dalpha_k, then the softmax vjp gives dL/dscore_k
        let mut c = Array1::zeros(l);
        for (k, t) in tangents.iter().enumerate() {
            c[k] = gout.dot(&t.row(v));
        }
        let a = cache.alpha.row(v);
        let mix: f64 = a.iter().zip(c.iter()).map(|(x, y)| x * y).sum();
        for k in 0..l {
            let dscore = a[k] * (c[k] - mix);
            let throw = cache.th[k].row(v);
            for j in 0..d {
                // direct path + score path through tanh
                g_ts[k][[v, j]] += a[k] * gout[j] + dscore * q[j] * (1.0 - throw[j] * throw[j]);
                g_q[j] += dscore * throw[j];
            }
        }
    }
    (g_ts, g_q)
}

/// Backpropagates a cotangent on the attention-aggregated tangent through the
/// whole encoder, accumulating parameter gradients.
pub(crate) fn encoder_backward(
    params: &EncoderParams,
    geometry: &Geometry,
    p_t: &Csr,
    act: Activation,
    cache: &EncoderCache,
    g_t_final: &Array2<f64>,
    grads: &mut EncoderGrads,
) {
    let collected = cache.collected();
    let (g_ts, g_q) = attention_backward(&collected, &params.layer_query, &cache.attn, g_t_final);
    grads.layer_query += &g_q;

    let n_layers = cache.layers.len();
    let g_t0 = if n_layers == 0 {
        g_ts.into_iter().next().unwrap()
    } else {
        let mut carry: Option<Array2<f64>> = None;
        for l in (0..n_layers).rev() {
            let layer = &cache.layers[l];
            let mut g_t_out = g_ts[l].clone();
            if let Some(c) = carry.take() {
                g_t_out += &c;
            }
            let g_h_out = geometry.log_vjp(&layer.h_out, &g_t_out);
            let g_r = geometry.exp_vjp(&layer.r, &g_h_out);
            let mut g_v = g_r;
            ndarray::Zip::from(&mut g_v)
                .and(&layer.v)
                .for_each(|g, &v| *g *= act.derivative(v));
            let g_h_pre = geometry.log_vjp(&layer.h_pre, &g_v);
            let g_u = geometry.exp_vjp(&layer.u, &g_h_pre);
            grads.layer_weights[l] += &layer.agg.t().dot(&g_u);
            grads.layer_biases[l] += &g_u.sum_axis(Axis(0));
            let g_agg = g_u.dot(&params.layer_weights[l].t());
            carry = Some(p_t.spmm(&g_agg));
        }
        carry.unwrap()
    };

    let g_h0 = geometry.log_vjp(&cache.h0, &g_t0);
    let g_dropped = geometry.exp_vjp(&cache.dropped, &g_h0);
    let g_scaled = match &cache.mask {
        Some(m) => &g_dropped * m,
        None => g_dropped,
    };

    // feature attention backward: scaled = X * (d_in * softmax(gate))
    let d_in = params.feature_table.ncols() as f64;
    let scale = &cache.importance * d_in;
    grads.feature_table += &(&g_scaled * &scale);
    let m = (&g_scaled * &params.feature_table).sum_axis(Axis(0));
    let mix: f64 = cache
        .importance
        .iter()
        .zip(m.iter())
        .map(|(s, mm)| s * mm)
        .sum();
    for j in 0..params.feature_gate.len() {
        grads.feature_gate[j] += d_in * cache.importance[j] * (m[j] - mix);
    }
}

// ---------------------------------------------------------------------------
// Public encoder operations (Lorentz geometry)
// ---------------------------------------------------------------------------

/// One Lorentz graph convolution: tangent-space mean over `N(v) + {v}` with
/// weights `1/(deg(v)+1)`, affine transform, exponential lift, hyperbolic
/// activation.
pub fn lorentz_graph_conv(
    h: &LorentzPoints,
    g: &Graph,
    w: &Array2<f64>,
    b: &Array1<f64>,
    act: Activation,
) -> Result<LorentzPoints> {
    if h.num_points() != g.num_nodes() {
        return Err(Error::Contract(format!(
            "conv input has {} rows for a graph with {} nodes",
            h.num_points(),
            g.num_nodes()
        )));
    }
    if h.ambient_dim() - 1 != w.nrows() || w.ncols() != b.len() {
        return Err(Error::Contract(format!(
            "conv weight shape {:?} does not match input width {} / bias {}",
            w.dim(),
            h.ambient_dim() - 1,
            b.len()
        )));
    }
    let c = h.curvature();
    let tangent = manifold::log_origin(h)?.spatial();
    let p = random_walk_matrix(g);
    let agg = p.csr().spmm(&tangent);
    let u = agg.dot(w) + b;
    let lifted = LorentzPoints::from_raw(exp_spatial(&u, c), c);
    manifold::hyperbolic_activation(&lifted, act)
}

/// Output of [`encode`].
#[derive(Debug, Clone)]
pub struct EncodeOutput {
    /// Final node embeddings on the manifold.
    pub embeddings: LorentzPoints,
    /// Tangent-space outputs of every layer, each N x hidden_dim.
    pub layer_tangents: Vec<Array2<f64>>,
    /// Cross-layer attention weights, N x L, rows summing to 1.
    pub attention: Array2<f64>,
}

/// Full encoder pipeline for the Lorentz geometry: feature attention,
/// optional dropout, exponential lift, stacked convolutions, and cross-layer
/// attention aggregation. Deterministic when `dropout_on` is false.
pub fn encode(
    params: &EncoderParams,
    g: &Graph,
    cfg: &EncoderConfig,
    dropout_on: bool,
    rng: &mut ChaCha20Rng,
) -> Result<EncodeOutput> {
    cfg.validate()?;
    if params.feature_table.nrows() != g.num_nodes() {
        return Err(Error::Contract(format!(
            "feature table has {} rows for a graph with {} nodes",
            params.feature_table.nrows(),
            g.num_nodes()
        )));
    }
    let curvature = Curvature::new(cfg.curvature)?;
    let geometry = Geometry::Lorentz(curvature);
    let p = random_walk_matrix(g);
    let mask = if dropout_on && cfg.dropout_rate > 0.0 {
        Some(draw_dropout_mask(
            g.num_nodes(),
            cfg.input_dim,
            cfg.dropout_rate,
            rng,
        ))
    } else {
        None
    };
    let cache = encoder_forward(params, &geometry, p.csr(), cfg.activation, mask.as_ref());
    let layer_tangents = cache.collected().into_iter().cloned().collect();
    Ok(EncodeOutput {
        embeddings: LorentzPoints::from_raw(cache.h_enc.clone(), curvature),
        layer_tangents,
        attention: cache.attn.alpha,
    })
}

/// Attention aggregation of layer tangents, lifted back to the manifold.
/// Returns the aggregated points and the attention matrix.
pub fn layer_attention_aggregate(
    layer_tangents: &[Array2<f64>],
    q: &Array1<f64>,
    c: Curvature,
) -> Result<(LorentzPoints, Array2<f64>)> {
    if layer_tangents.is_empty() {
        return Err(Error::Contract("need at least one layer tangent".into()));
    }
    let dim = layer_tangents[0].dim();
    for t in layer_tangents {
        if t.dim() != dim {
            return Err(Error::Contract("layer tangent shapes differ".into()));
        }
    }
    if q.len() != dim.1 {
        return Err(Error::Contract(format!(
            "query length {} does not match tangent width {}",
            q.len(),
            dim.1
        )));
    }
    let refs: Vec<&Array2<f64>> = layer_tangents.iter().collect();
    let cache = attention_forward(&refs, q);
    Ok((
        LorentzPoints::from_raw(exp_spatial(&cache.t_final, c), c),
        cache.alpha,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::lorentz_inner;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            input_dim: 5,
            hidden_dim: 4,
            num_layers: 2,
            curvature: 1.0,
            activation: Activation::Relu,
            dropout_rate: 0.2,
            seed: 42,
        }
    }

    #[test]
    fn init_features_shape_and_determinism() {
        let cfg = EncoderConfig::default();
        let x1 = init_features(10, &cfg);
        let x2 = init_features(10, &cfg);
        assert_eq!(x1.dim(), (10, 128));
        assert_eq!(x1, x2);
        let other = init_features(
            10,
            &EncoderConfig {
                seed: 77,
                ..cfg.clone()
            },
        );
        assert_ne!(x1, other);
    }

    #[test]
    fn init_features_column_variance() {
        let cfg = EncoderConfig::default();
        let x = init_features(1000, &cfg);
        let expected = 1.0 / 128.0;
        for col in x.columns() {
            let mean = col.sum() / 1000.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 999.0;
            assert!(
                (var - expected).abs() <= 0.2 * expected,
                "column variance {var} vs expected {expected}"
            );
        }
    }

    #[test]
    fn feature_attention_zero_gate_is_identity() {
        let x = array![[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        let gate = Array1::zeros(3);
        let out = apply_feature_attention(&x, &gate).unwrap();
        for (a, b) in out.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn feature_attention_dominant_column() {
        let x = Array2::from_elem((4, 3), 1.0);
        let gate = array![10.0, 0.0, 0.0];
        let imp = feature_importance(&gate);
        assert_abs_diff_eq!(imp.sum(), 1.0, epsilon = 1e-12);
        assert!(imp[0] > 0.99);
        let out = apply_feature_attention(&x, &gate).unwrap();
        assert!(out[[0, 0]] > 100.0 * out[[0, 1]]);
    }

    #[test]
    fn top_k_is_sorted_descending() {
        let mut g = Array1::zeros(128);
        for i in 0..128 {
            g[i] = (i as f64 * 0.37).sin();
        }
        let top = top_k_features(&g, 10);
        assert_eq!(top.len(), 10);
        for w in top.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
        assert!(top.iter().all(|&(_, w)| (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn conv_single_node_identity_transform_is_identity() {
        let g = Graph::from_index_edges(1, &[]).unwrap();
        let c = Curvature::default();
        let tang = array![[0.4, -0.2, 0.9]];
        let h = LorentzPoints::from_raw(exp_spatial(&tang, c), c);
        let out = lorentz_graph_conv(
            &h,
            &g,
            &Array2::eye(3),
            &Array1::zeros(3),
            Activation::Identity,
        )
        .unwrap();
        for (a, b) in out.data().iter().zip(h.data().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_identical_nodes_stay_identical() {
        let g = Graph::from_index_edges(2, &[(0, 1)]).unwrap();
        let c = Curvature::default();
        let tang = array![[0.3, 0.1], [0.3, 0.1]];
        let h = LorentzPoints::from_raw(exp_spatial(&tang, c), c);
        let mut r = rng(5);
        let w = Array2::from_shape_fn((2, 2), |_| r.random_range(-0.5..0.5));
        let b = Array1::from_shape_fn(2, |_| r.random_range(-0.5..0.5));
        let out = lorentz_graph_conv(&h, &g, &w, &b, Activation::Relu).unwrap();
        for j in 0..out.ambient_dim() {
            assert_abs_diff_eq!(out.data()[[0, j]], out.data()[[1, j]], epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_matches_dense_per_node_oracle() {
        // brute-force evaluation of aggregate/transform/activate on 5 nodes
        let g = Graph::from_index_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
            .unwrap();
        let c = Curvature::default();
        let mut r = rng(17);
        let tang = Array2::from_shape_fn((5, 3), |_| r.random_range(-1.0..1.0));
        let h = LorentzPoints::from_raw(exp_spatial(&tang, c), c);
        let w = Array2::from_shape_fn((3, 2), |_| r.random_range(-0.7..0.7));
        let b = Array1::from_shape_fn(2, |_| r.random_range(-0.3..0.3));
        let out = lorentz_graph_conv(&h, &g, &w, &b, Activation::Relu).unwrap();

        let logs = log_spatial(h.data(), c);
        for v in 0..5 {
            // (i) tangent-space mean over N(v) + {v}
            let mut nb: Vec<usize> = g.neighbors(v).to_vec();
            nb.push(v);
            let wgt = 1.0 / nb.len() as f64;
            let mut mean = Array1::<f64>::zeros(3);
            for &u in &nb {
                for j in 0..3 {
                    mean[j] += wgt * logs[[u, j]];
                }
            }
            // (ii) affine + exp
            let mut t = Array1::<f64>::zeros(2);
            for j in 0..2 {
                for i in 0..3 {
                    t[j] += mean[i] * w[[i, j]];
                }
                t[j] += b[j];
            }
            let lifted = exp_spatial(&t.clone().insert_axis(Axis(0)), c);
            // (iii) hyperbolic activation
            let back = log_spatial(&lifted, c);
            let activated = back.mapv(|x| x.max(0.0));
            let expect = exp_spatial(&activated, c);
            for j in 0..3 {
                assert!(
                    (out.data()[[v, j]] - expect[[0, j]]).abs() <= 1e-10,
                    "node {v} coordinate {j}"
                );
            }
        }
    }

    fn ring_graph(n: usize) -> Graph {
        let mut edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        edges.push((0, n as u32 - 1));
        Graph::from_index_edges(n, &edges).unwrap()
    }

    #[test]
    fn encode_is_deterministic_without_dropout() {
        let g = ring_graph(6);
        let cfg = small_cfg();
        let mut r = rng(1);
        let params = EncoderParams::init(6, &cfg, EncoderKind::LorentzGnn, &mut r);
        let out1 = encode(&params, &g, &cfg, false, &mut rng(2)).unwrap();
        let out2 = encode(&params, &g, &cfg, false, &mut rng(3)).unwrap();
        assert_eq!(out1.embeddings.data(), out2.embeddings.data());
    }

    #[test]
    fn encode_single_layer_attention_is_trivial() {
        let g = ring_graph(5);
        let cfg = EncoderConfig {
            num_layers: 1,
            ..small_cfg()
        };
        let mut r = rng(4);
        let params = EncoderParams::init(5, &cfg, EncoderKind::LorentzGnn, &mut r);
        let out = encode(&params, &g, &cfg, false, &mut rng(0)).unwrap();
        assert_eq!(out.layer_tangents.len(), 1);
        for a in out.attention.iter() {
            assert_abs_diff_eq!(a, &1.0, epsilon = 1e-15);
        }
        // attention over a single layer reduces to exp of that layer
        let lifted = exp_spatial(&out.layer_tangents[0], Curvature::default());
        for (a, b) in out.embeddings.data().iter().zip(lifted.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn encode_embeddings_satisfy_manifold_constraint() {
        let g = ring_graph(8);
        let cfg = small_cfg();
        let mut r = rng(6);
        let params = EncoderParams::init(8, &cfg, EncoderKind::LorentzGnn, &mut r);
        let out = encode(&params, &g, &cfg, true, &mut rng(7)).unwrap();
        for i in 0..8 {
            let row = out.embeddings.row(i);
            let inner = lorentz_inner(row, row).unwrap();
            assert!((inner + 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn attention_identical_layers_average_uniformly() {
        let mut r = rng(8);
        let t = Array2::from_shape_fn((4, 3), |_| r.random_range(-1.0..1.0));
        let q = Array1::from_shape_fn(3, |_| r.random_range(-1.0..1.0));
        let c = Curvature::default();
        let (pts, alpha) = layer_attention_aggregate(&[t.clone(), t.clone(), t.clone()], &q, c).unwrap();
        for a in alpha.iter() {
            assert_abs_diff_eq!(a, &(1.0 / 3.0), epsilon = 1e-12);
        }
        for row in alpha.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        let single = exp_spatial(&t, c);
        for (a, b) in pts.data().iter().zip(single.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let n = 7;
        let g = ring_graph(n);
        let cfg = small_cfg();
        let mut r = rng(9);
        let params = EncoderParams::init(n, &cfg, EncoderKind::LorentzGnn, &mut r);
        let base = encode(&params, &g, &cfg, false, &mut rng(0)).unwrap();

        // relabel i -> (i + 3) mod n
        let perm: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        let edges: Vec<(u32, u32)> = g
            .edges()
            .iter()
            .map(|&(a, b)| {
                let (pa, pb) = (perm[a as usize] as u32, perm[b as usize] as u32);
                (pa.min(pb), pa.max(pb))
            })
            .collect();
        let pg = Graph::from_index_edges(n, &edges).unwrap();
        let mut pparams = params.clone();
        for (i, &pi) in perm.iter().enumerate() {
            for j in 0..cfg.input_dim {
                pparams.feature_table[[pi, j]] = params.feature_table[[i, j]];
            }
        }
        let permuted = encode(&pparams, &pg, &cfg, false, &mut rng(0)).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for j in 0..base.embeddings.ambient_dim() {
                let diff =
                    (base.embeddings.data()[[i, j]] - permuted.embeddings.data()[[pi, j]]).abs();
                assert!(diff <= 1e-9, "node {i} coord {j} differs by {diff}");
            }
        }
    }
}
