//! End-to-end model: encoder, optional multiscale wavelet fusion, Fermi-Dirac
//! distance decoder, and the combined training loss with exact hand-chained
//! gradients for every learnable tensor.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::encoder::{
    encoder_backward, encoder_forward, tangent_width, EncoderCache, EncoderConfig, EncoderGrads,
    EncoderKind, EncoderParams, Geometry,
};
use crate::error::{Error, Result};
use crate::graph::{random_walk_matrix, Csr, Graph};
use crate::manifold::Curvature;
use crate::metrics::{compute_auc, compute_aupr};
use crate::objective::{bce_from_sqdists, info_nce_with_grads, DecoderParams};
use crate::stream::{substream, TAG_INIT};
use crate::trainer::TrainConfig;
use crate::wavelet::{multiscale_backward, multiscale_with_count, FusionParams, ScaleSet};

/// Every learnable tensor of the pipeline.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    /// Present iff the wavelet branch is enabled.
    pub fusion: Option<FusionParams>,
    pub decoder: DecoderParams,
}

impl ModelParams {
    fn feature_table_rows(&self) -> usize {
        self.encoder.feature_table.nrows()
    }
}

/// Gradient buffers mirroring [`ModelParams`].
#[derive(Debug)]
pub(crate) struct ModelGrads {
    pub enc: EncoderGrads,
    pub fusion: Option<Array2<f64>>,
    pub decoder_offset: f64,
    pub decoder_sharpness_raw: f64,
}

impl ModelGrads {
    fn zeros_like(params: &ModelParams) -> Self {
        ModelGrads {
            enc: EncoderGrads::zeros_like(&params.encoder),
            fusion: params
                .fusion
                .as_ref()
                .map(|f| Array2::zeros(f.weight.dim())),
            decoder_offset: 0.0,
            decoder_sharpness_raw: 0.0,
        }
    }

    /// Flat view of one named gradient tensor.
    pub(crate) fn tensor(&self, name: &str) -> &[f64] {
        match name {
            "feature_table" => self.enc.feature_table.as_slice().unwrap(),
            "feature_gate" => self.enc.feature_gate.as_slice().unwrap(),
            "layer_query" => self.enc.layer_query.as_slice().unwrap(),
            "fusion_weight" => self.fusion.as_ref().unwrap().as_slice().unwrap(),
            "decoder_offset" => std::slice::from_ref(&self.decoder_offset),
            "decoder_sharpness_raw" => std::slice::from_ref(&self.decoder_sharpness_raw),
            _ => {
                let (idx, kind) = parse_layer_name(name).expect("unknown tensor name");
                match kind {
                    LayerTensor::Weight => self.enc.layer_weights[idx].as_slice().unwrap(),
                    LayerTensor::Bias => self.enc.layer_biases[idx].as_slice().unwrap(),
                }
            }
        }
    }
}

enum LayerTensor {
    Weight,
    Bias,
}

fn parse_layer_name(name: &str) -> Option<(usize, LayerTensor)> {
    let rest = name.strip_prefix("layer_")?;
    if let Some(idx) = rest.strip_suffix("_weight") {
        return Some((idx.parse().ok()?, LayerTensor::Weight));
    }
    if let Some(idx) = rest.strip_suffix("_bias") {
        return Some((idx.parse().ok()?, LayerTensor::Bias));
    }
    None
}

#[derive(Debug, Clone)]
pub(crate) struct WaveletCache {
    pub z: Array2<f64>,
    pub t_fused: Array2<f64>,
    pub h_out: Array2<f64>,
}

/// Cached activations of one stochastic view.
#[derive(Debug, Clone)]
pub(crate) struct PipelineCache {
    pub enc: EncoderCache,
    pub wave: Option<WaveletCache>,
}

impl PipelineCache {
    /// Points the decoder scores: wavelet output when enabled, otherwise the
    /// encoder embeddings.
    pub fn final_points(&self) -> &Array2<f64> {
        match &self.wave {
            Some(w) => &w.h_out,
            None => &self.enc.h_enc,
        }
    }

    /// Tangent-space form of the final embeddings (the contrastive views).
    pub fn final_tangent(&self) -> &Array2<f64> {
        match &self.wave {
            Some(w) => &w.t_fused,
            None => &self.enc.attn.t_final,
        }
    }
}

/// A trainable pipeline bound to one graph.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    geometry: Geometry,
    enc_cfg: EncoderConfig,
    scales: ScaleSet,
    use_wavelet: bool,
    use_contrastive: bool,
    temperature: f64,
    num_nodes: usize,
    p: Csr,
    p_t: Csr,
}

impl Model {
    /// Builds a model with freshly initialized parameters. All draws come from
    /// a single substream of `cfg.seed`, in a fixed order: feature table,
    /// layer weights, layer query, fusion weight.
    pub fn new(g: &Graph, cfg: &TrainConfig) -> Result<Model> {
        cfg.validate()?;
        let enc_cfg = cfg.encoder_config();
        let scales = ScaleSet::new(cfg.scales.clone())?;
        let mut rng = substream(cfg.seed, TAG_INIT, 0);
        let encoder = EncoderParams::init(g.num_nodes(), &enc_cfg, cfg.encoder, &mut rng);
        let width = tangent_width(&enc_cfg, cfg.encoder);
        let fusion = if cfg.use_wavelet {
            let fan_in = scales.len() * width;
            let bound = 1.0 / (fan_in as f64).sqrt();
            Some(FusionParams {
                weight: Array2::from_shape_fn((fan_in, width), |_| {
                    rng.random_range(-bound..bound)
                }),
            })
        } else {
            None
        };
        let decoder = DecoderParams {
            contrastive_weight: cfg.contrastive_weight,
            ..DecoderParams::default()
        };
        let params = ModelParams {
            encoder,
            fusion,
            decoder,
        };
        Model::with_params(g, cfg, params)
    }

    /// Binds existing parameters (e.g. from a checkpoint) to a graph.
    pub fn with_params(g: &Graph, cfg: &TrainConfig, params: ModelParams) -> Result<Model> {
        cfg.validate()?;
        let enc_cfg = cfg.encoder_config();
        let scales = ScaleSet::new(cfg.scales.clone())?;
        let geometry = match cfg.encoder {
            EncoderKind::EuclideanGnn => Geometry::Euclidean,
            _ => Geometry::Lorentz(Curvature::new(cfg.curvature)?),
        };
        if params.feature_table_rows() != g.num_nodes() {
            return Err(Error::Contract(format!(
                "feature table has {} rows for a graph with {} nodes",
                params.feature_table_rows(),
                g.num_nodes()
            )));
        }
        if cfg.use_wavelet != params.fusion.is_some() {
            return Err(Error::Contract(
                "fusion parameters do not match use_wavelet".into(),
            ));
        }
        let p = random_walk_matrix(g);
        let p_t = p.transpose();
        Ok(Model {
            params,
            geometry,
            enc_cfg,
            scales,
            use_wavelet: cfg.use_wavelet,
            use_contrastive: cfg.use_contrastive,
            temperature: cfg.temperature,
            num_nodes: g.num_nodes(),
            p: p.csr().clone(),
            p_t,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub(crate) fn dropout_rate(&self) -> f64 {
        self.enc_cfg.dropout_rate
    }

    pub(crate) fn input_dim(&self) -> usize {
        self.enc_cfg.input_dim
    }

    pub(crate) fn uses_contrastive(&self) -> bool {
        self.use_contrastive
    }

    /// One full forward pass; `mask` enables a stochastic dropout view.
    pub(crate) fn forward(&self, mask: Option<&Array2<f64>>) -> PipelineCache {
        let enc = encoder_forward(
            &self.params.encoder,
            &self.geometry,
            &self.p,
            self.enc_cfg.activation,
            mask,
        );
        let wave = if self.use_wavelet {
            let fusion = self.params.fusion.as_ref().expect("fusion params");
            let (z, _) = multiscale_with_count(&self.p, &enc.attn.t_final, &self.scales);
            let t_fused = z.dot(&fusion.weight);
            let h_out = self.geometry.exp(&t_fused);
            Some(WaveletCache { z, t_fused, h_out })
        } else {
            None
        };
        PipelineCache { enc, wave }
    }

    /// Deterministic (dropout-off) final embeddings, one row per node.
    pub fn embeddings(&self) -> Array2<f64> {
        self.forward(None).final_points().clone()
    }

    /// Link scores (negated squared distance) for the given node pairs.
    pub fn score_pairs(&self, embeddings: &Array2<f64>, pairs: &[(u32, u32)]) -> Vec<f64> {
        pairs
            .iter()
            .map(|&(a, b)| {
                -self
                    .geometry
                    .sqdist(embeddings.row(a as usize), embeddings.row(b as usize))
            })
            .collect()
    }

    /// AUC and AUPR of the scores separating `pos` from `neg`.
    pub fn evaluate(
        &self,
        embeddings: &Array2<f64>,
        pos: &[(u32, u32)],
        neg: &[(u32, u32)],
    ) -> Result<(f64, f64)> {
        let pos_scores = self.score_pairs(embeddings, pos);
        let neg_scores = self.score_pairs(embeddings, neg);
        Ok((
            compute_auc(&pos_scores, &neg_scores)?,
            compute_aupr(&pos_scores, &neg_scores)?,
        ))
    }

    /// Training loss and its gradient with respect to every parameter tensor.
    ///
    /// Cross-entropy is computed on the first view's embeddings; when the
    /// contrastive term is enabled a second view is run and the two final
    /// tangents are aligned with InfoNCE.
    pub(crate) fn loss_and_grads(
        &self,
        pos: &[(u32, u32)],
        neg: &[(u32, u32)],
        mask1: Option<&Array2<f64>>,
        mask2: Option<&Array2<f64>>,
    ) -> Result<(f64, ModelGrads)> {
        if pos.is_empty() {
            return Err(Error::Contract("training needs a nonempty positive set".into()));
        }
        let mut grads = ModelGrads::zeros_like(&self.params);
        let cache1 = self.forward(mask1);
        let points1 = cache1.final_points();

        // decoder cross-entropy on view 1
        let mut sqd = Vec::with_capacity(pos.len() + neg.len());
        for &(a, b) in pos.iter().chain(neg.iter()) {
            sqd.push(
                self.geometry
                    .sqdist(points1.row(a as usize), points1.row(b as usize)),
            );
        }
        let bce = bce_from_sqdists(&sqd, pos.len(), &self.params.decoder);
        let mut loss = bce.loss;
        grads.decoder_offset += bce.g_offset;
        grads.decoder_sharpness_raw += bce.g_sharpness_raw;

        let mut g_points = Array2::zeros(points1.dim());
        for (k, &(a, b)) in pos.iter().chain(neg.iter()).enumerate() {
            let (gx, gy) = self.geometry.sqdist_vjp(
                points1.row(a as usize),
                points1.row(b as usize),
                bce.g_sqd[k],
            );
            add_row(&mut g_points, a as usize, &gx);
            add_row(&mut g_points, b as usize, &gy);
        }

        let mut g_tangent1 = Array2::zeros(cache1.final_tangent().dim());
        if self.use_contrastive {
            let lambda = self.params.decoder.contrastive_weight;
            let cache2 = self.forward(mask2);
            let (nce, g_v1, g_v2) = info_nce_with_grads(
                cache1.final_tangent(),
                cache2.final_tangent(),
                self.temperature,
            )?;
            loss += lambda * nce;
            g_tangent1 += &(g_v1 * lambda);
            self.backward_view(&cache2, g_v2 * lambda, None, &mut grads);
        }
        self.backward_view(&cache1, g_tangent1, Some(&g_points), &mut grads);
        Ok((loss, grads))
    }

    /// Loss evaluated along the identical code path as [`Self::loss_and_grads`],
    /// used by finite-difference probes.
    pub(crate) fn loss_only(
        &self,
        pos: &[(u32, u32)],
        neg: &[(u32, u32)],
        mask1: Option<&Array2<f64>>,
        mask2: Option<&Array2<f64>>,
    ) -> Result<f64> {
        Ok(self.loss_and_grads(pos, neg, mask1, mask2)?.0)
    }

    /// Pulls a cotangent on the final tangent (plus an optional ambient
    /// cotangent on the final points) back through fusion, wavelet, and the
    /// encoder.
    fn backward_view(
        &self,
        cache: &PipelineCache,
        mut g_tangent: Array2<f64>,
        g_points: Option<&Array2<f64>>,
        grads: &mut ModelGrads,
    ) {
        if let Some(gp) = g_points {
            g_tangent += &self.geometry.exp_vjp(cache.final_tangent(), gp);
        }
        let g_attn_final = match &cache.wave {
            Some(w) => {
                let fusion = self.params.fusion.as_ref().expect("fusion params");
                let g_fusion = w.z.t().dot(&g_tangent);
                *grads.fusion.as_mut().expect("fusion grads") += &g_fusion;
                let g_z = g_tangent.dot(&fusion.weight.t());
                let width = cache.enc.attn.t_final.ncols();
                multiscale_backward(&self.p_t, &g_z, &self.scales, width)
            }
            None => g_tangent,
        };
        encoder_backward(
            &self.params.encoder,
            &self.geometry,
            &self.p_t,
            self.enc_cfg.activation,
            &cache.enc,
            &g_attn_final,
            &mut grads.enc,
        );
    }

    /// Names of all learnable tensors, in a fixed order.
    pub(crate) fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["feature_table".to_string(), "feature_gate".to_string()];
        for i in 0..self.params.encoder.layer_weights.len() {
            names.push(format!("layer_{i}_weight"));
            names.push(format!("layer_{i}_bias"));
        }
        names.push("layer_query".to_string());
        if self.params.fusion.is_some() {
            names.push("fusion_weight".to_string());
        }
        names.push("decoder_offset".to_string());
        names.push("decoder_sharpness_raw".to_string());
        names
    }

    /// Runs `f` over the flat storage of one named tensor.
    pub(crate) fn with_tensor_mut<R>(&mut self, name: &str, f: impl FnOnce(&mut [f64]) -> R) -> R {
        let p = &mut self.params;
        match name {
            "feature_table" => f(p.encoder.feature_table.as_slice_mut().unwrap()),
            "feature_gate" => f(p.encoder.feature_gate.as_slice_mut().unwrap()),
            "layer_query" => f(p.encoder.layer_query.as_slice_mut().unwrap()),
            "fusion_weight" => f(p
                .fusion
                .as_mut()
                .expect("fusion params")
                .weight
                .as_slice_mut()
                .unwrap()),
            "decoder_offset" => f(std::slice::from_mut(&mut p.decoder.offset)),
            "decoder_sharpness_raw" => f(std::slice::from_mut(&mut p.decoder.sharpness_raw)),
            _ => {
                let (idx, kind) = parse_layer_name(name).expect("unknown tensor name");
                match kind {
                    LayerTensor::Weight => f(p.encoder.layer_weights[idx].as_slice_mut().unwrap()),
                    LayerTensor::Bias => f(p.encoder.layer_biases[idx].as_slice_mut().unwrap()),
                }
            }
        }
    }

    /// `(name, param, grad)` triples for the optimizer.
    pub(crate) fn adam_tensors<'a>(
        &'a mut self,
        grads: &'a ModelGrads,
    ) -> Vec<(String, &'a mut [f64], &'a [f64])> {
        let p = &mut self.params;
        let mut out: Vec<(String, &'a mut [f64], &'a [f64])> = vec![
            (
                "feature_table".into(),
                p.encoder.feature_table.as_slice_mut().unwrap(),
                grads.enc.feature_table.as_slice().unwrap(),
            ),
            (
                "feature_gate".into(),
                p.encoder.feature_gate.as_slice_mut().unwrap(),
                grads.enc.feature_gate.as_slice().unwrap(),
            ),
        ];
        for (i, (w, gw)) in p
            .encoder
            .layer_weights
            .iter_mut()
            .zip(&grads.enc.layer_weights)
            .enumerate()
        {
            out.push((
                format!("layer_{i}_weight"),
                w.as_slice_mut().unwrap(),
                gw.as_slice().unwrap(),
            ));
        }
        for (i, (b, gb)) in p
            .encoder
            .layer_biases
            .iter_mut()
            .zip(&grads.enc.layer_biases)
            .enumerate()
        {
            out.push((
                format!("layer_{i}_bias"),
                b.as_slice_mut().unwrap(),
                gb.as_slice().unwrap(),
            ));
        }
        out.push((
            "layer_query".into(),
            p.encoder.layer_query.as_slice_mut().unwrap(),
            grads.enc.layer_query.as_slice().unwrap(),
        ));
        if let (Some(fp), Some(fg)) = (p.fusion.as_mut(), grads.fusion.as_ref()) {
            out.push((
                "fusion_weight".into(),
                fp.weight.as_slice_mut().unwrap(),
                fg.as_slice().unwrap(),
            ));
        }
        out.push((
            "decoder_offset".into(),
            std::slice::from_mut(&mut p.decoder.offset),
            std::slice::from_ref(&grads.decoder_offset),
        ));
        out.push((
            "decoder_sharpness_raw".into(),
            std::slice::from_mut(&mut p.decoder.sharpness_raw),
            std::slice::from_ref(&grads.decoder_sharpness_raw),
        ));
        out
    }

    /// Serializes all tensors as `(shape, row-major values)` keyed by name.
    pub(crate) fn tensor_map(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        let mut map = BTreeMap::new();
        let p = &self.params;
        map.insert(
            "feature_table".into(),
            (
                p.encoder.feature_table.shape().to_vec(),
                p.encoder.feature_table.iter().copied().collect(),
            ),
        );
        map.insert(
            "feature_gate".into(),
            (
                vec![p.encoder.feature_gate.len()],
                p.encoder.feature_gate.to_vec(),
            ),
        );
        for (i, w) in p.encoder.layer_weights.iter().enumerate() {
            map.insert(
                format!("layer_{i}_weight"),
                (w.shape().to_vec(), w.iter().copied().collect()),
            );
        }
        for (i, b) in p.encoder.layer_biases.iter().enumerate() {
            map.insert(format!("layer_{i}_bias"), (vec![b.len()], b.to_vec()));
        }
        map.insert(
            "layer_query".into(),
            (
                vec![p.encoder.layer_query.len()],
                p.encoder.layer_query.to_vec(),
            ),
        );
        if let Some(fp) = &p.fusion {
            map.insert(
                "fusion_weight".into(),
                (fp.weight.shape().to_vec(), fp.weight.iter().copied().collect()),
            );
        }
        map.insert("decoder_offset".into(), (vec![], vec![p.decoder.offset]));
        map.insert(
            "decoder_sharpness_raw".into(),
            (vec![], vec![p.decoder.sharpness_raw]),
        );
        map
    }

    /// Overwrites every tensor from a serialized map, validating shapes.
    pub(crate) fn load_tensor_map(
        &mut self,
        map: &BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<()> {
        let expected = self.tensor_map();
        if expected.len() != map.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} tensors, model expects {}",
                map.len(),
                expected.len()
            )));
        }
        for (name, (shape, _)) in &expected {
            let (got_shape, values) = map.get(name).ok_or_else(|| {
                Error::Contract(format!("checkpoint is missing tensor {name:?}"))
            })?;
            if got_shape != shape {
                return Err(Error::Contract(format!(
                    "tensor {name:?} has shape {got_shape:?}, expected {shape:?}"
                )));
            }
            let len: usize = shape.iter().product::<usize>().max(1);
            if values.len() != len {
                return Err(Error::Contract(format!(
                    "tensor {name:?} has {} values, expected {len}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("checkpoint tensor {name:?}")));
            }
            self.with_tensor_mut(name, |slot| slot.copy_from_slice(values));
        }
        Ok(())
    }
}

fn add_row(target: &mut Array2<f64>, row: usize, delta: &Array1<f64>) {
    let mut r = target.row_mut(row);
    r += delta;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::manifold::LorentzPoints;
    use crate::objective::{total_loss, ContrastiveConfig};
    use crate::trainer::TrainConfig;

    fn ring(n: usize) -> Graph {
        let mut edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        edges.push((0, n as u32 - 1));
        Graph::from_index_edges(n, &edges).unwrap()
    }

    fn probe_cfg() -> TrainConfig {
        TrainConfig {
            input_dim: 5,
            hidden_dim: 4,
            num_layers: 2,
            scales: vec![1, 2],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn forward_is_deterministic_without_masks() {
        let g = ring(6);
        let model = Model::new(&g, &probe_cfg()).unwrap();
        let a = model.embeddings();
        let b = model.embeddings();
        assert_eq!(a, b);
    }

    #[test]
    fn bce_path_matches_public_total_loss() {
        // with the contrastive term off, the model loss must equal the public
        // objective evaluated on the model's own embeddings
        let g = ring(8);
        let cfg = TrainConfig {
            use_contrastive: false,
            ..probe_cfg()
        };
        let model = Model::new(&g, &cfg).unwrap();
        let pos: Vec<(u32, u32)> = g.edges()[..4].to_vec();
        let neg = vec![(0u32, 4u32), (1u32, 5u32)];
        let (loss, _) = model.loss_and_grads(&pos, &neg, None, None).unwrap();

        let emb = model.embeddings();
        let pts = LorentzPoints::new(emb, Curvature::default()).unwrap();
        let expect = total_loss(
            &pts,
            &pos,
            &neg,
            None,
            &model.params.decoder,
            &ContrastiveConfig::default(),
        )
        .unwrap();
        assert!((loss - expect).abs() <= 1e-12, "{loss} vs {expect}");
    }

    #[test]
    fn tensor_round_trip_preserves_parameters() {
        let g = ring(6);
        let mut model = Model::new(&g, &probe_cfg()).unwrap();
        let map = model.tensor_map();
        let before = model.embeddings();
        // perturb, then restore from the saved map
        model.with_tensor_mut("layer_0_weight", |w| w[0] += 1.0);
        assert_ne!(model.embeddings(), before);
        model.load_tensor_map(&map).unwrap();
        assert_eq!(model.embeddings(), before);
    }

    #[test]
    fn euclidean_geometry_runs_end_to_end() {
        let g = ring(6);
        let cfg = TrainConfig {
            encoder: EncoderKind::EuclideanGnn,
            ..probe_cfg()
        };
        let model = Model::new(&g, &cfg).unwrap();
        let emb = model.embeddings();
        assert_eq!(emb.dim(), (6, 4)); // no time component in the flat variant
        let pos: Vec<(u32, u32)> = g.edges()[..3].to_vec();
        let neg = vec![(0u32, 3u32)];
        let (loss, _) = model.loss_and_grads(&pos, &neg, None, None).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn shallow_encoder_scores_lifted_features() {
        let g = ring(5);
        let cfg = TrainConfig {
            encoder: EncoderKind::LorentzShallow,
            use_wavelet: false,
            use_contrastive: false,
            ..probe_cfg()
        };
        let model = Model::new(&g, &cfg).unwrap();
        let emb = model.embeddings();
        assert_eq!(emb.dim(), (5, 6)); // input_dim + time component
    }
}
