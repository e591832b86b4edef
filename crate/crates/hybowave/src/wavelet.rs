//! Multiscale graph wavelet features via random-walk diffusion.
//!
//! The diffusion operator at scale `s` is `T_s = P^s` for the row-stochastic
//! random-walk matrix `P = D^-1 (A + I)`. The multiscale transform
//! concatenates `T_s X` column-wise over an ordered scale set, reusing each
//! intermediate power so a full transform costs `max(S)` sparse products, not
//! `sum(S)`. `P^s` is never materialized.

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::graph::{Csr, RandomWalkMatrix};
use crate::manifold::{exp_spatial, Curvature, LorentzPoints};

/// Ordered set of diffusion step counts `S = {s_1 < ... < s_K}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSet {
    scales: Vec<usize>,
}

/// Sanity bound on a single diffusion scale.
pub const MAX_SCALE: usize = 64;

impl ScaleSet {
    /// Validates and sorts the scales; duplicates, zeros, and scales above
    /// [`MAX_SCALE`] are rejected.
    pub fn new(mut scales: Vec<usize>) -> Result<ScaleSet> {
        if scales.is_empty() {
            return Err(Error::Contract("scale set must be nonempty".into()));
        }
        scales.sort_unstable();
        for w in scales.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Contract(format!("duplicate scale {}", w[0])));
            }
        }
        if scales[0] == 0 {
            return Err(Error::Contract("scales must be positive".into()));
        }
        if *scales.last().unwrap() > MAX_SCALE {
            return Err(Error::Contract(format!(
                "scale {} exceeds the sanity bound {MAX_SCALE}",
                scales.last().unwrap()
            )));
        }
        Ok(ScaleSet { scales })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn max_scale(&self) -> usize {
        *self.scales.last().unwrap()
    }
}

impl Default for ScaleSet {
    fn default() -> Self {
        ScaleSet {
            scales: vec![1, 2, 3, 4],
        }
    }
}

/// All scale lists covered by the default hyperparameter sweep: every strictly
/// increasing list of length 2..=4 with values at most 7.
pub fn default_scale_sweep() -> Vec<Vec<usize>> {
    fn extend(start: usize, k: usize, combo: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if combo.len() == k {
            out.push(combo.clone());
            return;
        }
        for v in start..=7 {
            combo.push(v);
            extend(v + 1, k, combo, out);
            combo.pop();
        }
    }
    let mut out = Vec::new();
    for k in 2..=4usize {
        extend(1, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Learnable fusion projection from concatenated wavelet features back to the
/// scoring width: `W_f` has shape `(K*d) x d`.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub weight: Array2<f64>,
}

/// `P^s X` computed as `s` successive sparse products, applied left to right:
/// `P (P (... (P X)))`.
pub fn diffuse(p: &RandomWalkMatrix, x: &Array2<f64>, s: usize) -> Array2<f64> {
    let mut cur = x.clone();
    for _ in 0..s {
        cur = p.csr().spmm(&cur);
    }
    cur
}

/// Column-concatenation `Z = [T_{s_1} X | ... | T_{s_K} X]` in scale order.
pub fn multiscale_transform(p: &RandomWalkMatrix, x: &Array2<f64>, scales: &ScaleSet) -> Array2<f64> {
    multiscale_with_count(p.csr(), x, scales).0
}

/// Implementation with an operation counter; the counter is the number of
/// sparse products performed, which must equal `max(S)`.
pub(crate) fn multiscale_with_count(
    p: &Csr,
    x: &Array2<f64>,
    scales: &ScaleSet,
) -> (Array2<f64>, usize) {
    let (n, d) = x.dim();
    let k = scales.len();
    let mut z = Array2::zeros((n, k * d));
    let mut cur = x.clone();
    let mut steps_done = 0usize;
    let mut mults = 0usize;
    for (block, &s) in scales.scales().iter().enumerate() {
        while steps_done < s {
            cur = p.spmm(&cur);
            steps_done += 1;
            mults += 1;
        }
        z.slice_mut(s![.., block * d..(block + 1) * d]).assign(&cur);
    }
    (z, mults)
}

/// Adjoint of [`multiscale_transform`]: folds a cotangent on `Z` back to a
/// cotangent on `X` using `P^T` powers, reusing increments the same way the
/// forward pass does.
pub(crate) fn multiscale_backward(
    p_t: &Csr,
    g_z: &Array2<f64>,
    scales: &ScaleSet,
    d: usize,
) -> Array2<f64> {
    let k = scales.len();
    let list = scales.scales();
    let mut acc = g_z.slice(s![.., (k - 1) * d..k * d]).to_owned();
    for block in (0..k).rev() {
        let target = if block == 0 { 0 } else { list[block - 1] };
        for _ in target..list[block] {
            acc = p_t.spmm(&acc);
        }
        if block > 0 {
            acc += &g_z.slice(s![.., (block - 1) * d..block * d]);
        }
    }
    acc
}

/// Projects wavelet features to tangent vectors `t = Z W_f` and lifts them to
/// the hyperboloid. These are the embeddings scored by the distance decoder.
pub fn fuse_to_manifold(z: &Array2<f64>, fusion: &FusionParams, c: Curvature) -> Result<LorentzPoints> {
    if z.ncols() != fusion.weight.nrows() {
        return Err(Error::Contract(format!(
            "fusion shape mismatch: Z has {} columns, W_f has {} rows",
            z.ncols(),
            fusion.weight.nrows()
        )));
    }
    let tangent = z.dot(&fusion.weight);
    Ok(LorentzPoints::from_raw(exp_spatial(&tangent, c), c))
}
