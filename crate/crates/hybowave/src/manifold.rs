//! Lorentz-model hyperbolic geometry primitives.
//!
//! Points live on the upper sheet of the hyperboloid
//! `{x in R^{n+1} : <x,x>_L = -1/c, x_0 > 0}` where
//! `<x,y>_L = -x_0 y_0 + sum_{i>=1} x_i y_i` is the Lorentz inner product
//! (signature `-,+,...,+`). The origin is `o = (1/sqrt(c), 0, ..., 0)` and all
//! tangent vectors in this crate are anchored there, so their time component
//! is identically zero and linear algebra on them is plain Euclidean.
//!
//! Every map used inside the training pipeline comes with its vector-Jacobian
//! product (`*_vjp`) so gradients can be chained through compositions by hand.
//! All arithmetic is in `f64`.

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for the hyperboloid constraint at unit scale. The
/// constraint check scales this by `max(1, c*x0^2)` because evaluating
/// `<x,x>_L` for a far-out point loses exactly that many ulps to cancellation.
pub const MANIFOLD_ATOL: f64 = 1e-9;

/// Manifold curvature magnitude; the hyperboloid satisfies `<x,x>_L = -1/c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::Contract(format!(
                "curvature must be a positive finite real, got {c}"
            )));
        }
        Ok(Curvature(c))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature(1.0)
    }
}

/// Elementwise nonlinearity applied in the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x` (subgradient 0 at the ReLU kink).
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// A batch of points on the curvature-`c` hyperboloid, stored as an
/// `N x (n+1)` array of ambient coordinates.
#[derive(Debug, Clone)]
pub struct LorentzPoints {
    data: Array2<f64>,
    curvature: Curvature,
}

impl LorentzPoints {
    /// Validates every row against the hyperboloid constraint and `x_0 > 0`.
    pub fn new(data: Array2<f64>, curvature: Curvature) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::Contract(format!(
                "Lorentz points need ambient dimension >= 2, got {}",
                data.ncols()
            )));
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            check_on_manifold(row, curvature, i)?;
        }
        Ok(LorentzPoints { data, curvature })
    }

    /// Trusted constructor for rows produced by the maps in this module.
    pub(crate) fn from_raw(data: Array2<f64>, curvature: Curvature) -> Self {
        LorentzPoints { data, curvature }
    }

    /// The origin `o = (1/sqrt(c), 0, ..., 0)` repeated `n` times with
    /// ambient dimension `dim`.
    pub fn origin(n: usize, dim: usize, curvature: Curvature) -> Self {
        let mut data = Array2::zeros((n, dim));
        data.column_mut(0).fill(1.0 / curvature.sqrt());
        LorentzPoints { data, curvature }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn num_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }
}

/// A batch of tangent vectors at the origin, stored `N x (n+1)` with the time
/// component identically zero.
#[derive(Debug, Clone)]
pub struct TangentVectors {
    data: Array2<f64>,
}

impl TangentVectors {
    /// Validates that every row has an exactly-zero time component.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        for (i, row) in data.rows().into_iter().enumerate() {
            if row[0] != 0.0 {
                return Err(Error::Contract(format!(
                    "tangent vector row {i} has nonzero time component {}",
                    row[0]
                )));
            }
        }
        Ok(TangentVectors { data })
    }

    /// Lifts an `N x n` array of spatial components into full ambient
    /// coordinates with a zero time column.
    pub fn from_spatial(spatial: &Array2<f64>) -> Self {
        let (n, d) = spatial.dim();
        let mut data = Array2::zeros((n, d + 1));
        data.slice_mut(s![.., 1..]).assign(spatial);
        TangentVectors { data }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Spatial components (everything but the time column), copied out.
    pub fn spatial(&self) -> Array2<f64> {
        self.data.slice(s![.., 1..]).to_owned()
    }
}

fn check_on_manifold(row: ArrayView1<'_, f64>, c: Curvature, index: usize) -> Result<()> {
    let x0 = row[0];
    if !x0.is_finite() || x0 <= 0.0 {
        return Err(Error::Contract(format!(
            "row {index} has non-positive or non-finite time component {x0}"
        )));
    }
    let inner = lorentz_inner_unchecked(row, row);
    let violation = (inner + 1.0 / c.value()).abs();
    let tol = MANIFOLD_ATOL * (c.value() * x0 * x0).max(1.0);
    if violation > tol {
        return Err(Error::OffManifold {
            row: index,
            violation,
        });
    }
    Ok(())
}

/// Lorentz inner product `<x,y>_L = -x_0 y_0 + sum_{i>=1} x_i y_i`.
///
/// Errors on mismatched dimensions or ambient dimension below 2.
pub fn lorentz_inner(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "lorentz_inner dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Contract(format!(
            "lorentz_inner needs dimension >= 2, got {}",
            x.len()
        )));
    }
    Ok(lorentz_inner_unchecked(x, y))
}

pub(crate) fn lorentz_inner_unchecked(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let mut acc = -x[0] * y[0];
    for i in 1..x.len() {
        acc += x[i] * y[i];
    }
    acc
}

/// Renormalizes arbitrary ambient rows onto the hyperboloid: the spatial part
/// is kept and the time component is recomputed as `sqrt(1/c + ||x_1:||^2)`.
pub fn project_to_manifold(v: &Array2<f64>, c: Curvature) -> Result<LorentzPoints> {
    let mut out = v.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut norm_sq = 0.0;
        for j in 1..row.len() {
            let x = row[j];
            if !x.is_finite() {
                return Err(Error::NonFinite(format!(
                    "project_to_manifold input row {i}"
                )));
            }
            norm_sq += x * x;
        }
        row[0] = (1.0 / c.value() + norm_sq).sqrt();
    }
    Ok(LorentzPoints::from_raw(out, c))
}

// ---------------------------------------------------------------------------
// Stable scalar kernels. Each has a Taylor branch near its removable
// singularity; thresholds are chosen so both branches agree to ~1e-12.
// ---------------------------------------------------------------------------

/// `sinh(z)/z`, even and analytic at 0.
fn sinhc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 + z2 / 6.0 * (1.0 + z2 / 20.0)
    } else {
        z.sinh() / z
    }
}

/// `asinh(z)/z`, even and analytic at 0.
fn asinhc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + 3.0 * z2 * z2 / 40.0
    } else {
        z.asinh() / z
    }
}

/// `(cosh(z) - sinh(z)/z) / z^2`, the radial part of the exp-map Jacobian.
fn exp_radial_coeff(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        1.0 / 3.0 + z2 / 30.0 + z2 * z2 / 840.0
    } else {
        (z.cosh() - z.sinh() / z) / (z * z)
    }
}

/// `(z/sqrt(1+z^2) - asinh(z)) / z^3`, the radial part of the log-map Jacobian.
fn log_radial_coeff(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        -1.0 / 3.0 + 0.3 * z2 - 45.0 * z2 * z2 / 168.0
    } else {
        (z / (1.0 + z * z).sqrt() - z.asinh()) / (z * z * z)
    }
}

/// `acosh(b)/sqrt(b^2-1)` for `b >= 1`, the derivative kernel of `acosh^2`.
/// Analytic at `b = 1` with value 1.
fn acosh_ratio(b: f64) -> f64 {
    let delta = b - 1.0;
    if delta <= 0.0 {
        1.0
    } else if delta < 1e-8 {
        1.0 - delta / 3.0
    } else {
        b.acosh() / (delta * (b + 1.0)).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Exponential / logarithmic maps at the origin, spatial form.
//
// The spatial form takes and returns only spatial components; the time
// component of tangents is implicitly zero and the time component of points
// is produced/consumed explicitly. These are the building blocks the encoder
// chains, and their vjps compose to the exact gradient of the pipeline.
// ---------------------------------------------------------------------------

/// Exponential map at the origin for a batch of spatial tangents (`N x n`),
/// returning ambient points (`N x (n+1)`).
///
/// For `v = (0, u)`: `exp_o(v) = cosh(sqrt(c)||u||) o + sinh(sqrt(c)||u||) v / (sqrt(c)||u||)`.
pub fn exp_spatial(u: &Array2<f64>, c: Curvature) -> Array2<f64> {
    let (n, d) = u.dim();
    let sc = c.sqrt();
    let mut out = Array2::zeros((n, d + 1));
    for i in 0..n {
        let row = u.row(i);
        let r = row.dot(&row).sqrt();
        let z = sc * r;
        out[[i, 0]] = z.cosh() / sc;
        let f = sinhc(z);
        for j in 0..d {
            out[[i, j + 1]] = f * row[j];
        }
    }
    out
}

/// Vector-Jacobian product of [`exp_spatial`]: pulls an ambient cotangent
/// (`N x (n+1)`) back to a spatial tangent cotangent (`N x n`).
pub fn exp_spatial_vjp(u: &Array2<f64>, g_ambient: &Array2<f64>, c: Curvature) -> Array2<f64> {
    let (n, d) = u.dim();
    let sc = c.sqrt();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let urow = u.row(i);
        let r = urow.dot(&urow).sqrt();
        let z = sc * r;
        let f = sinhc(z);
        let h = exp_radial_coeff(z);
        let g0 = g_ambient[[i, 0]];
        let gs = g_ambient.slice(s![i, 1..]);
        let gs_dot_u = gs.dot(&urow);
        let radial = sc * f * g0 + c.value() * h * gs_dot_u;
        for j in 0..d {
            out[[i, j]] = f * gs[j] + radial * urow[j];
        }
    }
    out
}

/// Logarithmic map at the origin for a batch of ambient points (`N x (n+1)`),
/// returning spatial tangents (`N x n`).
///
/// On the manifold `d(o,x) = (1/sqrt(c)) acosh(sqrt(c) x_0)` and the result is
/// `asinh(sqrt(c)||x_1:||) / (sqrt(c)||x_1:||) * x_1:`, which depends only on
/// the spatial part; this form is exact on the hyperboloid and stays accurate
/// near the origin where the acosh form cancels catastrophically.
pub fn log_spatial(x: &Array2<f64>, c: Curvature) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols() - 1;
    let sc = c.sqrt();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let xs = x.slice(s![i, 1..]);
        let w = xs.dot(&xs).sqrt();
        let phi = asinhc(sc * w);
        for j in 0..d {
            out[[i, j]] = phi * xs[j];
        }
    }
    out
}

/// Vector-Jacobian product of [`log_spatial`]: pulls a spatial tangent
/// cotangent back to an ambient cotangent. The time column of the result is
/// zero because the forward map reads only the spatial part.
pub fn log_spatial_vjp(x: &Array2<f64>, g_tangent: &Array2<f64>, c: Curvature) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols() - 1;
    let sc = c.sqrt();
    let mut out = Array2::zeros((n, d + 1));
    for i in 0..n {
        let xs = x.slice(s![i, 1..]);
        let w = xs.dot(&xs).sqrt();
        let z = sc * w;
        let phi = asinhc(z);
        let kk = c.value() * log_radial_coeff(z);
        let g = g_tangent.row(i);
        let g_dot_xs = g.dot(&xs);
        for j in 0..d {
            out[[i, j + 1]] = phi * g[j] + kk * g_dot_xs * xs[j];
        }
    }
    out
}

/// Exponential map with full tangent rows (time component required zero).
pub fn exp_origin(v: &TangentVectors, c: Curvature) -> LorentzPoints {
    let spatial = v.data().slice(s![.., 1..]).to_owned();
    LorentzPoints::from_raw(exp_spatial(&spatial, c), c)
}

/// Logarithmic map returning tangent rows with an exactly-zero time component.
///
/// Errors if the input drifted off the manifold beyond tolerance.
pub fn log_origin(x: &LorentzPoints) -> Result<TangentVectors> {
    for (i, row) in x.data().rows().into_iter().enumerate() {
        check_on_manifold(row, x.curvature(), i)?;
    }
    let spatial = log_spatial(x.data(), x.curvature());
    Ok(TangentVectors::from_spatial(&spatial))
}

/// Squared geodesic distance between two manifold rows:
/// `((1/sqrt(c)) acosh(clamp(-c <x,y>_L, 1, inf)))^2`.
pub fn sqdist(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, c: Curvature) -> f64 {
    let beta = (-c.value() * lorentz_inner_unchecked(x, y)).max(1.0);
    let d = beta.acosh() / c.sqrt();
    d * d
}

/// Vector-Jacobian product of [`sqdist`] with respect to both ambient inputs.
pub fn sqdist_vjp(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    c: Curvature,
    g: f64,
) -> (Array1<f64>, Array1<f64>) {
    let beta = (-c.value() * lorentz_inner_unchecked(x, y)).max(1.0);
    // dD/dbeta = (2/c) * acosh(beta)/sqrt(beta^2-1); beta = c(x0 y0 - xs.ys)
    let coeff = 2.0 * g * acosh_ratio(beta);
    let d = x.len();
    let mut gx = Array1::zeros(d);
    let mut gy = Array1::zeros(d);
    gx[0] = coeff * y[0];
    gy[0] = coeff * x[0];
    for j in 1..d {
        gx[j] = -coeff * y[j];
        gy[j] = -coeff * x[j];
    }
    (gx, gy)
}

/// Folds an ambient cotangent onto the chart `xs -> (sqrt(1/c + ||xs||^2), xs)`,
/// i.e. the gradient with respect to the free spatial coordinates of an
/// on-manifold point. Used by finite-difference oracles that perturb points
/// along the manifold.
pub fn chart_gradient(x: ArrayView1<'_, f64>, g_ambient: ArrayView1<'_, f64>) -> Array1<f64> {
    let d = x.len() - 1;
    let x0 = x[0];
    let g0 = g_ambient[0];
    let mut out = Array1::zeros(d);
    for j in 0..d {
        out[j] = g_ambient[j + 1] + g0 * x[j + 1] / x0;
    }
    out
}

/// Hyperbolic activation `exp_o(act(log_o(x)))`, keeping the tangent time
/// component at zero throughout.
pub fn hyperbolic_activation(x: &LorentzPoints, act: Activation) -> Result<LorentzPoints> {
    for (i, row) in x.data().rows().into_iter().enumerate() {
        check_on_manifold(row, x.curvature(), i)?;
    }
    let mut tangent = log_spatial(x.data(), x.curvature());
    tangent.mapv_inplace(|v| act.apply(v));
    Ok(LorentzPoints::from_raw(
        exp_spatial(&tangent, x.curvature()),
        x.curvature(),
    ))
}
