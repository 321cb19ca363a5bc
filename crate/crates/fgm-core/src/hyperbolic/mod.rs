//! Poincaré-ball geometry: curvature-parameterized Möbius calculus,
//! exponential/logarithmic maps, geodesic distances, and the hyperbolic
//! activation/aggregation operators used by the graph convolution.
//!
//! Two routes are provided. The plain functions here operate on f64
//! slices and are used wherever no gradients are needed (diagnostics,
//! evaluation). The [`diff`] submodule builds the same operators out of
//! tape primitives so they can sit inside a trained forward pass.
//!
//! All trainable parameters stay Euclidean; the ball is only a transport
//! space for features. Note on the conformal factor: we use
//! `lambda_x = 2 / (1 - c*||x||^2)` (with the curvature inside the norm
//! term) so the maps stay dimensionally consistent across curvatures.

pub mod diff;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::numerics::Tensor;

/// Shell width that keeps points strictly inside the ball:
/// `c * ||x||^2 < 1 - BOUNDARY_EPS` after projection.
pub const BOUNDARY_EPS: f64 = 1e-5;

static PROJECTION_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of boundary re-projections performed so far (process-wide).
pub fn projection_count() -> u64 {
    PROJECTION_COUNT.load(Ordering::Relaxed)
}

pub fn reset_projection_count() {
    PROJECTION_COUNT.store(0, Ordering::Relaxed);
}

pub(crate) fn note_projection(n: u64) {
    if n > 0 {
        PROJECTION_COUNT.fetch_add(n, Ordering::Relaxed);
    }
}

#[derive(Debug, Error)]
pub enum HyperbolicError {
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("curvature must be positive, got {0}")]
    InvalidCurvature(f64),
    #[error("point lies on or outside the ball boundary")]
    OutsideBall,
    #[error("aggregate needs at least one point and positive weight sum")]
    EmptyAggregate,
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, HyperbolicError>;

/// Positive curvature `c`; the ball radius is `1/sqrt(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    c: f64,
}

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self { c })
        } else {
            Err(HyperbolicError::InvalidCurvature(c))
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sqrt_c(&self) -> f64 {
        self.c.sqrt()
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.c.sqrt()
    }

    /// Largest admissible squared norm, `(1 - BOUNDARY_EPS) / c`.
    fn max_norm_sq(&self) -> f64 {
        (1.0 - BOUNDARY_EPS) / self.c
    }
}

/// A position inside the ball of curvature `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

impl PoincarePoint {
    /// Wrap coordinates, re-projecting into the boundary shell if needed.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Self {
        let coords = project_coords(coords, curvature);
        Self { coords, curvature }
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        Self {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Gyro-inverse: plain negation.
    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|v| -v).collect(),
            curvature: self.curvature,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if (self.curvature.c - other.curvature.c).abs() > 0.0 {
            return Err(HyperbolicError::CurvatureMismatch(
                self.curvature.c,
                other.curvature.c,
            ));
        }
        if self.dim() != other.dim() {
            return Err(HyperbolicError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// Tangent vector at a basepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub coords: Vec<f64>,
    pub basepoint: PoincarePoint,
}

impl TangentVector {
    pub fn at_origin(coords: Vec<f64>, curvature: Curvature) -> Self {
        let dim = coords.len();
        Self {
            coords,
            basepoint: PoincarePoint::origin(dim, curvature),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

fn project_coords(coords: Vec<f64>, curvature: Curvature) -> Vec<f64> {
    let nsq = norm_sq(&coords);
    let max_nsq = curvature.max_norm_sq();
    if nsq <= max_nsq {
        return coords;
    }
    note_projection(1);
    let scale = (max_nsq / nsq).sqrt();
    coords.into_iter().map(|v| v * scale).collect()
}

pub(crate) fn mobius_add_slice(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let cx = 1.0 + 2.0 * c * xy + c * y2;
    let cy = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter()
        .zip(y)
        .map(|(xi, yi)| (cx * xi + cy * yi) / den)
        .collect()
}

pub(crate) fn exp0_slice(v: &[f64], c: f64) -> Vec<f64> {
    let sc = c.sqrt();
    let n = norm_sq(v).sqrt();
    if n < 1e-15 {
        return v.to_vec();
    }
    let scale = (sc * n).tanh() / (sc * n);
    v.iter().map(|vi| vi * scale).collect()
}

pub(crate) fn log0_slice(y: &[f64], c: f64) -> Result<Vec<f64>> {
    let sc = c.sqrt();
    let n = norm_sq(y).sqrt();
    if n < 1e-15 {
        return Ok(y.to_vec());
    }
    if sc * n >= 1.0 {
        return Err(HyperbolicError::OutsideBall);
    }
    let scale = (sc * n).atanh() / (sc * n);
    Ok(y.iter().map(|yi| yi * scale).collect())
}

pub(crate) fn distance_slice(x: &[f64], y: &[f64], c: f64) -> f64 {
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let delta = mobius_add_slice(&neg_x, y, c);
    let sc = c.sqrt();
    let arg = (sc * norm_sq(&delta).sqrt()).min(1.0 - 1e-15);
    (2.0 / sc) * arg.atanh()
}

/// Möbius addition `x ⊕ y`, re-projected into the ball.
pub fn mobius_add(x: &PoincarePoint, y: &PoincarePoint) -> Result<PoincarePoint> {
    x.check_compatible(y)?;
    let c = x.curvature.c;
    Ok(PoincarePoint::new(
        mobius_add_slice(&x.coords, &y.coords, c),
        x.curvature,
    ))
}

/// Conformal factor `lambda_x = 2 / (1 - c*||x||^2)`.
fn lambda(x: &PoincarePoint) -> f64 {
    2.0 / (1.0 - x.curvature.c * norm_sq(&x.coords)).max(1e-15)
}

/// Exponential map. At the origin this is
/// `exp_0(v) = tanh(sqrt(c)*||v||) * v / (sqrt(c)*||v||)`; a general
/// basepoint is reached by Möbius translation:
/// `exp_x(v) = x ⊕ exp_0((lambda_x / 2) * v)`.
pub fn exp_map(v: &TangentVector) -> Result<PoincarePoint> {
    let base = &v.basepoint;
    let c = base.curvature.c;
    if norm_sq(&base.coords) == 0.0 {
        return Ok(PoincarePoint::new(exp0_slice(&v.coords, c), base.curvature));
    }
    let half_lambda = lambda(base) / 2.0;
    let scaled: Vec<f64> = v.coords.iter().map(|vi| vi * half_lambda).collect();
    let moved = exp0_slice(&scaled, c);
    Ok(PoincarePoint::new(
        mobius_add_slice(&base.coords, &moved, c),
        base.curvature,
    ))
}

/// Logarithmic map, inverse of [`exp_map`]:
/// `log_x(y) = (2 / lambda_x) * log_0((-x) ⊕ y)`.
pub fn log_map(y: &PoincarePoint, basepoint: &PoincarePoint) -> Result<TangentVector> {
    y.check_compatible(basepoint)?;
    let c = y.curvature.c;
    if norm_sq(&basepoint.coords) == 0.0 {
        return Ok(TangentVector {
            coords: log0_slice(&y.coords, c)?,
            basepoint: basepoint.clone(),
        });
    }
    let delta = mobius_add_slice(&basepoint.neg().coords, &y.coords, c);
    let logged = log0_slice(&delta, c)?;
    let inv_half_lambda = 2.0 / lambda(basepoint);
    Ok(TangentVector {
        coords: logged.iter().map(|v| v * inv_half_lambda).collect(),
        basepoint: basepoint.clone(),
    })
}

/// Geodesic distance `d(x,y) = (2/sqrt(c)) * artanh(sqrt(c) * ||(-x) ⊕ y||)`.
pub fn geodesic_distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    x.check_compatible(y)?;
    Ok(distance_slice(&x.coords, &y.coords, x.curvature.c))
}

/// Möbius matrix-vector product `M ⊗ x`. Zero input or zero image maps to
/// the origin.
pub fn mobius_matvec(m: &Tensor, x: &PoincarePoint) -> Result<PoincarePoint> {
    let shape = m.shape();
    if shape.len() != 2 || shape[1] != x.dim() {
        return Err(HyperbolicError::DimensionMismatch(
            shape.last().copied().unwrap_or(0),
            x.dim(),
        ));
    }
    let c = x.curvature.c;
    let sc = c.sqrt();
    let (rows, cols) = (shape[0], shape[1]);
    let mut mx = vec![0.0; rows];
    for i in 0..rows {
        for j in 0..cols {
            mx[i] += m.at(i, j) * x.coords[j];
        }
    }
    let xn = norm_sq(&x.coords).sqrt();
    let mxn = norm_sq(&mx).sqrt();
    if xn < 1e-15 || mxn < 1e-15 {
        return Ok(PoincarePoint::origin(rows, x.curvature));
    }
    let mag = ((mxn / xn) * (sc * xn).atanh()).tanh() / sc;
    Ok(PoincarePoint::new(
        mx.iter().map(|v| v * mag / mxn).collect(),
        x.curvature,
    ))
}

/// Pointwise nonlinearity choices for [`hyperbolic_activation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Tanh => v.tanh(),
            Activation::LeakyRelu(slope) => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
        }
    }
}

/// `sigma_H(x) = exp_0(sigma(log_0(x)))`: apply a Euclidean nonlinearity
/// in the tangent space at the origin.
pub fn hyperbolic_activation(x: &PoincarePoint, sigma: Activation) -> Result<PoincarePoint> {
    let c = x.curvature.c;
    let logged = log0_slice(&x.coords, c)?;
    let activated: Vec<f64> = logged.iter().map(|&v| sigma.apply(v)).collect();
    Ok(PoincarePoint::new(exp0_slice(&activated, c), x.curvature))
}

/// Weighted tangent-space mean: `exp_0(sum_i w_i log_0(p_i) / sum_i w_i)`.
pub fn hyperbolic_aggregate(points: &[PoincarePoint], weights: &[f64]) -> Result<PoincarePoint> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(HyperbolicError::EmptyAggregate);
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 || weights.iter().any(|&w| w < 0.0) {
        return Err(HyperbolicError::EmptyAggregate);
    }
    let curvature = points[0].curvature;
    let dim = points[0].dim();
    let mut acc = vec![0.0; dim];
    for (p, &w) in points.iter().zip(weights) {
        points[0].check_compatible(p)?;
        let logged = log0_slice(&p.coords, curvature.c)?;
        for (a, l) in acc.iter_mut().zip(&logged) {
            *a += w * l;
        }
    }
    for a in &mut acc {
        *a /= wsum;
    }
    Ok(PoincarePoint::new(exp0_slice(&acc, curvature.c), curvature))
}

#[cfg(test)]
mod tests;
