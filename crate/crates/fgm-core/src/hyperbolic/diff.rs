//! Differentiable Poincaré-ball operators over row-batched tape values.
//!
//! Each function treats an `N x L` tensor as `N` independent ball points
//! and composes tape primitives, so gradients flow through every step.
//! Row norms carry a vanishing epsilon under the square root; this keeps
//! the zero row (the origin) an exact fixed point without NaN gradients.

use crate::numerics::{Result, Var};

use super::Curvature;

/// Added inside `sqrt(sum(x^2) + EPS)`; far below any feature scale.
const NORM_EPS_SQ: f64 = 1e-48;

fn row_norm<'t>(x: Var<'t>) -> Result<Var<'t>> {
    x.mul(x)?.sum_axis(1)?.add_scalar(NORM_EPS_SQ)?.sqrt()
}

fn row_dot<'t>(x: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
    x.mul(y)?.sum_axis(1)
}

/// `exp_0` applied to every row.
pub fn exp0_rows(v: Var<'_>, curvature: Curvature) -> Result<Var<'_>> {
    let sc = curvature.sqrt_c();
    let n = row_norm(v)?;
    let scn = n.mul_scalar(sc)?;
    let scale = scn.tanh()?.div(scn)?;
    v.mul(scale)
}

/// `log_0` applied to every row. Rows must lie inside the ball.
pub fn log0_rows(y: Var<'_>, curvature: Curvature) -> Result<Var<'_>> {
    let sc = curvature.sqrt_c();
    let n = row_norm(y)?;
    let scn = n.mul_scalar(sc)?;
    let scale = scn.artanh()?.div(scn)?;
    y.mul(scale)
}

/// Row-wise Möbius addition. `y` may be a single `1 x L` row; it then
/// broadcasts against every row of `x`.
pub fn mobius_add_rows<'t>(x: Var<'t>, y: Var<'t>, curvature: Curvature) -> Result<Var<'t>> {
    let c = curvature.c();
    let xy = row_dot(x, y)?;
    let x2 = row_dot(x, x)?;
    let y2 = row_dot(y, y)?;
    let two_c_xy = xy.mul_scalar(2.0 * c)?;
    let coef_x = two_c_xy.add(y2.mul_scalar(c)?)?.add_scalar(1.0)?;
    let coef_y = x2.mul_scalar(-c)?.add_scalar(1.0)?;
    let den = two_c_xy
        .add(x2.mul(y2)?.mul_scalar(c * c)?)?
        .add_scalar(1.0)?;
    coef_x.mul(x)?.add(coef_y.mul(y)?)?.div(den)
}

/// Row-wise Möbius matrix-vector product: each row `x_i` maps to
/// `(1/sqrt(c)) * tanh((||M x_i|| / ||x_i||) * artanh(sqrt(c)||x_i||)) * M x_i / ||M x_i||`.
/// `weight` is `L_out x L_in`, rows are `N x L_in`.
pub fn mobius_matvec_rows<'t>(
    rows: Var<'t>,
    weight: Var<'t>,
    curvature: Curvature,
) -> Result<Var<'t>> {
    let sc = curvature.sqrt_c();
    let mx = rows.matmul(weight.transpose()?)?;
    let xn = row_norm(rows)?;
    let mxn = row_norm(mx)?;
    let ratio = mxn.div(xn)?;
    let mag = ratio
        .mul(xn.mul_scalar(sc)?.artanh()?)?
        .tanh()?
        .mul_scalar(1.0 / sc)?;
    mx.mul(mag.div(mxn)?)
}

/// Geodesic distance per row: `(2/sqrt(c)) * artanh(sqrt(c)*||(-x) ⊕ y||)`,
/// returned as an `N x 1` column.
pub fn distance_rows<'t>(x: Var<'t>, y: Var<'t>, curvature: Curvature) -> Result<Var<'t>> {
    let sc = curvature.sqrt_c();
    let delta = mobius_add_rows(x.neg()?, y, curvature)?;
    row_norm(delta)?
        .mul_scalar(sc)?
        .artanh()?
        .mul_scalar(2.0 / sc)
}

#[derive(Debug, Clone, Copy)]
pub enum RowActivation {
    Tanh,
    LeakyRelu(f64),
}

/// `exp_0(sigma(log_0(x)))` per row.
pub fn activation_rows(
    x: Var<'_>,
    sigma: RowActivation,
    curvature: Curvature,
) -> Result<Var<'_>> {
    let logged = log0_rows(x, curvature)?;
    let activated = match sigma {
        RowActivation::Tanh => logged.tanh()?,
        RowActivation::LeakyRelu(slope) => logged.leaky_relu(slope)?,
    };
    exp0_rows(activated, curvature)
}

/// Re-project rows that drifted onto or past the boundary shell back
/// inside. Rows already inside pass through untouched (the common case
/// inserts nothing into the graph). The per-row rescale factors are
/// treated as constants, so gradients flow through the scaling linearly.
pub fn project_rows(x: Var<'_>, curvature: Curvature) -> Result<Var<'_>> {
    let value = x.value();
    let shape = value.shape().to_vec();
    let (n, l) = (shape[0], shape[1]);
    let max_nsq = (1.0 - super::BOUNDARY_EPS) / curvature.c();
    let mut factors = vec![1.0; n];
    let mut hits = 0u64;
    for i in 0..n {
        let nsq: f64 = value.row(i).iter().map(|v| v * v).sum();
        if nsq > max_nsq {
            factors[i] = (max_nsq / nsq).sqrt();
            hits += 1;
        }
    }
    if hits == 0 {
        return Ok(x);
    }
    super::note_projection(hits);
    let _ = l;
    let f = x
        .tape()
        .constant(crate::numerics::Tensor::new(vec![n, 1], factors)?);
    x.mul(f)
}
