use super::{NumericsError, Result, Tensor};

/// Central-difference gradient estimate of a scalar function, one
/// coordinate at a time: (f(x + h e_i) - f(x - h e_i)) / 2h.
///
/// This is the oracle that every backward() in the workspace is checked
/// against; it deliberately shares no code with the tape.
pub fn finite_diff_gradient(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    let mut grad = vec![0.0; x.numel()];
    for i in 0..x.numel() {
        let base = x.data()[i];
        let plus = f(&x.with_entry(i, base + h)?)?;
        let minus = f(&x.with_entry(i, base - h)?)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFinite { op: "finite_diff" });
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Max relative error between an analytic gradient and the central-difference
/// estimate, with denominators clamped at `floor`.
pub fn max_rel_err(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn norm_squared_gradient() {
        // f = ||x||^2 at x = [1, 2] -> [2, 4]
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let mut f = |t: &Tensor| -> crate::numerics::Result<f64> {
            Ok(t.data().iter().map(|v| v * v).sum())
        };
        let g = finite_diff_gradient(&mut f, &x, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::vector(vec![0.3, -0.7, 2.0]).unwrap();
        let mut f = |_: &Tensor| -> crate::numerics::Result<f64> { Ok(42.0) };
        let g = finite_diff_gradient(&mut f, &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agrees_with_backward_on_composite() {
        let x0 = Tensor::vector(vec![0.2, -0.4, 0.1]).unwrap();
        let run = |t: &Tensor| -> crate::numerics::Result<f64> {
            let tape = Tape::new();
            let x = tape.leaf(t.clone());
            let y = x.tanh()?.mul(x)?.sum()?;
            y.value().item()
        };
        let mut f = run;
        let numeric = finite_diff_gradient(&mut f, &x0, 1e-5).unwrap();

        let tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let loss = x.tanh().unwrap().mul(x).unwrap().sum().unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.wrt(x).unwrap();

        assert!(max_rel_err(analytic, &numeric, 1e-8) < 1e-6);
    }
}
