use super::Layer;
use crate::error::Result;
use crate::numerics::{finite_diff_gradient, grad_check, GradCheckReport, Matrix};

/// Analytic and central-difference gradients of `Σ out ⊙ upstream` with
/// respect to every parameter (first) and every input entry (after).
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub num_params: usize,
}

impl LayerCheck {
    pub fn report(&self) -> GradCheckReport {
        grad_check(&self.analytic, &self.numeric).expect("equal lengths by construction")
    }

    pub fn param_report(&self) -> GradCheckReport {
        let n = self.num_params;
        grad_check(&self.analytic[..n], &self.numeric[..n]).expect("equal lengths")
    }

    pub fn input_report(&self) -> GradCheckReport {
        let n = self.num_params;
        grad_check(&self.analytic[n..], &self.numeric[n..]).expect("equal lengths")
    }
}

fn weighted_sum(out: &Matrix, upstream: &Matrix) -> f64 {
    out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
}

/// Compares a layer's backward pass against central differences. The layer is
/// run deterministically (no dropout).
pub fn check_layer<L: Layer>(
    layer: &L,
    x: &Matrix,
    len: usize,
    upstream: &Matrix,
    eps: f64,
) -> Result<LayerCheck> {
    let (out, cache) = layer.forward_cached(x, len, None)?;
    out.ensure_shape("check_layer upstream", upstream.rows(), upstream.cols())?;
    let (dx, grads) = layer.backward(&cache, upstream)?;
    let mut analytic = grads.flatten();
    let num_params = analytic.len();
    analytic.extend_from_slice(dx.data());

    let theta = layer.flatten();
    let mut probe = layer.clone();
    let mut numeric = finite_diff_gradient(
        |t| {
            probe.assign_flat(t)?;
            Ok(weighted_sum(&probe.forward(x, len)?, upstream))
        },
        &theta,
        eps,
    )?;
    let input_numeric = finite_diff_gradient(
        |t| {
            let xi = Matrix::from_vec(x.rows(), x.cols(), t.to_vec())?;
            Ok(weighted_sum(&layer.forward(&xi, len)?, upstream))
        },
        x.data(),
        eps,
    )?;
    numeric.extend(input_numeric);
    Ok(LayerCheck {
        analytic,
        numeric,
        num_params,
    })
}
