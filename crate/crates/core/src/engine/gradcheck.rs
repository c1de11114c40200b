//! Central finite-difference verification of analytic gradients.
//!
//! The checked scalar is `L = sum_i out_i * r_i` with a fixed pseudo-random
//! projection `r`, evaluated in `f64` from the `f32` outputs. The analytic side
//! backpropagates `r` as the output gradient.
//!
//! Errors are normwise: each element's discrepancy is divided by
//! `max(|analytic|, |numeric|, scale)`, where `scale` is the largest analytic
//! magnitude among the checked elements of the same input. Central differences
//! of an `f32` computation carry roughly `1e-7 * |L| / eps` of absolute noise,
//! so elements far below the gradient's own scale cannot be resolved
//! elementwise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::tape::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Something with a forward map and a claimed vector-Jacobian product.
pub trait GradCheckable {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>>;
}

/// Adapts a closure that builds a [`Graph`] so its tape backward gets checked.
pub struct GraphOp<F>(pub F);

impl<F> GradCheckable for GraphOp<F>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let mut g = Graph::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = (self.0)(&mut g, &vars)?;
        Ok(g.take_value(out))
    }

    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = (self.0)(&mut g, &vars)?;
        let grads = g.backward(out, grad_out.clone())?;
        Ok(vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| grads.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect())
    }
}

/// Explicit forward/backward pair, e.g. an engine op used directly.
pub struct FnOp<F, B> {
    pub forward: F,
    pub backward: B,
}

impl<F, B> GradCheckable for FnOp<F, B>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
    B: Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>>,
{
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        (self.forward)(inputs)
    }

    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>> {
        (self.backward)(inputs, grad_out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f32,
    pub tolerance: f64,
    /// Absolute lower bound on the error denominator, for all-zero gradients.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            tolerance: 1e-3,
            floor: 1e-6,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    /// With `per_input`, each input tensor gets its own scale; otherwise all
    /// checked elements share one.
    fn from_pairs(pairs: Vec<Mismatch>, cfg: &GradCheckConfig, per_input: bool) -> Self {
        let group = |m: &Mismatch| if per_input { m.input } else { 0 };
        let groups = pairs.iter().map(|m| group(m) + 1).max().unwrap_or(0);
        let mut scale = vec![cfg.floor; groups];
        for m in &pairs {
            scale[group(m)] = scale[group(m)].max(m.analytic.abs());
        }
        let checked = pairs.len();
        let mut max_rel_err = 0.0f64;
        let mut worst = None;
        for m in pairs {
            let err = relative_error(m.analytic, m.numeric, scale[group(&m)]);
            if err > max_rel_err || worst.is_none() {
                max_rel_err = max_rel_err.max(err);
                worst = Some(m);
            }
        }
        Self {
            checked,
            max_rel_err,
            tolerance: cfg.tolerance,
            passed: max_rel_err <= cfg.tolerance,
            worst,
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

pub fn projection(shape: [usize; 4], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, -1.0, 1.0, &mut rng)
}

fn project(out: &Tensor, r: &Tensor) -> f64 {
    out.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Checks every element of every input.
pub fn finite_diff_check<O: GradCheckable + ?Sized>(
    op: &O,
    inputs: &[Tensor],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let out = op.forward(inputs)?;
    let r = projection(out.shape(), cfg.seed);
    let analytic = op.backward(inputs, &r)?;
    if analytic.len() != inputs.len() {
        return Err(shape_err("finite_diff_check", "one gradient per input expected"));
    }
    let mut pairs = Vec::new();
    let mut work = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        grad.ensure_shape("finite_diff_check", inputs[i].shape())?;
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + cfg.eps;
            let plus = project(&op.forward(&work)?, &r);
            work[i].data_mut()[j] = orig - cfg.eps;
            let minus = project(&op.forward(&work)?, &r);
            work[i].data_mut()[j] = orig;
            let step = (orig + cfg.eps) as f64 - (orig - cfg.eps) as f64;
            pairs.push(Mismatch {
                input: i,
                index: j,
                analytic: grad.data()[j] as f64,
                numeric: (plus - minus) / step,
            });
        }
    }
    Ok(GradCheckReport::from_pairs(pairs, cfg, true))
}

/// Checks a scalar objective at selected coordinates of a set of tensors.
/// `points` are `(tensor, element)` pairs; `analytic` gives the claimed
/// gradient at each point. All points share one error scale.
pub fn finite_diff_sampled(
    tensors: &mut [Tensor],
    points: &[(usize, usize)],
    analytic: &[f64],
    cfg: &GradCheckConfig,
    mut objective: impl FnMut(&[Tensor]) -> Result<f64>,
) -> Result<GradCheckReport> {
    if points.len() != analytic.len() {
        return Err(shape_err("finite_diff_sampled", "points and analytic lengths differ"));
    }
    let mut pairs = Vec::with_capacity(points.len());
    for (&(t, j), &a) in points.iter().zip(analytic) {
        let orig = tensors[t].data()[j];
        tensors[t].data_mut()[j] = orig + cfg.eps;
        let plus = objective(tensors)?;
        tensors[t].data_mut()[j] = orig - cfg.eps;
        let minus = objective(tensors)?;
        tensors[t].data_mut()[j] = orig;
        let step = (orig + cfg.eps) as f64 - (orig - cfg.eps) as f64;
        pairs.push(Mismatch {
            input: t,
            index: j,
            analytic: a,
            numeric: (plus - minus) / step,
        });
    }
    Ok(GradCheckReport::from_pairs(pairs, cfg, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::elementwise::{relu_backward, relu_forward};

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-2), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-2) - 0.1 / 1.1).abs() < 1e-12);
        assert!((relative_error(1e-4, 0.0, 1e-2) - 1e-2).abs() < 1e-12);
    }

    #[test]
    fn errors_are_scaled_per_input() {
        let pairs = vec![
            Mismatch { input: 0, index: 0, analytic: 1.0, numeric: 1.0 },
            Mismatch { input: 0, index: 1, analytic: 1e-3, numeric: 1.5e-3 },
            Mismatch { input: 1, index: 0, analytic: 1e-3, numeric: 1.5e-3 },
        ];
        let report = GradCheckReport::from_pairs(pairs, &GradCheckConfig::default(), true);
        // input 1 has no larger element, so its error is fully relative
        assert!((report.max_rel_err - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(report.worst.unwrap().input, 1);
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![0.5, -0.7, 1.2, -2.0]).unwrap();
        let bad = FnOp {
            forward: |i: &[Tensor]| Ok(relu_forward(&i[0])),
            backward: |i: &[Tensor], g: &Tensor| Ok(vec![relu_backward(&i[0], g)?.map(|v| v * 1.05)]),
        };
        let report = finite_diff_check(&bad, &[x], &GradCheckConfig::default()).unwrap();
        assert!(!report.passed, "{report:?}");
    }
}
