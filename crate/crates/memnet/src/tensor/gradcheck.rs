//! Finite-difference verification of tape gradients.
//!
//! The builder closure constructs the scalar graph from leaf ids, so the
//! analytic gradient (one backward pass) and the numeric one (central
//! differences of the re-run forward) come from the same definition of f.

use super::{NodeId, Rng, Tape, Tensor};
use crate::error::{Error, Result};

/// Builds the scalar function under test on a fresh tape. Receives one leaf
/// id per input tensor, in order, and returns the root node.
pub trait GraphFn: Fn(&mut Tape, &[NodeId]) -> Result<NodeId> {}
impl<F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>> GraphFn for F {}

/// Per-input worst relative error, plus the overall maximum.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_input: Vec<f64>,
    pub max: f64,
}

/// Checks every coordinate of every input against central differences
/// `(f(x+h) - f(x-h)) / 2h`. Relative error is `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check(f: impl GraphFn, inputs: &[Tensor], h: f64) -> Result<GradCheckReport> {
    let coords: Vec<Vec<usize>> = inputs.iter().map(|t| (0..t.numel()).collect()).collect();
    grad_check_at(f, inputs, h, &coords)
}

/// Like [`grad_check`] but probes at most `coords_per_input` randomly chosen
/// coordinates per input tensor. Full sweeps over a model's weight matrices
/// cost two forward passes per coordinate; sampling keeps that tractable.
pub fn grad_check_sampled(
    f: impl GraphFn,
    inputs: &[Tensor],
    h: f64,
    coords_per_input: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let coords: Vec<Vec<usize>> = inputs
        .iter()
        .map(|t| {
            if t.numel() <= coords_per_input {
                (0..t.numel()).collect()
            } else {
                (0..coords_per_input)
                    .map(|_| rng.below(t.numel()))
                    .collect()
            }
        })
        .collect();
    grad_check_at(f, inputs, h, &coords)
}

fn grad_check_at(
    f: impl GraphFn,
    inputs: &[Tensor],
    h: f64,
    coords: &[Vec<usize>],
) -> Result<GradCheckReport> {
    let eval = |moved: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = moved.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = f(&mut tape, &ids)?;
        let v = tape.value(root).item()?;
        if !v.is_finite() {
            return Err(Error::Domain {
                op: "grad_check",
                msg: format!("function value {v} is not finite"),
            });
        }
        Ok(v)
    };

    // Analytic gradients from one recorded pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &ids)?;
    eval(inputs)?; // surfaces non-finite f before differencing
    let grads = tape.backward(root)?;

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (pi, cs) in coords.iter().enumerate() {
        let mut worst = 0.0f64;
        for &ci in cs {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + h;
            let fp = eval(&work)?;
            work[pi].data_mut()[ci] = orig - h;
            let fm = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads.get(ids[pi]).data()[ci];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
        per_input.push(worst);
    }
    let max = per_input.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport { per_input, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ReduceAxis;

    #[test]
    fn quadratic_is_exact_to_1e8() {
        // f = 0.5 * ||theta||^2 has gradient theta; central differences are
        // exact for quadratics up to floating-point noise.
        let theta = Tensor::vector(vec![3.0, -1.5, 0.0, 42.0]);
        let report = grad_check(
            |tape, ids| {
                let sq = tape.mul(ids[0], ids[0])?;
                let s = tape.sum(sq, ReduceAxis::All)?;
                Ok(tape.scale(s, 0.5))
            },
            &[theta],
            1e-5,
        )
        .unwrap();
        assert!(report.max < 1e-8, "max rel err {}", report.max);
    }

    #[test]
    fn constant_function_has_zero_gradient_both_ways() {
        let theta = Tensor::vector(vec![1.0, 2.0]);
        let report = grad_check(
            |tape, ids| {
                let z = tape.scale(ids[0], 0.0);
                tape.sum(z, ReduceAxis::All)
            },
            &[theta],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max, 0.0);
    }

    #[test]
    fn non_finite_function_is_a_domain_error() {
        let theta = Tensor::vector(vec![1e308]);
        let err = grad_check(
            |tape, ids| {
                let sq = tape.mul(ids[0], ids[0])?;
                tape.sum(sq, ReduceAxis::All)
            },
            &[theta],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }
}
