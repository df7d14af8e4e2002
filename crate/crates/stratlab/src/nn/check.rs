//! Gradient evaluation and the central-finite-difference oracle.
//!
//! A loss is expressed as a builder closure `Fn(&mut Graph, &[Binding]) -> Var`
//! over one binding per parameter set. The builder must be deterministic:
//! any sampling noise is drawn beforehand and injected as constants.

use super::graph::{Graph, Var};
use super::params::{Binding, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Evaluate the scalar loss at the current parameters.
pub fn eval_loss<F>(sets: &[&ParamSet], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Binding]) -> Var,
{
    let mut g = Graph::new();
    let bindings: Vec<Binding> = sets.iter().map(|s| s.bind(&mut g)).collect();
    let loss = build(&mut g, &bindings);
    let v = g.value(loss);
    if v.shape() != (1, 1) {
        return Err(Error::invalid_argument("loss must be scalar"));
    }
    Ok(v.item())
}

/// Exact reverse-mode gradients of the loss w.r.t. every set, in set order.
pub fn grad<F>(sets: &[&ParamSet], build: &F) -> Result<(f64, Vec<Vec<Tensor>>)>
where
    F: Fn(&mut Graph, &[Binding]) -> Var,
{
    let mut g = Graph::new();
    let bindings: Vec<Binding> = sets.iter().map(|s| s.bind(&mut g)).collect();
    let loss = build(&mut g, &bindings);
    let grads = g.backward(loss)?;
    let per_set = sets
        .iter()
        .zip(bindings.iter())
        .map(|(s, b)| b.gradients(s, &grads))
        .collect();
    Ok((g.value(loss).item(), per_set))
}

/// `scale * sum of squared parameters` over a binding. Added to a loss under
/// finite-difference checking it keeps every coordinate's gradient well
/// above central-difference roundoff; the network-path gradients ride on
/// top and are what the comparison exercises.
pub fn l2_probe(g: &mut Graph, b: &super::params::Binding, scale: f64) -> Var {
    let mut terms = Vec::with_capacity(b.vars().len());
    for v in b.vars() {
        terms.push(g.sum_sq(*v));
    }
    let stacked = g.concat_rows(&terms);
    let total = g.sum_all(stacked);
    g.scale(total, scale)
}

fn flatten(grads: &[Tensor]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in grads {
        out.extend_from_slice(t.data());
    }
    out
}

/// Max over all coordinates of
/// `|analytic - central| / (|analytic| + |central| + 1e-12)`.
pub fn finite_diff_check<F>(sets: &[&ParamSet], step: f64, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Binding]) -> Var,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, analytic) = grad(sets, build)?;
    let analytic_flat: Vec<Vec<f64>> = analytic.iter().map(|g| flatten(g)).collect();

    let mut work: Vec<ParamSet> = sets.iter().map(|s| (*s).clone()).collect();
    let mut max_rel: f64 = 0.0;

    for si in 0..work.len() {
        let base = work[si].to_flat();
        let mut perturbed = base.clone();
        for i in 0..base.len() {
            perturbed[i] = base[i] + step;
            work[si].from_flat(&perturbed);
            let refs: Vec<&ParamSet> = work.iter().collect();
            let plus = eval_loss(&refs, build)?;

            perturbed[i] = base[i] - step;
            work[si].from_flat(&perturbed);
            let refs: Vec<&ParamSet> = work.iter().collect();
            let minus = eval_loss(&refs, build)?;

            perturbed[i] = base[i];
            work[si].from_flat(&perturbed);

            let central = (plus - minus) / (2.0 * step);
            let a = analytic_flat[si][i];
            let rel = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
