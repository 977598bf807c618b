use crate::error::{Error, Result};

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub elements_checked: usize,
    /// `(parameter index, element index)` of the worst element.
    pub worst: (usize, usize),
}

/// Scalar objective used for gradient checks of classifiers:
/// `CE(logits, label) + ½·mean(logits²)`.
pub fn check_objective(g: &mut Graph, logits: NodeId, label: usize) -> Result<NodeId> {
    let ce = g.softmax_cross_entropy(logits, label)?;
    let sq = g.pow(logits, 2);
    let msq = g.mean(sq);
    let half = g.scale(msq, 0.5);
    g.add(ce, half)
}

/// Compares analytic gradients against central differences for every
/// element of every parameter.
///
/// `build` receives a fresh graph plus the node ids of `params` (inserted
/// as trainable leaves, in order) and must return a scalar loss node. The
/// relative error per element is `|a − n| / max(|a|, |n|, 1e−12)`.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::config(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.param(p.clone())).collect();
        let root = build(&mut g, &ids)?;
        let v = g.value(root);
        if !v.is_scalar() {
            return Err(Error::NonScalarRoot(v.shape().to_vec()));
        }
        let loss = v.data()[0];
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        Ok(loss)
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = build(&mut g, &ids)?;
    let loss = g.value(root).data()[0];
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let grads = g.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        elements_checked: 0,
        worst: (0, 0),
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("parameter leaf has a gradient");
        for ei in 0..params[pi].len() {
            let x = params[pi].data()[ei];
            work[pi] = params[pi].with_element(ei, x + eps);
            let plus = eval(&work)?;
            work[pi] = params[pi].with_element(ei, x - eps);
            let minus = eval(&work)?;
            work[pi] = params[pi].clone();

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[ei];
            let denom = a.abs().max(numeric.abs()).max(1e-12);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
            }
            report.elements_checked += 1;
        }
    }
    Ok(report)
}
