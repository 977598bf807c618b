use crate::error::{Error, Result};
use crate::numerics::{softmax, Tensor};

/// Late fusion with equal weights; see [`fuse_scores_weighted`].
pub fn fuse_scores(logits_a: &Tensor, logits_b: &Tensor) -> Result<Tensor> {
    fuse_scores_weighted(logits_a, logits_b, 0.5)
}

/// Log of `w * softmax(a) + (1 - w) * softmax(b)`. The result is itself a
/// valid logit vector whose softmax is the fused distribution.
pub fn fuse_scores_weighted(logits_a: &Tensor, logits_b: &Tensor, weight_a: f64) -> Result<Tensor> {
    if logits_a.rank() != 1 || logits_a.shape() != logits_b.shape() {
        return Err(Error::ShapeMismatch {
            op: "fuse_scores",
            lhs: logits_a.shape().to_vec(),
            rhs: logits_b.shape().to_vec(),
        });
    }
    if !(0.0..=1.0).contains(&weight_a) {
        return Err(Error::config(format!("fusion weight {weight_a} outside [0, 1]")));
    }
    if !logits_a.is_finite() || !logits_b.is_finite() {
        return Err(Error::NonFinite("fusion input".into()));
    }
    let (pa, pb) = (softmax(logits_a.data()), softmax(logits_b.data()));
    let fused: Vec<f64> = pa
        .iter()
        .zip(&pb)
        .map(|(a, b)| (weight_a * a + (1.0 - weight_a) * b).ln())
        .collect();
    Tensor::vector(fused)
}
