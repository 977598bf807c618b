//! Finite-difference gradient checks over randomly drawn layers and small
//! models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actnet::{conv_nodes, dense_nodes, ActNetNodes, BranchMode};
use crate::error::Result;
use crate::model::{build_model, ModelConfig};
use crate::numerics::{check_objective, grad_check, GradCheckReport, Graph, NodeId, Tensor};
use crate::skeleton::{AgeGroup, SequenceMeta, SkeletonSequence};

pub const LAYER_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;
pub const CHECK_EPS: f64 = 1e-5;

fn random(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

fn nodes(ids: &[NodeId]) -> ActNetNodes {
    ActNetNodes {
        weight: ids[0],
        bias: ids[1],
        branch_weight: ids[2],
        branch_bias: ids[3],
    }
}

fn worse(a: GradCheckReport, b: GradCheckReport) -> GradCheckReport {
    if b.max_rel_error > a.max_rel_error {
        b
    } else {
        a
    }
}

/// One dense and one convolutional activation-network layer with random
/// parameters; the branch mode alternates with the seed parity.
pub fn layer_grad_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branch = if seed.is_multiple_of(2) {
        BranchMode::Shared
    } else {
        BranchMode::PerNode
    };
    let order = rng.random_range(1..=3u32);
    let rows = order as usize + 1;
    let (n_in, n_out) = (rng.random_range(2..=5), rng.random_range(2..=4));

    let x = random(&[n_in, 1], 1.0, &mut rng)?;
    let dense = [
        random(&[n_out, n_in], 0.8, &mut rng)?,
        random(&[n_out], 0.3, &mut rng)?,
        random(&[rows, n_out], 0.5, &mut rng)?,
        random(&[rows, n_out], 0.5, &mut rng)?,
    ];
    let dense_report = grad_check(
        |g, p| {
            let xi = g.input(x.clone());
            let y = dense_nodes(g, xi, &nodes(p), order, branch)?;
            let y = g.reshape(y, vec![n_out])?;
            check_objective(g, y, 0)
        },
        &dense,
        CHECK_EPS,
    )?;

    let (c_in, c_out, width, t) = (rng.random_range(1..=3), rng.random_range(2..=3), 3, 7);
    let xs = random(&[c_in, t], 1.0, &mut rng)?;
    let conv = [
        random(&[c_out, c_in, width], 0.6, &mut rng)?,
        random(&[c_out], 0.3, &mut rng)?,
        random(&[rows, c_out], 0.5, &mut rng)?,
        random(&[rows, c_out], 0.5, &mut rng)?,
    ];
    let conv_report = grad_check(
        |g, p| {
            let xi = g.input(xs.clone());
            let y = conv_nodes(g, xi, &nodes(p), order, branch, 1, 0)?;
            let pooled = g.global_max_pool_time(y)?;
            check_objective(g, pooled, 1)
        },
        &conv,
        CHECK_EPS,
    )?;
    Ok(worse(dense_report, conv_report))
}

/// The configuration used for model-scope checks: every stream and the
/// head, small enough to perturb every parameter.
pub fn gradcheck_model_config() -> ModelConfig {
    ModelConfig {
        widths: vec![2, 3],
        n_classes: 3,
        order: 2,
        ..ModelConfig::default()
    }
}

/// Full four-stream model on a random 16-frame skeleton.
pub fn model_grad_check(seed: u64) -> Result<GradCheckReport> {
    let cfg = gradcheck_model_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_model(&cfg, &mut rng)?;
    let meta = SequenceMeta {
        subject: 1,
        action: 0,
        age: AgeGroup::Adult,
    };
    let coords = (0..16 * cfg.coordinate_channels())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let seq = SkeletonSequence::new(meta, cfg.joints, cfg.dims, cfg.bodies, coords)?;
    let input = cfg.prepare(&seq)?;
    let label = rng.random_range(0..cfg.n_classes);
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    grad_check(
        |g: &mut Graph, ids| {
            let nodes = model.nodes_from_ids(ids)?;
            let out = model.forward_graph(g, &nodes, &input)?;
            check_objective(g, out.logits, label)
        },
        &params,
        CHECK_EPS,
    )
}
