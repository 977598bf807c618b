//! Activation-network layers.
//!
//! A linear map `u = W·x + b` whose output node `i` is activated by a
//! polynomial `Σ_k a_{k,i}·u_i^k`, where the coefficients `a` are produced
//! from `u` itself by a small branch network `(V, z)`:
//!
//! ```text
//! a_{k,i} = Σ_j V_{k,j}·u_j + z_{k,i}        (shared branch, default)
//! a_{k,i} = V_{k,i}·u_i + z_{k,i}            (per-node branch)
//! ```
//!
//! Every activation curve is therefore a function of the input sample.
//! The convolutional form applies the same computation to each column of
//! the Toeplitz-unrolled input, i.e. to every time step of `conv1d`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};

/// How the branch network mixes pre-activations into coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    /// `Σ_j V_{k,j} u_j` is shared by every output node; only `z` is per node.
    #[default]
    Shared,
    /// Each node's coefficients depend on its own pre-activation only.
    PerNode,
}

/// Parameters of one activation-network layer, dense or convolutional.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationNetworkParams {
    /// `[n_out × n_in]` for dense layers, `[C_out × C_in × k]` for conv.
    pub weight: Tensor,
    /// `[n_out]`
    pub bias: Tensor,
    /// Branch weights `V`, `[(K+1) × n_out]`.
    pub branch_weight: Tensor,
    /// Branch biases `z`, `[(K+1) × n_out]`.
    pub branch_bias: Tensor,
    pub order: u32,
    pub branch: BranchMode,
}

/// Graph handles for a layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct ActNetNodes {
    pub weight: NodeId,
    pub bias: NodeId,
    pub branch_weight: NodeId,
    pub branch_bias: NodeId,
}

impl ActNetNodes {
    pub fn as_array(&self) -> [NodeId; 4] {
        [self.weight, self.bias, self.branch_weight, self.branch_bias]
    }
}

impl ActivationNetworkParams {
    pub fn n_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn is_conv(&self) -> bool {
        self.weight.rank() == 3
    }

    /// Kernel width of a convolutional layer; 1 for dense layers.
    pub fn kernel_width(&self) -> usize {
        if self.is_conv() {
            self.weight.shape()[2]
        } else {
            1
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.weight, &self.bias, &self.branch_weight, &self.branch_bias]
    }

    /// Rebuilds the parameter set from four tensors in [`Self::tensors`] order.
    pub fn with_tensors(&self, tensors: [Tensor; 4]) -> Result<Self> {
        let [weight, bias, branch_weight, branch_bias] = tensors;
        let p = Self {
            weight,
            bias,
            branch_weight,
            branch_bias,
            order: self.order,
            branch: self.branch,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("polynomial order K must be at least 1"));
        }
        if !(self.weight.rank() == 2 || self.weight.rank() == 3) {
            return Err(Error::InvalidShape {
                shape: self.weight.shape().to_vec(),
                reason: "weight must be [n_out x n_in] or [C_out x C_in x k]".into(),
            });
        }
        let n = self.n_out();
        let p = self.order as usize + 1;
        let expect = |t: &Tensor, shape: &[usize], op| {
            if t.shape() == shape {
                Ok(())
            } else {
                Err(Error::ShapeMismatch {
                    op,
                    lhs: t.shape().to_vec(),
                    rhs: shape.to_vec(),
                })
            }
        };
        expect(&self.bias, &[n], "actnet bias")?;
        expect(&self.branch_weight, &[p, n], "actnet branch weight")?;
        expect(&self.branch_bias, &[p, n], "actnet branch bias")?;
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("activation-network parameters".into()));
        }
        Ok(())
    }

    /// Registers the parameters as trainable leaves.
    pub fn insert(&self, g: &mut Graph) -> ActNetNodes {
        ActNetNodes {
            weight: g.param(self.weight.clone()),
            bias: g.param(self.bias.clone()),
            branch_weight: g.param(self.branch_weight.clone()),
            branch_bias: g.param(self.branch_bias.clone()),
        }
    }

    /// Registers the parameters as constants.
    pub fn insert_frozen(&self, g: &mut Graph) -> ActNetNodes {
        ActNetNodes {
            weight: g.input(self.weight.clone()),
            bias: g.input(self.bias.clone()),
            branch_weight: g.input(self.branch_weight.clone()),
            branch_bias: g.input(self.branch_bias.clone()),
        }
    }
}

/// Polynomial coefficient maps `a_k`, each `[n × N]`, for pre-activations
/// `u[n × N]`.
pub fn coefficient_nodes(
    g: &mut Graph,
    u: NodeId,
    nodes: &ActNetNodes,
    order: u32,
    branch: BranchMode,
) -> Result<Vec<NodeId>> {
    let shared = match branch {
        BranchMode::Shared => Some(g.matmul(nodes.branch_weight, u)?),
        BranchMode::PerNode => None,
    };
    let mut coeffs = Vec::with_capacity(order as usize + 1);
    for k in 0..=order as usize {
        let z_row = g.select_row(nodes.branch_bias, k)?;
        let z_col = g.transpose(z_row)?;
        let a = match shared {
            Some(s) => {
                let s_row = g.select_row(s, k)?;
                g.add(s_row, z_col)?
            }
            None => {
                let v_row = g.select_row(nodes.branch_weight, k)?;
                let v_col = g.transpose(v_row)?;
                let vu = g.mul(v_col, u)?;
                g.add(vu, z_col)?
            }
        };
        coeffs.push(a);
    }
    Ok(coeffs)
}

/// Applies the input-dependent polynomial activation to `u[n × N]`.
pub fn activate(
    g: &mut Graph,
    u: NodeId,
    nodes: &ActNetNodes,
    order: u32,
    branch: BranchMode,
) -> Result<NodeId> {
    let coeffs = coefficient_nodes(g, u, nodes, order, branch)?;
    let mut out: Option<NodeId> = None;
    for (k, a) in coeffs.into_iter().enumerate() {
        let power = g.pow(u, k as u32);
        let term = g.mul(a, power)?;
        out = Some(match out {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(out.expect("order >= 1 gives at least two terms"))
}

fn bias_column(g: &mut Graph, bias: NodeId) -> Result<NodeId> {
    let n = g.value(bias).len();
    g.reshape(bias, vec![n, 1])
}

/// Dense layer on `x[n_in × N]` (columns are samples).
pub fn dense_nodes(
    g: &mut Graph,
    x: NodeId,
    nodes: &ActNetNodes,
    order: u32,
    branch: BranchMode,
) -> Result<NodeId> {
    let wx = g.matmul(nodes.weight, x)?;
    let b = bias_column(g, nodes.bias)?;
    let u = g.add(wx, b)?;
    activate(g, u, nodes, order, branch)
}

/// Convolutional layer on `x[C_in × T]`.
pub fn conv_nodes(
    g: &mut Graph,
    x: NodeId,
    nodes: &ActNetNodes,
    order: u32,
    branch: BranchMode,
    stride: usize,
    pad: usize,
) -> Result<NodeId> {
    let wx = g.conv1d(x, nodes.weight, stride, pad)?;
    let b = bias_column(g, nodes.bias)?;
    let u = g.add(wx, b)?;
    activate(g, u, nodes, order, branch)
}

fn as_columns(x: &Tensor, n_in: usize) -> Result<Tensor> {
    let (rows, cols) = x.dims2()?;
    if rows != n_in {
        return Err(Error::ShapeMismatch {
            op: "act_forward",
            lhs: x.shape().to_vec(),
            rhs: vec![n_in],
        });
    }
    x.reshape(vec![rows, cols])
}

/// Dense forward pass for `x[n_in]` or a batch `x[n_in × N]`.
pub fn act_forward(x: &Tensor, p: &ActivationNetworkParams) -> Result<Tensor> {
    p.validate()?;
    if p.is_conv() {
        return Err(Error::config("act_forward expects a dense layer"));
    }
    let xc = as_columns(x, p.n_in())?;
    let mut g = Graph::new();
    let xi = g.input(xc);
    let nodes = p.insert_frozen(&mut g);
    let y = dense_nodes(&mut g, xi, &nodes, p.order, p.branch)?;
    let out = g.value(y).clone();
    if x.rank() == 1 {
        out.reshape(vec![p.n_out()])
    } else {
        Ok(out)
    }
}

/// Coefficients `a[(K+1) × n_out × N]` the branch network assigns to `x`.
pub fn coefficients(x: &Tensor, p: &ActivationNetworkParams) -> Result<Tensor> {
    p.validate()?;
    let xc = as_columns(x, p.n_in())?;
    let n = xc.dims2()?.1;
    let mut g = Graph::new();
    let xi = g.input(xc);
    let nodes = p.insert_frozen(&mut g);
    let wx = g.matmul(nodes.weight, xi)?;
    let b = bias_column(&mut g, nodes.bias)?;
    let u = g.add(wx, b)?;
    let coeffs = coefficient_nodes(&mut g, u, &nodes, p.order, p.branch)?;
    let data: Vec<f64> = coeffs
        .iter()
        .flat_map(|&a| g.value(a).data().iter().copied())
        .collect();
    Tensor::new(vec![coeffs.len(), p.n_out(), n], data)
}

/// Convolutional forward pass on `x[C_in × T]`.
pub fn act_conv_forward(
    x: &Tensor,
    p: &ActivationNetworkParams,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    p.validate()?;
    if !p.is_conv() {
        return Err(Error::config("act_conv_forward expects a convolutional layer"));
    }
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let nodes = p.insert_frozen(&mut g);
    let y = conv_nodes(&mut g, xi, &nodes, p.order, p.branch, stride, pad)?;
    Ok(g.value(y).clone())
}

fn linear_start(
    weight_shape: Vec<usize>,
    fan_in: usize,
    n_out: usize,
    order: u32,
    rng: &mut impl Rng,
) -> Result<ActivationNetworkParams> {
    if fan_in == 0 || n_out == 0 {
        return Err(Error::config("layer extents must be at least 1"));
    }
    if order < 1 {
        return Err(Error::config("polynomial order K must be at least 1"));
    }
    let limit = (3.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let n: usize = weight_shape.iter().product();
    let weight = Tensor::new(weight_shape, (0..n).map(|_| dist.sample(rng)).collect())?;
    let p = order as usize + 1;
    let mut z = vec![0.0; p * n_out];
    z[n_out..2 * n_out].fill(1.0);
    Ok(ActivationNetworkParams {
        weight,
        bias: Tensor::zeros(&[n_out])?,
        branch_weight: Tensor::zeros(&[p, n_out])?,
        branch_bias: Tensor::new(vec![p, n_out], z)?,
        order,
        branch: BranchMode::Shared,
    })
}

/// Dense layer initialised to an exact linear map: `W ~ U(±√(3/n_in))`,
/// `b = 0`, `V = 0`, `z` selecting the first-order term.
pub fn init_actnet(
    n_in: usize,
    n_out: usize,
    order: u32,
    rng: &mut impl Rng,
) -> Result<ActivationNetworkParams> {
    linear_start(vec![n_out, n_in], n_in, n_out, order, rng)
}

/// Convolutional counterpart of [`init_actnet`] with fan-in `C_in·k`.
pub fn init_conv_actnet(
    c_in: usize,
    c_out: usize,
    width: usize,
    order: u32,
    rng: &mut impl Rng,
) -> Result<ActivationNetworkParams> {
    linear_start(vec![c_out, c_in, width], c_in * width, c_out, order, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, toeplitz_unroll};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn identity_layer(n: usize, order: u32) -> ActivationNetworkParams {
        let p = order as usize + 1;
        let mut z = vec![0.0; p * n];
        z[n..2 * n].fill(1.0);
        ActivationNetworkParams {
            weight: Tensor::identity(n).unwrap(),
            bias: Tensor::zeros(&[n]).unwrap(),
            branch_weight: Tensor::zeros(&[p, n]).unwrap(),
            branch_bias: Tensor::new(vec![p, n], z).unwrap(),
            order,
            branch: BranchMode::Shared,
        }
    }

    #[test]
    fn identity_configuration_passes_input_through() {
        let p = identity_layer(3, 3);
        let x = Tensor::vector(vec![0.5, -2.0, 7.25]).unwrap();
        assert_eq!(act_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn scalar_quadratic() {
        let p = ActivationNetworkParams {
            weight: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            bias: Tensor::zeros(&[1]).unwrap(),
            branch_weight: Tensor::zeros(&[3, 1]).unwrap(),
            branch_bias: Tensor::matrix(3, 1, vec![1.0, 0.0, 1.0]).unwrap(),
            order: 2,
            branch: BranchMode::Shared,
        };
        let y = act_forward(&Tensor::vector(vec![2.0]).unwrap(), &p).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn zero_preactivation_yields_constant_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = init_actnet(2, 3, 3, &mut rng).unwrap();
        p.branch_weight = random(&[4, 3], &mut rng, 1.0);
        p.branch_bias = random(&[4, 3], &mut rng, 1.0);
        let y = act_forward(&Tensor::zeros(&[2]).unwrap(), &p).unwrap();
        assert_eq!(y.data(), &p.branch_bias.data()[0..3]);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = init_actnet(4, 2, 3, &mut rng).unwrap();
        assert!(act_forward(&Tensor::zeros(&[3]).unwrap(), &p).is_err());
        let mut bad = p.clone();
        bad.branch_bias = Tensor::zeros(&[3, 2]).unwrap();
        assert!(act_forward(&Tensor::zeros(&[4]).unwrap(), &bad).is_err());
    }

    #[test]
    fn conv_identity_kernel_width_one() {
        let mut p = identity_layer(3, 3);
        p.weight = p.weight.reshape(vec![3, 3, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[3, 9], &mut rng, 2.0);
        assert_eq!(act_conv_forward(&x, &p, 1, 0).unwrap(), x);
    }

    #[test]
    fn conv_matches_dense_on_toeplitz_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = init_conv_actnet(3, 4, 3, 3, &mut rng).unwrap();
        p.branch_weight = random(&[4, 4], &mut rng, 0.3);
        p.branch_bias = random(&[4, 4], &mut rng, 0.5);
        p.bias = random(&[4], &mut rng, 0.2);
        let x = random(&[3, 8], &mut rng, 1.0);
        let conv = act_conv_forward(&x, &p, 1, 0).unwrap();

        let cols = toeplitz_unroll(&x, 3, 1, 0).unwrap();
        let dense = ActivationNetworkParams {
            weight: p.weight.reshape(vec![4, 9]).unwrap(),
            ..p.clone()
        };
        let via_dense = act_forward(&cols, &dense).unwrap();
        assert_eq!(conv.shape(), &[4, 6]);
        assert!(conv.max_abs_diff(&via_dense) < 1e-10);
    }

    /// Least-squares cubic fit of ReLU on [−1, 1] by normal equations.
    fn relu_cubic_fit() -> [f64; 4] {
        let xs: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 / 1000.0).collect();
        let mut ata = [[0.0; 4]; 4];
        let mut aty = [0.0; 4];
        for &x in &xs {
            let phi = [1.0, x, x * x, x * x * x];
            for r in 0..4 {
                aty[r] += phi[r] * x.max(0.0);
                for c in 0..4 {
                    ata[r][c] += phi[r] * phi[c];
                }
            }
        }
        // Gaussian elimination
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
                .unwrap();
            ata.swap(col, piv);
            aty.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = ata[r][col] / ata[col][col];
                    for c in 0..4 {
                        ata[r][c] -= f * ata[col][c];
                    }
                    aty[r] -= f * aty[col];
                }
            }
        }
        [0, 1, 2, 3].map(|i| aty[i] / ata[i][i])
    }

    #[test]
    fn constant_coefficients_approximate_relu_conv() {
        let coef = relu_cubic_fit();
        let poly = |u: f64| coef[0] + coef[1] * u + coef[2] * u * u + coef[3] * u * u * u;
        let fit_err = (0..=200_000)
            .map(|i| -1.0 + i as f64 / 100_000.0)
            .map(|u| (poly(u) - u.max(0.0)).abs())
            .fold(0.0, f64::max);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = init_conv_actnet(2, 3, 3, 3, &mut rng).unwrap();
        // keep |conv1d(x)| <= 1 for x in [−1, 1]
        p.weight = random(&[3, 2, 3], &mut rng, 1.0 / 6.0);
        let z: Vec<f64> = coef.iter().flat_map(|&c| [c; 3]).collect();
        p.branch_bias = Tensor::new(vec![4, 3], z).unwrap();
        let x = random(&[2, 12], &mut rng, 1.0);

        let y = act_conv_forward(&x, &p, 1, 0).unwrap();
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let k = g.input(p.weight.clone());
        let c = g.conv1d(xi, k, 1, 0).unwrap();
        let relu = g.value(c).map(|v| v.max(0.0));
        assert!(g.value(c).data().iter().all(|v| v.abs() <= 1.0));
        assert!(y.max_abs_diff(&relu) <= fit_err + 1e-12, "fit error {fit_err}");
    }

    #[test]
    fn init_starts_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = init_actnet(5, 3, 3, &mut rng).unwrap();
        let x = random(&[5, 7], &mut rng, 3.0);
        let y = act_forward(&x, &p).unwrap();
        let mut g = Graph::new();
        let w = g.input(p.weight.clone());
        let xi = g.input(x);
        let lin = g.matmul(w, xi).unwrap();
        assert_eq!(&y, g.value(lin));
    }

    #[test]
    fn init_weight_variance_matches_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fan_in = 20;
        let p = init_actnet(fan_in, 500, 3, &mut rng).unwrap();
        let w = p.weight.data();
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 1.0 / fan_in as f64;
        assert!((var / target - 1.0).abs() < 0.1, "var {var} target {target}");
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_actnet(6, 4, 3, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = init_actnet(6, 4, 3, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let bits = |p: &ActivationNetworkParams| -> Vec<u64> {
            p.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn coefficients_depend_on_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for branch in [BranchMode::Shared, BranchMode::PerNode] {
            let mut p = init_actnet(3, 2, 3, &mut rng).unwrap();
            p.branch = branch;
            p.branch_weight = random(&[4, 2], &mut rng, 1.0);
            let a1 = coefficients(&Tensor::vector(vec![0.3, -0.1, 0.8]).unwrap(), &p).unwrap();
            let a2 = coefficients(&Tensor::vector(vec![-0.5, 0.4, 0.2]).unwrap(), &p).unwrap();
            assert_eq!(a1.shape(), &[4, 2, 1]);
            assert!(a1.max_abs_diff(&a2) > 1e-6);
        }
    }

    #[test]
    fn shared_branch_sums_over_all_nodes() {
        // a_{k,i} = Σ_j V_{k,j} u_j + z_{k,i}: identical data term for every node
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = init_actnet(2, 3, 1, &mut rng).unwrap();
        p.weight = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        p.branch_weight = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 1.0]).unwrap();
        p.branch_bias = Tensor::zeros(&[2, 3]).unwrap();
        let a = coefficients(&Tensor::vector(vec![1.0, 2.0]).unwrap(), &p).unwrap();
        // u = (1, 2, 3); row 0 term = 1 + 4 + 9 = 14, row 1 term = 3
        assert_eq!(a.data(), &[14.0, 14.0, 14.0, 3.0, 3.0, 3.0]);

        p.branch = BranchMode::PerNode;
        let a = coefficients(&Tensor::vector(vec![1.0, 2.0]).unwrap(), &p).unwrap();
        assert_eq!(a.data(), &[1.0, 4.0, 9.0, 0.0, 0.0, 3.0]);
    }

    fn layer_loss(
        x: Tensor,
        order: u32,
        branch: BranchMode,
    ) -> impl Fn(&mut Graph, &[NodeId]) -> Result<NodeId> {
        move |g, p| {
            let xi = g.input(x.clone());
            let nodes = ActNetNodes {
                weight: p[0],
                bias: p[1],
                branch_weight: p[2],
                branch_bias: p[3],
            };
            let y = dense_nodes(g, xi, &nodes, order, branch)?;
            let y = g.reshape(y, vec![3])?;
            crate::numerics::check_objective(g, y, 2)
        }
    }

    #[test]
    fn gradient_check_dense_layer() {
        for (seed, branch) in [(1, BranchMode::Shared), (2, BranchMode::PerNode)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[4, 1], &mut rng, 1.0);
            let params = [
                random(&[3, 4], &mut rng, 0.8),
                random(&[3], &mut rng, 0.3),
                random(&[4, 3], &mut rng, 0.5),
                random(&[4, 3], &mut rng, 0.5),
            ];
            let report = grad_check(layer_loss(x, 3, branch), &params, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-5, "{branch:?}: {report:?}");
        }
    }
}
