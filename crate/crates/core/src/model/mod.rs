//! The four-stream network: per-stream temporal convolution backbones built
//! from activation-network blocks, global max pooling over time, and an
//! activation-network classifier over the concatenated pooled features.

mod checkpoint;
mod fusion;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actnet::{self, ActNetNodes, ActivationNetworkParams, BranchMode};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::skeleton::{
    four_streams, normalize, topology::KINECT_JOINTS, BoneTopology, FourStreamInput,
    SkeletonSequence,
};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use fusion::{fuse_scores, fuse_scores_weighted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output channels of each conv block; the length is the block count.
    pub widths: Vec<usize>,
    pub kernel: usize,
    /// Polynomial order of every activation network.
    pub order: u32,
    pub short_gap: usize,
    pub long_gap: usize,
    pub n_classes: usize,
    /// Joints per body.
    pub joints: usize,
    /// 3 for skeletons, 2 for the projected (x, y) modality.
    pub dims: usize,
    pub bodies: usize,
    pub share_temporal_streams: bool,
    pub branch: BranchMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128],
            kernel: 3,
            order: 3,
            short_gap: 1,
            long_gap: 5,
            n_classes: 10,
            joints: KINECT_JOINTS,
            dims: 3,
            bodies: 1,
            share_temporal_streams: true,
            branch: BranchMode::Shared,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("need at least one block with positive width"));
        }
        if self.kernel == 0 {
            return Err(Error::config("kernel width must be positive"));
        }
        if self.order < 1 {
            return Err(Error::config("activation order must be at least 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("need at least two classes"));
        }
        if self.short_gap == 0 || self.short_gap >= self.long_gap {
            return Err(Error::config(format!(
                "gaps must satisfy 1 <= short ({}) < long ({})",
                self.short_gap, self.long_gap
            )));
        }
        if self.joints != KINECT_JOINTS {
            return Err(Error::config(format!(
                "only the {KINECT_JOINTS}-joint Kinect layout is supported, got {}",
                self.joints
            )));
        }
        if !(2..=3).contains(&self.dims) || !(1..=2).contains(&self.bodies) {
            return Err(Error::config("dims must be 2 or 3 and bodies 1 or 2"));
        }
        Ok(())
    }

    pub fn total_joints(&self) -> usize {
        self.joints * self.bodies
    }

    /// Channels of the coordinate and temporal streams.
    pub fn coordinate_channels(&self) -> usize {
        self.total_joints() * self.dims
    }

    /// Channels of the bone stream.
    pub fn bone_channels(&self) -> usize {
        (self.total_joints() - 1) * self.dims
    }

    /// Shortest stream that survives every block with one column left.
    pub fn min_stream_length(&self) -> usize {
        self.widths.len() * (self.kernel - 1) + 1
    }

    /// Shortest sequence whose long-gap stream is still viable.
    pub fn min_viable_frames(&self) -> usize {
        self.min_stream_length() + self.long_gap
    }

    pub fn topology(&self) -> BoneTopology {
        BoneTopology::kinect_bodies(self.bodies)
    }

    /// Normalized four-stream input for this model's modality. 3-D
    /// sequences fed to a 2-D model are projected onto (x, y) first.
    pub fn prepare(&self, seq: &SkeletonSequence) -> Result<FourStreamInput> {
        let seq = match (seq.dims(), self.dims) {
            (a, b) if a == b => seq.clone(),
            (3, 2) => seq.project_xy()?,
            (a, b) => {
                return Err(Error::config(format!(
                    "cannot feed {a}-D skeletons to a {b}-D model"
                )))
            }
        };
        if seq.joints() != self.joints || seq.bodies() != self.bodies {
            return Err(Error::config(format!(
                "sequence has {}x{} joints, model expects {}x{}",
                seq.bodies(),
                seq.joints(),
                self.bodies,
                self.joints
            )));
        }
        if seq.frames() < self.min_viable_frames() {
            return Err(Error::BelowMinimumLength {
                length: seq.frames(),
                minimum: self.min_viable_frames(),
            });
        }
        let n = normalize(&seq)?;
        four_streams(&n, self.short_gap, self.long_gap, &self.topology())
    }
}

/// A stack of convolutional activation-network blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub blocks: Vec<ActivationNetworkParams>,
}

impl Backbone {
    fn init(cfg: &ModelConfig, in_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut blocks = Vec::with_capacity(cfg.widths.len());
        let mut c_in = in_channels;
        for &w in &cfg.widths {
            let mut p = actnet::init_conv_actnet(c_in, w, cfg.kernel, cfg.order, rng)?;
            p.branch = cfg.branch;
            blocks.push(p);
            c_in = w;
        }
        Ok(Self { blocks })
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(ActivationNetworkParams::param_count).sum()
    }
}

/// Trained or freshly initialised four-stream network.
#[derive(Debug, Clone, PartialEq)]
pub struct FsaModel {
    pub config: ModelConfig,
    pub raw: Backbone,
    /// Short-gap stream; also serves the long-gap stream when shared.
    pub temporal: Backbone,
    /// Long-gap backbone, present only when sharing is off.
    pub long: Option<Backbone>,
    pub spatial: Backbone,
    pub head: ActivationNetworkParams,
}

/// Graph handles of every model parameter.
#[derive(Debug, Clone)]
pub struct ModelNodes {
    raw: Vec<ActNetNodes>,
    temporal: Vec<ActNetNodes>,
    long: Option<Vec<ActNetNodes>>,
    spatial: Vec<ActNetNodes>,
    head: ActNetNodes,
}

impl ModelNodes {
    /// Node ids in [`FsaModel::params`] order.
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let blocks = [Some(&self.raw), Some(&self.temporal), self.long.as_ref(), Some(&self.spatial)];
        for b in blocks.into_iter().flatten() {
            out.extend(b.iter().flat_map(ActNetNodes::as_array));
        }
        out.extend(self.head.as_array());
        out
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub logits: NodeId,
    /// Pooled features of the raw, short, long and bone streams.
    pub pooled: [NodeId; 4],
}

/// Build a model: three or four backbones plus the classifier head.
pub fn build_model(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<FsaModel> {
    cfg.validate()?;
    let raw = Backbone::init(cfg, cfg.coordinate_channels(), rng)?;
    let temporal = Backbone::init(cfg, cfg.coordinate_channels(), rng)?;
    let long = if cfg.share_temporal_streams {
        None
    } else {
        Some(Backbone::init(cfg, cfg.coordinate_channels(), rng)?)
    };
    let spatial = Backbone::init(cfg, cfg.bone_channels(), rng)?;
    let features = 4 * cfg.widths.last().expect("validated non-empty");
    let mut head = actnet::init_actnet(features, cfg.n_classes, cfg.order, rng)?;
    head.branch = cfg.branch;
    Ok(FsaModel {
        config: cfg.clone(),
        raw,
        temporal,
        long,
        spatial,
        head,
    })
}

impl FsaModel {
    fn backbones(&self) -> impl Iterator<Item = (&'static str, &Backbone)> {
        let long = self.long.as_ref().map(|b| ("long", b));
        [("raw", &self.raw), (self.temporal_name(), &self.temporal)]
            .into_iter()
            .chain(long)
            .chain(std::iter::once(("spatial", &self.spatial)))
    }

    fn temporal_name(&self) -> &'static str {
        if self.long.is_some() {
            "short"
        } else {
            "temporal"
        }
    }

    /// Every parameter tensor in canonical order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for (_, b) in self.backbones() {
            for block in &b.blocks {
                out.extend(block.tensors());
            }
        }
        out.extend(self.head.tensors());
        out
    }

    /// `(name, tensor)` for every parameter, in [`Self::params`] order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        const FIELDS: [&str; 4] = ["weight", "bias", "branch_weight", "branch_bias"];
        let mut out = Vec::new();
        for (name, b) in self.backbones() {
            for (i, block) in b.blocks.iter().enumerate() {
                for (field, t) in FIELDS.iter().zip(block.tensors()) {
                    out.push((format!("{name}.{i}.{field}"), t));
                }
            }
        }
        for (field, t) in FIELDS.iter().zip(self.head.tensors()) {
            out.push((format!("head.{field}"), t));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Replaces every parameter, in [`Self::params`] order.
    pub fn with_params(&self, params: Vec<Tensor>) -> Result<Self> {
        let expected = self.params().len();
        if params.len() != expected {
            return Err(Error::config(format!(
                "expected {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        for (old, new) in self.params().iter().zip(&params) {
            if old.shape() != new.shape() {
                return Err(Error::ShapeMismatch {
                    op: "with_params",
                    lhs: old.shape().to_vec(),
                    rhs: new.shape().to_vec(),
                });
            }
        }
        let mut it = params.into_iter();
        let mut next4 = |p: &ActivationNetworkParams| -> Result<ActivationNetworkParams> {
            let t = [(); 4].map(|_| it.next().expect("count checked"));
            p.with_tensors(t)
        };
        let mut rebuild = |b: &Backbone| -> Result<Backbone> {
            Ok(Backbone {
                blocks: b.blocks.iter().map(&mut next4).collect::<Result<_>>()?,
            })
        };
        let raw = rebuild(&self.raw)?;
        let temporal = rebuild(&self.temporal)?;
        let long = self.long.as_ref().map(&mut rebuild).transpose()?;
        let spatial = rebuild(&self.spatial)?;
        let head = next4(&self.head)?;
        Ok(Self {
            config: self.config.clone(),
            raw,
            temporal,
            long,
            spatial,
            head,
        })
    }

    fn insert_with(
        &self,
        g: &mut Graph,
        insert: fn(&ActivationNetworkParams, &mut Graph) -> ActNetNodes,
    ) -> ModelNodes {
        let mut stack = |b: &Backbone| b.blocks.iter().map(|p| insert(p, g)).collect::<Vec<_>>();
        let raw = stack(&self.raw);
        let temporal = stack(&self.temporal);
        let long = self.long.as_ref().map(&mut stack);
        let spatial = stack(&self.spatial);
        ModelNodes {
            raw,
            temporal,
            long,
            spatial,
            head: insert(&self.head, g),
        }
    }

    /// Rebuilds node handles from ids listed in [`Self::params`] order.
    pub fn nodes_from_ids(&self, ids: &[NodeId]) -> Result<ModelNodes> {
        if ids.len() != self.params().len() {
            return Err(Error::config(format!(
                "expected {} parameter nodes, got {}",
                self.params().len(),
                ids.len()
            )));
        }
        let mut it = ids.chunks_exact(4).map(|c| ActNetNodes {
            weight: c[0],
            bias: c[1],
            branch_weight: c[2],
            branch_bias: c[3],
        });
        let mut take = |b: &Backbone| it.by_ref().take(b.blocks.len()).collect::<Vec<_>>();
        let raw = take(&self.raw);
        let temporal = take(&self.temporal);
        let long = self.long.as_ref().map(&mut take);
        let spatial = take(&self.spatial);
        let head = it.next().expect("count checked");
        Ok(ModelNodes {
            raw,
            temporal,
            long,
            spatial,
            head,
        })
    }

    /// Registers all parameters as trainable leaves.
    pub fn insert(&self, g: &mut Graph) -> ModelNodes {
        self.insert_with(g, ActivationNetworkParams::insert)
    }

    pub fn insert_frozen(&self, g: &mut Graph) -> ModelNodes {
        self.insert_with(g, ActivationNetworkParams::insert_frozen)
    }

    fn stream(&self, g: &mut Graph, input: &Tensor, blocks: &[ActNetNodes]) -> Result<NodeId> {
        let t = input.shape()[1];
        if t < self.config.min_stream_length() {
            return Err(Error::BelowMinimumLength {
                length: t,
                minimum: self.config.min_stream_length(),
            });
        }
        let mut x = g.input(input.clone());
        for b in blocks {
            x = actnet::conv_nodes(g, x, b, self.config.order, self.config.branch, 1, 0)?;
        }
        g.global_max_pool_time(x)
    }

    /// Adds the forward pass to `g`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        nodes: &ModelNodes,
        input: &FourStreamInput,
    ) -> Result<ForwardNodes> {
        let raw = self.stream(g, &input.raw, &nodes.raw)?;
        let short = self.stream(g, &input.short_diff, &nodes.temporal)?;
        let long_blocks = nodes.long.as_ref().unwrap_or(&nodes.temporal);
        let long = self.stream(g, &input.long_diff, long_blocks)?;
        let spatial = self.stream(g, &input.spatial_diff, &nodes.spatial)?;
        let pooled = [raw, short, long, spatial];
        let features = g.concat(&pooled)?;
        let n = g.value(features).len();
        let col = g.reshape(features, vec![n, 1])?;
        let out = actnet::dense_nodes(g, col, &nodes.head, self.config.order, self.config.branch)?;
        let logits = g.reshape(out, vec![self.config.n_classes])?;
        Ok(ForwardNodes { logits, pooled })
    }

    /// Class logits for a prepared input.
    pub fn forward(&self, input: &FourStreamInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = self.insert_frozen(&mut g);
        let out = self.forward_graph(&mut g, &nodes, input)?;
        Ok(g.value(out.logits).clone())
    }

    /// Pooled per-stream feature vectors (raw, short, long, bone).
    pub fn pooled_features(&self, input: &FourStreamInput) -> Result<[Tensor; 4]> {
        let mut g = Graph::new();
        let nodes = self.insert_frozen(&mut g);
        let out = self.forward_graph(&mut g, &nodes, input)?;
        Ok(out.pooled.map(|id| g.value(id).clone()))
    }

    /// Logits for a raw sequence: preprocessing plus forward.
    pub fn predict(&self, seq: &SkeletonSequence) -> Result<Tensor> {
        self.forward(&self.config.prepare(seq)?)
    }
}
