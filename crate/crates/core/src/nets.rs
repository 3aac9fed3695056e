//! Generator and discriminator networks.
//!
//! The generator is a 1-D convolutional encoder (stride-2 convs), a
//! stride-1 bottleneck whose activations form the feature layer used by
//! the transport and Laplace-energy losses, and a transposed-conv
//! decoder, all wrapped in a global residual skip. The final decoder
//! layer is zero-initialized, so a freshly initialized generator is the
//! identity map. The discriminator is a strided conv stack with a
//! mean-pooled linear head producing one logit.
//!
//! All four networks (two generators, two discriminators) live in one
//! flat [`ModelParams`] array addressed through named layer views.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Axis, ConvSpec, NodeId, Tape, Tensor};
use crate::error::Error;
use crate::rng::SeedRng;
use crate::Result;

const ENC_KERNEL: usize = 9;
const BOTTLENECK_KERNEL: usize = 3;
const DEC_KERNEL: usize = 4;

/// Network geometry. `enc_channels` lists the output channels of each
/// stride-2 encoder conv; the decoder mirrors them. The feature layer is
/// the last bottleneck activation, shaped
/// `(last enc channel) x (window / 2^len(enc_channels))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArchConfig {
    pub window: usize,
    pub enc_channels: Vec<usize>,
    pub bottleneck_layers: usize,
    pub disc_channels: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            window: 256,
            enc_channels: alloc::vec![8, 16],
            bottleneck_layers: 2,
            disc_channels: alloc::vec![8, 16, 32],
        }
    }
}

impl ArchConfig {
    /// Small geometry for fast tests: window 16, features 8 x 8.
    pub fn tiny() -> Self {
        ArchConfig {
            window: 16,
            enc_channels: alloc::vec![8],
            bottleneck_layers: 1,
            disc_channels: alloc::vec![4, 8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(Error::validation("arch", "window too small"));
        }
        if self.enc_channels.is_empty() || self.disc_channels.is_empty() {
            return Err(Error::validation("arch", "need at least one conv layer"));
        }
        if self.bottleneck_layers == 0 {
            return Err(Error::validation("arch", "need at least one bottleneck layer"));
        }
        if self.enc_channels.iter().any(|&c| c == 0) || self.disc_channels.iter().any(|&c| c == 0)
        {
            return Err(Error::validation("arch", "zero-channel layer"));
        }
        let strides = self.enc_channels.len();
        if self.window % (1 << strides) != 0 {
            return Err(Error::validation(
                "arch",
                format!("window {} not divisible by 2^{strides}", self.window),
            ));
        }
        if self.feature_dim() < 4 {
            return Err(Error::validation(
                "arch",
                "feature dimension below 4; shrink the encoder or grow the window",
            ));
        }
        if self.window % (1 << self.disc_channels.len()) != 0 {
            return Err(Error::validation(
                "arch",
                "window not divisible by discriminator stride product",
            ));
        }
        Ok(())
    }

    /// Rows of the feature matrix (one vector per bottleneck channel).
    pub fn feature_rows(&self) -> usize {
        *self.enc_channels.last().unwrap()
    }

    /// Dimension of each feature vector (bottleneck length).
    pub fn feature_dim(&self) -> usize {
        self.window >> self.enc_channels.len()
    }
}

/// Which generator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Low-cost input to high-cost output.
    LowToHigh,
    /// High-cost input to low-cost output.
    HighToLow,
}

impl Generator {
    pub fn prefix(self) -> &'static str {
        match self {
            Generator::LowToHigh => "gen_lh",
            Generator::HighToLow => "gen_hl",
        }
    }
}

/// Which discriminator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Low,
    High,
}

impl Domain {
    pub fn disc_prefix(self) -> &'static str {
        match self {
            Domain::Low => "disc_l",
            Domain::High => "disc_h",
        }
    }
}

/// One named layer view into the flat parameter array.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViewSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ViewSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered set of layer views partitioning the flat array exactly.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamLayout {
    entries: Vec<ViewSpec>,
    total: usize,
}

impl ParamLayout {
    /// Derives the layout for all four networks of an architecture.
    pub fn for_arch(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut entries = Vec::new();
        let mut total = 0usize;
        let mut push = |name: String, rows: usize, cols: usize| {
            entries.push(ViewSpec {
                name,
                offset: total,
                rows,
                cols,
            });
            total += rows * cols;
        };

        for gen in ["gen_lh", "gen_hl"] {
            let mut ch = 1usize;
            for (i, &out) in arch.enc_channels.iter().enumerate() {
                push(format!("{gen}.enc{i}.w"), out, ch * ENC_KERNEL);
                push(format!("{gen}.enc{i}.b"), out, 1);
                ch = out;
            }
            for i in 0..arch.bottleneck_layers {
                push(format!("{gen}.bneck{i}.w"), ch, ch * BOTTLENECK_KERNEL);
                push(format!("{gen}.bneck{i}.b"), ch, 1);
            }
            let mut dec_in = ch;
            let dec_outs: Vec<usize> = arch
                .enc_channels
                .iter()
                .rev()
                .skip(1)
                .chain(core::iter::once(&arch.enc_channels[0]))
                .copied()
                .collect();
            for (i, &out) in dec_outs.iter().enumerate() {
                // transposed conv weight is (in_channels, out_channels * k)
                push(format!("{gen}.dec{i}.w"), dec_in, out * DEC_KERNEL);
                push(format!("{gen}.dec{i}.b"), out, 1);
                dec_in = out;
            }
            // full-resolution refinement conv producing the residual correction
            push(format!("{gen}.refine.w"), 1, dec_in * ENC_KERNEL);
            push(format!("{gen}.refine.b"), 1, 1);
        }
        for disc in ["disc_l", "disc_h"] {
            let mut ch = 1usize;
            for (i, &out) in arch.disc_channels.iter().enumerate() {
                push(format!("{disc}.conv{i}.w"), out, ch * ENC_KERNEL);
                push(format!("{disc}.conv{i}.b"), out, 1);
                ch = out;
            }
            push(format!("{disc}.head.w"), ch, 1);
            push(format!("{disc}.head.b"), 1, 1);
        }
        Ok(ParamLayout { entries, total })
    }

    pub fn entries(&self) -> &[ViewSpec] {
        &self.entries
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Result<&ViewSpec> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::validation("param view", format!("unknown layer {name}")))
    }
}

/// Flat parameter store for the two generators and two discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    layout: ParamLayout,
    data: Vec<f64>,
    pub init_seed: u64,
}

impl ModelParams {
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rebuilds a parameter store from a flat array (checkpoint load).
    pub fn from_flat(arch: ArchConfig, init_seed: u64, data: Vec<f64>) -> Result<Self> {
        let layout = ParamLayout::for_arch(&arch)?;
        if data.len() != layout.total_len() {
            return Err(Error::validation(
                "params",
                format!(
                    "expected {} parameters, got {}",
                    layout.total_len(),
                    data.len()
                ),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("params", "non-finite parameter"));
        }
        Ok(ModelParams {
            arch,
            layout,
            data,
            init_seed,
        })
    }

    pub fn view(&self, name: &str) -> Result<&[f64]> {
        let e = self.layout.find(name)?;
        Ok(&self.data[e.offset..e.offset + e.len()])
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let e = self.layout.find(name)?;
        Tensor::new(e.rows, e.cols, self.data[e.offset..e.offset + e.len()].to_vec())
    }

    /// Creates one leaf node per layer, in layout order.
    pub fn leaves(&self, tape: &mut Tape) -> NetLeaves {
        let ids = self
            .layout
            .entries()
            .iter()
            .map(|e| {
                let t = Tensor::new(
                    e.rows,
                    e.cols,
                    self.data[e.offset..e.offset + e.len()].to_vec(),
                )
                .expect("params are finite");
                tape.leaf(t)
            })
            .collect();
        NetLeaves {
            layout: self.layout.clone(),
            ids,
        }
    }
}

/// Leaf nodes for every layer of a [`ModelParams`] on some tape.
pub struct NetLeaves {
    layout: ParamLayout,
    ids: Vec<NodeId>,
}

impl NetLeaves {
    /// Binds externally created leaves (gradient checking) to a layout.
    pub fn from_ids(layout: ParamLayout, ids: Vec<NodeId>) -> Result<Self> {
        if ids.len() != layout.entries().len() {
            return Err(Error::validation("net leaves", "one leaf per layout entry"));
        }
        Ok(NetLeaves { layout, ids })
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn get(&self, name: &str) -> Result<NodeId> {
        let idx = self
            .layout
            .entries()
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::validation("param view", format!("unknown layer {name}")))?;
        Ok(self.ids[idx])
    }
}

/// Kaiming-style initialization; the final generator layer is zeroed so
/// generators start as the identity, and biases get a small random value
/// so feature rows never start identically zero.
pub fn init_params(arch: &ArchConfig, seed: u64) -> Result<ModelParams> {
    let layout = ParamLayout::for_arch(arch)?;
    let mut rng = SeedRng::new(seed);
    let mut data = alloc::vec![0.0; layout.total_len()];
    for e in layout.entries() {
        let slot = &mut data[e.offset..e.offset + e.len()];
        let is_final_gen_layer = !e.name.starts_with("disc") && e.name.contains(".refine.");
        if is_final_gen_layer {
            continue; // stays zero: identity at init
        }
        if e.name.ends_with(".b") {
            for v in slot.iter_mut() {
                *v = 0.01 * rng.normal();
            }
        } else {
            let fan_in = e.cols.max(1) as f64;
            let std = libm::sqrt(2.0 / (1.04 * fan_in));
            for v in slot.iter_mut() {
                *v = std * rng.normal();
            }
        }
    }
    ModelParams::from_flat(arch.clone(), seed, data)
}

/// Generator pass on a tape: enhanced frame node plus feature node.
pub struct GenGraph {
    pub output: NodeId,
    pub features: NodeId,
}

#[allow(clippy::too_many_arguments)]
fn conv_block(
    tape: &mut Tape,
    leaves: &NetLeaves,
    x: NodeId,
    w_name: &str,
    b_name: &str,
    spec: ConvSpec,
    transpose: bool,
    activate: bool,
) -> Result<NodeId> {
    let w = leaves.get(w_name)?;
    let b = leaves.get(b_name)?;
    let y = if transpose {
        tape.conv_transpose1d(x, w, spec)?
    } else {
        tape.conv1d(x, w, spec)?
    };
    let y = tape.add(y, b)?;
    Ok(if activate { tape.leaky_relu(y) } else { y })
}

/// Builds one generator pass on the tape. The input frame must be a
/// `1 x window` node.
pub fn generator_forward_graph(
    tape: &mut Tape,
    leaves: &NetLeaves,
    arch: &ArchConfig,
    which: Generator,
    frame: NodeId,
) -> Result<GenGraph> {
    let (r, c) = tape.value(frame).shape();
    if r != 1 || c != arch.window {
        return Err(Error::ShapeMismatch {
            op: "generator_forward",
            lhs_rows: 1,
            lhs_cols: arch.window,
            rhs_rows: r,
            rhs_cols: c,
        });
    }
    let p = which.prefix();
    let mut x = frame;
    let mut ch = 1usize;
    for (i, &out) in arch.enc_channels.iter().enumerate() {
        let spec = ConvSpec {
            in_channels: ch,
            out_channels: out,
            kernel: ENC_KERNEL,
            stride: 2,
            pad: (ENC_KERNEL - 1) / 2,
        };
        x = conv_block(
            tape,
            leaves,
            x,
            &format!("{p}.enc{i}.w"),
            &format!("{p}.enc{i}.b"),
            spec,
            false,
            true,
        )?;
        ch = out;
    }
    for i in 0..arch.bottleneck_layers {
        let spec = ConvSpec {
            in_channels: ch,
            out_channels: ch,
            kernel: BOTTLENECK_KERNEL,
            stride: 1,
            pad: (BOTTLENECK_KERNEL - 1) / 2,
        };
        x = conv_block(
            tape,
            leaves,
            x,
            &format!("{p}.bneck{i}.w"),
            &format!("{p}.bneck{i}.b"),
            spec,
            false,
            true,
        )?;
    }
    let features = x;
    let dec_outs: Vec<usize> = arch
        .enc_channels
        .iter()
        .rev()
        .skip(1)
        .chain(core::iter::once(&arch.enc_channels[0]))
        .copied()
        .collect();
    for (i, &out) in dec_outs.iter().enumerate() {
        let spec = ConvSpec {
            in_channels: ch,
            out_channels: out,
            kernel: DEC_KERNEL,
            stride: 2,
            pad: 1,
        };
        x = conv_block(
            tape,
            leaves,
            x,
            &format!("{p}.dec{i}.w"),
            &format!("{p}.dec{i}.b"),
            spec,
            true,
            true,
        )?;
        ch = out;
    }
    // zero-initialized full-resolution correction on top of the skip
    let spec = ConvSpec {
        in_channels: ch,
        out_channels: 1,
        kernel: ENC_KERNEL,
        stride: 1,
        pad: (ENC_KERNEL - 1) / 2,
    };
    x = conv_block(
        tape,
        leaves,
        x,
        &format!("{p}.refine.w"),
        &format!("{p}.refine.b"),
        spec,
        false,
        false,
    )?;
    let output = tape.add(x, frame)?;
    Ok(GenGraph { output, features })
}

/// Builds one discriminator pass; returns the scalar logit node.
pub fn discriminator_forward_graph(
    tape: &mut Tape,
    leaves: &NetLeaves,
    arch: &ArchConfig,
    which: Domain,
    frame: NodeId,
) -> Result<NodeId> {
    let (r, c) = tape.value(frame).shape();
    if r != 1 || c != arch.window {
        return Err(Error::ShapeMismatch {
            op: "discriminator_forward",
            lhs_rows: 1,
            lhs_cols: arch.window,
            rhs_rows: r,
            rhs_cols: c,
        });
    }
    let p = which.disc_prefix();
    let mut x = frame;
    let mut ch = 1usize;
    for (i, &out) in arch.disc_channels.iter().enumerate() {
        let spec = ConvSpec {
            in_channels: ch,
            out_channels: out,
            kernel: ENC_KERNEL,
            stride: 2,
            pad: (ENC_KERNEL - 1) / 2,
        };
        x = conv_block(
            tape,
            leaves,
            x,
            &format!("{p}.conv{i}.w"),
            &format!("{p}.conv{i}.b"),
            spec,
            false,
            true,
        )?;
        ch = out;
    }
    let pooled = tape.mean(x, Axis::Cols); // (ch, 1)
    let pooled_row = tape.transpose(pooled); // (1, ch)
    let w = leaves.get(&format!("{p}.head.w"))?; // (ch, 1)
    let b = leaves.get(&format!("{p}.head.b"))?;
    let logit = tape.matmul(pooled_row, w)?;
    tape.add(logit, b)
}

/// Enhanced frame plus bottleneck features from a pure generator pass.
pub struct GenOutput {
    pub output: Vec<f64>,
    pub features: Tensor,
}

/// Runs the generator outside any training graph.
pub fn generator_forward(params: &ModelParams, which: Generator, frame: &[f64]) -> Result<GenOutput> {
    let mut tape = Tape::new();
    let leaves = params.leaves(&mut tape);
    let input = tape.leaf(Tensor::row(frame)?);
    let g = generator_forward_graph(&mut tape, &leaves, &params.arch, which, input)?;
    Ok(GenOutput {
        output: tape.value(g.output).data().to_vec(),
        features: tape.value(g.features).clone(),
    })
}

/// Runs the discriminator outside any training graph.
pub fn discriminator_forward(params: &ModelParams, which: Domain, frame: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let leaves = params.leaves(&mut tape);
    let input = tape.leaf(Tensor::row(frame)?);
    let logit = discriminator_forward_graph(&mut tape, &leaves, &params.arch, which, input)?;
    Ok(tape.value(logit).data()[0])
}
