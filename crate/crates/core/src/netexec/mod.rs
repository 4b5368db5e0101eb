//! CNN execution on the CAM model.
//!
//! Convolutions and linear layers are lowered to sets of vectors (im2col
//! patches and flattened kernels), reduced to contexts, and matched on the
//! CAM; everything else (bias, batchnorm, ReLU, pooling) runs digitally in
//! double precision.

mod exec;
mod im2col;
mod post;

pub use exec::{
    dry_run_trace, online_activation_context, run_dot_layer, run_network, DotOperands, Executor, RunOutput,
};
pub use im2col::{im2col, ConvGeometry, Patches};
pub use post::{avg_pool, batch_norm, feature_map, max_pool, post_process, relu};

use crate::camarray::{CamConfig, ALLOWED_WORD_BITS};
use crate::geodot::CosineModel;
use crate::modelio::checked_product;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Real-valued CHW tensor for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTensor {
    pub dims: Dims,
    pub data: Vec<f64>,
    pub batch_index: usize,
}

impl ActivationTensor {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), found: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::out_of_range("activation", format!("non-finite value at {i}")));
        }
        Ok(Self { dims, data, batch_index: 0 })
    }

    pub fn with_batch_index(mut self, index: usize) -> Self {
        self.batch_index = index;
        self
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.dims.height + y) * self.dims.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv2d,
    Linear,
    Relu,
    MaxPool,
    AvgPool,
    BatchNorm,
    Flatten,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Linear => "linear",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn is_dot(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Linear)
    }
}

/// Convolution; weights are `[out][in][kh][kw]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
    /// ReLU fused after the bias add.
    pub relu: bool,
}

impl Conv2d {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Fully connected layer; weights are `[out][in]` row-major. The input is
/// flattened in CHW order.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
    pub relu: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pool {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Linear(Linear),
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    BatchNorm(BatchNorm),
    Flatten,
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Geometry(format!("{what}: expected {expected} values, found {found}")));
    }
    Ok(())
}

fn pool_out(pool: &Pool, input: Dims) -> Result<Dims> {
    if pool.kernel == 0 || pool.stride == 0 {
        return Err(Error::Geometry("pooling kernel and stride must be positive".into()));
    }
    if pool.kernel > input.height || pool.kernel > input.width {
        return Err(Error::Geometry(format!("pooling window {} larger than input {input}", pool.kernel)));
    }
    Ok(Dims::new(
        input.channels,
        (input.height - pool.kernel) / pool.stride + 1,
        (input.width - pool.kernel) / pool.stride + 1,
    ))
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Linear(_) => LayerKind::Linear,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::AvgPool(_) => LayerKind::AvgPool,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    /// Output shape for `input`, validating geometry and parameter sizes.
    pub fn output_dims(&self, input: Dims) -> Result<Dims> {
        match self {
            Layer::Conv2d(c) => {
                let (h, w) = c.geometry().output_hw(input)?;
                if c.out_channels == 0 {
                    return Err(Error::Geometry("conv2d needs at least one output channel".into()));
                }
                let n = checked_product(&[c.out_channels, c.in_channels, c.kernel_h, c.kernel_w])
                    .ok_or_else(|| Error::Geometry("conv2d weight tensor is too large".into()))?;
                check_len("conv2d weights", n, c.weights.len())?;
                if let Some(b) = &c.bias {
                    check_len("conv2d bias", c.out_channels, b.len())?;
                }
                Ok(Dims::new(c.out_channels, h, w))
            }
            Layer::Linear(l) => {
                if l.in_features == 0 || l.out_features == 0 {
                    return Err(Error::Geometry("linear layer needs non-zero features".into()));
                }
                if input.len() != l.in_features {
                    return Err(Error::Geometry(format!("linear layer expects {} inputs, got {input}", l.in_features)));
                }
                let n = checked_product(&[l.out_features, l.in_features])
                    .ok_or_else(|| Error::Geometry("linear weight tensor is too large".into()))?;
                check_len("linear weights", n, l.weights.len())?;
                if let Some(b) = &l.bias {
                    check_len("linear bias", l.out_features, b.len())?;
                }
                Ok(Dims::new(l.out_features, 1, 1))
            }
            Layer::Relu => Ok(input),
            Layer::MaxPool(p) | Layer::AvgPool(p) => pool_out(p, input),
            Layer::BatchNorm(bn) => {
                for (name, v) in [("gamma", &bn.gamma), ("beta", &bn.beta), ("mean", &bn.mean), ("var", &bn.var)] {
                    check_len(name, input.channels, v.len())?;
                }
                if bn.eps.is_nan() || bn.eps < 0.0 {
                    return Err(Error::Geometry("batchnorm eps must be >= 0".into()));
                }
                Ok(input)
            }
            Layer::Flatten => Ok(Dims::new(input.len(), 1, 1)),
        }
    }
}

/// A validated layer stack with its shape at every boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    input: Dims,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<Dims>,
}

impl NetworkModel {
    pub fn new(input: Dims, layers: Vec<Layer>) -> Result<Self> {
        let too_large = |d: Dims| checked_product(&[d.channels, d.height, d.width]).is_none();
        if too_large(input) {
            return Err(Error::Geometry(format!("input shape {input} is too large")));
        }
        if input.is_empty() {
            return Err(Error::Geometry("input shape is empty".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_dims(*shapes.last().unwrap())
                .map_err(|e| Error::Geometry(format!("layer {i} ({}): {e}", layer.kind().name())))?;
            if too_large(next) {
                return Err(Error::Geometry(format!("layer {i} output {next} is too large")));
            }
            shapes.push(next);
        }
        Ok(Self { input, layers, shapes })
    }

    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn output_dims(&self) -> Dims {
        *self.shapes.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_of(&self, layer: usize) -> Dims {
        self.shapes[layer]
    }

    pub fn output_of(&self, layer: usize) -> Dims {
        self.shapes[layer + 1]
    }

    /// Model indices of the conv2d/linear layers, in order.
    pub fn dot_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| l.kind().is_dot()).map(|(i, _)| i).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Dataflow {
    /// Weight contexts are stored in the CAM; activation contexts are the keys.
    WeightStationary,
    /// Activation contexts are stored; weight contexts are the keys.
    #[default]
    ActivationStationary,
}

impl Dataflow {
    pub fn short_name(self) -> &'static str {
        match self {
            Dataflow::WeightStationary => "ws",
            Dataflow::ActivationStationary => "as",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ws" | "weight-stationary" | "weight_stationary" => Ok(Dataflow::WeightStationary),
            "as" | "activation-stationary" | "activation_stationary" => Ok(Dataflow::ActivationStationary),
            other => Err(Error::Config(format!("unknown dataflow '{other}' (expected ws or as)"))),
        }
    }
}

/// How the executor turns a (patch, kernel) pair into a number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DotMode {
    /// Norm product times the cosine of the hamming-distance angle.
    Approximate(CosineModel),
    /// Exact inner product of the full-precision vectors; the CAM schedule
    /// and cost trace are unchanged.
    Exact,
}

impl Default for DotMode {
    fn default() -> Self {
        DotMode::Approximate(CosineModel::Piecewise)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionPlan {
    pub dataflow: Dataflow,
    pub cam: CamConfig,
    /// One hash length per dot-product layer, in model order.
    pub hash_lengths: Vec<usize>,
    pub seed: u64,
    pub mode: DotMode,
}

impl ExecutionPlan {
    pub fn uniform(model: &NetworkModel, dataflow: Dataflow, cam: CamConfig, k: usize, seed: u64) -> Self {
        Self { dataflow, cam, hash_lengths: vec![k; model.dot_layers().len()], seed, mode: DotMode::default() }
    }

    pub fn with_mode(mut self, mode: DotMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        let dots = model.dot_layers().len();
        if self.hash_lengths.len() != dots {
            return Err(Error::Config(format!(
                "plan has {} hash lengths for {dots} dot-product layers",
                self.hash_lengths.len()
            )));
        }
        if let Some(k) = self.hash_lengths.iter().find(|k| !ALLOWED_WORD_BITS.contains(k)) {
            return Err(Error::Config(format!("hash length {k} not in {ALLOWED_WORD_BITS:?}")));
        }
        Ok(())
    }

    pub fn total_hash_bits(&self) -> usize {
        self.hash_lengths.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn lenet_like() -> NetworkModel {
        let conv = |i: usize, o: usize, pad: usize| {
            Layer::Conv2d(Conv2d {
                in_channels: i,
                out_channels: o,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
                padding: pad,
                weights: vec![0.01; o * i * 25],
                bias: Some(vec![0.0; o]),
                relu: true,
            })
        };
        let fc = |i: usize, o: usize, relu: bool| {
            Layer::Linear(Linear {
                in_features: i,
                out_features: o,
                weights: vec![0.01; i * o],
                bias: Some(vec![0.0; o]),
                relu,
            })
        };
        let pool = Layer::MaxPool(Pool { kernel: 2, stride: 2 });
        NetworkModel::new(
            Dims::new(1, 28, 28),
            vec![
                conv(1, 6, 2),
                pool.clone(),
                conv(6, 16, 0),
                pool,
                fc(400, 120, true),
                fc(120, 84, true),
                fc(84, 10, false),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lenet_shapes() {
        let m = lenet_like();
        assert_eq!(m.output_of(0), Dims::new(6, 28, 28));
        assert_eq!(m.output_of(1), Dims::new(6, 14, 14));
        assert_eq!(m.output_of(2), Dims::new(16, 10, 10));
        assert_eq!(m.output_of(3), Dims::new(16, 5, 5));
        assert_eq!(m.output_dims(), Dims::new(10, 1, 1));
        assert_eq!(m.dot_layers(), vec![0, 2, 4, 5, 6]);
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let bad = NetworkModel::new(
            Dims::new(1, 4, 4),
            vec![Layer::Linear(Linear {
                in_features: 15,
                out_features: 2,
                weights: vec![0.0; 30],
                bias: None,
                relu: false,
            })],
        );
        assert!(matches!(bad, Err(Error::Geometry(_))));

        let bad_bn = NetworkModel::new(
            Dims::new(2, 4, 4),
            vec![Layer::BatchNorm(BatchNorm {
                gamma: vec![1.0],
                beta: vec![0.0],
                mean: vec![0.0],
                var: vec![1.0],
                eps: 1e-5,
            })],
        );
        assert!(bad_bn.is_err());
    }

    #[test]
    fn plan_validation() {
        let m = lenet_like();
        let cam = CamConfig::new(64).unwrap();
        let mut plan = ExecutionPlan::uniform(&m, Dataflow::ActivationStationary, cam, 1024, 0);
        plan.validate(&m).unwrap();
        assert_eq!(plan.total_hash_bits(), 5 * 1024);
        plan.hash_lengths[2] = 300;
        assert!(plan.validate(&m).is_err());
        plan.hash_lengths.pop();
        assert!(plan.validate(&m).is_err());
    }

    #[test]
    fn tensor_rejects_non_finite() {
        assert!(ActivationTensor::new(Dims::new(1, 1, 2), vec![1.0, f64::NAN]).is_err());
        assert!(ActivationTensor::new(Dims::new(1, 1, 2), vec![1.0]).is_err());
    }

    #[test]
    fn dataflow_names() {
        assert_eq!(Dataflow::parse("ws").unwrap(), Dataflow::WeightStationary);
        assert_eq!(Dataflow::parse("activation-stationary").unwrap(), Dataflow::ActivationStationary);
        assert!(Dataflow::parse("rs").is_err());
    }
}
