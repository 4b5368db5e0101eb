use std::ops::Range;

use rayon::prelude::*;

use super::{
    avg_pool, batch_norm, feature_map, im2col, max_pool, relu, ActivationTensor, ConvGeometry, Dataflow, Dims, DotMode,
    ExecutionPlan, Layer, LayerKind, NetworkModel,
};
use crate::camarray::{CamState, RowMatch};
use crate::geodot::{
    algebraic_dot, build_context_with, dot_from_distance, layer_seed, Context, CosineModel, HashBits, Minifloat8,
    ProjectionMatrix,
};
use crate::trace::{CostEvent, CostTrace, DotShape, PostOp};
use crate::{Error, Result};

/// One side of a dot-product layer: a context per vector and, for exact
/// mode, the vectors themselves (`contexts.len() x inputs`, row-major).
#[derive(Clone, Copy, Debug)]
pub struct DotOperands<'a> {
    pub contexts: &'a [Context],
    pub vectors: &'a [f64],
    pub inputs: usize,
}

impl DotOperands<'_> {
    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.inputs..(i + 1) * self.inputs]
    }
}

/// Context for an activation vector produced on-chip, logging the transform.
pub fn online_activation_context(
    x: &[f64],
    projection: &ProjectionMatrix,
    scratch: &mut [f64],
    layer: usize,
    trace: &mut CostTrace,
) -> Result<Context> {
    let ctx = build_context_with(x, projection, scratch)?;
    trace.push(layer, CostEvent::Transform { inputs: projection.n(), hash_bits: projection.k() });
    Ok(ctx)
}

/// Contexts for a `count x n` row-major block of weight vectors.
pub fn make_weight_contexts(weights: &[f64], n: usize, projection: &ProjectionMatrix) -> Result<Vec<Context>> {
    if n == 0 || weights.len() % n != 0 {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    let mut scratch = vec![0.0; projection.k()];
    weights.chunks_exact(n).map(|w| build_context_with(w, projection, &mut scratch)).collect()
}

fn placeholder_contexts(count: usize, k: usize) -> Vec<Context> {
    vec![Context { norm: Minifloat8::ZERO, hash: HashBits::zeros(k) }; count]
}

/// Tile the stored side over the CAM and search with every key.
/// `on_match(patch, kernel, distance)` sees every pair exactly once.
fn schedule(
    dataflow: Dataflow,
    activations: &[Context],
    weights: &[Context],
    cam: &mut CamState,
    mut on_match: impl FnMut(usize, usize, u32),
) -> Result<()> {
    let rows = cam.rows();
    let (stored, keys) = match dataflow {
        Dataflow::WeightStationary => (weights, activations),
        Dataflow::ActivationStationary => (activations, weights),
    };
    let mut hits: Vec<RowMatch> = Vec::with_capacity(rows);
    for (t, tile) in stored.chunks(rows).enumerate() {
        let base = t * rows;
        cam.invalidate_all();
        for (r, ctx) in tile.iter().enumerate() {
            cam.write_row(r, &ctx.hash)?;
        }
        for (q, key) in keys.iter().enumerate() {
            cam.search_into(&key.hash, &mut hits)?;
            for m in &hits {
                let s = base + m.row;
                match dataflow {
                    Dataflow::WeightStationary => on_match(q, s, m.distance),
                    Dataflow::ActivationStationary => on_match(s, q, m.distance),
                }
            }
        }
    }
    Ok(())
}

/// Every (patch, kernel) product of one layer, `patches x kernels` row-major
/// and without bias. The CAM word length must already match the contexts;
/// the CAM's events (including that reconfiguration) are moved to `trace`.
pub fn run_dot_layer(
    layer: usize,
    activations: &DotOperands,
    weights: &DotOperands,
    plan: &ExecutionPlan,
    cam: &mut CamState,
    trace: &mut CostTrace,
) -> Result<Vec<f64>> {
    let k = cam.active_word_bits();
    for ctx in activations.contexts.iter().chain(weights.contexts) {
        if ctx.k() != k {
            return Err(Error::HashLengthMismatch { left: ctx.k(), right: k });
        }
    }
    let (p, kk) = (activations.contexts.len(), weights.contexts.len());
    let mut out = vec![0.0; p * kk];
    match plan.mode {
        DotMode::Approximate(cosine) => {
            let (a, w) = (activations.contexts, weights.contexts);
            schedule(plan.dataflow, a, w, cam, |i, j, hd| {
                out[i * kk + j] = dot_from_distance(a[i].norm, w[j].norm, hd, k, cosine);
            })?;
        }
        DotMode::Exact => {
            if activations.inputs != weights.inputs
                || activations.vectors.len() != p * activations.inputs
                || weights.vectors.len() != kk * weights.inputs
            {
                return Err(Error::DimensionMismatch {
                    expected: p * weights.inputs,
                    found: activations.vectors.len(),
                });
            }
            schedule(plan.dataflow, activations.contexts, weights.contexts, cam, |_, _, _| {})?;
            for i in 0..p {
                let a = activations.vector(i);
                for j in 0..kk {
                    out[i * kk + j] = algebraic_dot(a, weights.vector(j))?;
                }
            }
        }
    }
    trace.push_cam(layer, cam.rows(), cam.take_events());
    Ok(out)
}

#[derive(Clone, Debug)]
struct PreparedDot {
    conv: Option<ConvGeometry>,
    inputs: usize,
    kernels: usize,
    k: usize,
    /// `None` in exact and schedule-only executors.
    projection: Option<ProjectionMatrix>,
    weights: Vec<f64>,
    contexts: Vec<Context>,
    bias: Option<Vec<f64>>,
    relu: bool,
    /// The first dot layer reads the network input, whose contexts are
    /// prepared off-chip.
    software_input: bool,
}

fn post_event(layer: &Layer, input: Dims, output: Dims) -> Option<(PostOp, u64)> {
    match layer {
        Layer::Relu => Some((PostOp::Relu, input.len() as u64)),
        Layer::MaxPool(p) => Some((PostOp::MaxPool, (output.len() * p.kernel * p.kernel) as u64)),
        Layer::AvgPool(p) => Some((PostOp::AvgPool, (output.len() * p.kernel * p.kernel) as u64)),
        Layer::BatchNorm(_) => Some((PostOp::BatchNorm, input.len() as u64)),
        Layer::Flatten | Layer::Conv2d(_) | Layer::Linear(_) => None,
    }
}

/// A model bound to an execution plan, with weight contexts prepared once.
#[derive(Clone, Debug)]
pub struct Executor<'m> {
    model: &'m NetworkModel,
    plan: ExecutionPlan,
    dots: Vec<Option<PreparedDot>>,
    schedule_only: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub logits: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub trace: CostTrace,
}

impl RunOutput {
    pub fn correct(&self, labels: &[u16]) -> usize {
        self.predictions.iter().zip(labels).filter(|(p, l)| **p == usize::from(**l)).count()
    }

    pub fn accuracy(&self, labels: &[u16]) -> f64 {
        if self.predictions.is_empty() {
            return 0.0;
        }
        self.correct(labels) as f64 / self.predictions.len() as f64
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

impl<'m> Executor<'m> {
    pub fn new(model: &'m NetworkModel, plan: ExecutionPlan) -> Result<Self> {
        Self::build(model, plan, false)
    }

    fn build(model: &'m NetworkModel, plan: ExecutionPlan, schedule_only: bool) -> Result<Self> {
        plan.validate(model)?;
        let mut dots = Vec::with_capacity(model.layers().len());
        let mut dot_index = 0;
        for (index, layer) in model.layers().iter().enumerate() {
            let (conv, inputs, kernels, weights, bias, relu) = match layer {
                Layer::Conv2d(c) => {
                    let g = c.geometry();
                    (Some(g), g.patch_len(), c.out_channels, &c.weights, &c.bias, c.relu)
                }
                Layer::Linear(l) => (None, l.in_features, l.out_features, &l.weights, &l.bias, l.relu),
                _ => {
                    dots.push(None);
                    continue;
                }
            };
            let k = plan.hash_lengths[dot_index];
            let weights: Vec<f64> =
                if schedule_only { Vec::new() } else { weights.iter().map(|&w| f64::from(w)).collect() };
            let approximate = matches!(plan.mode, DotMode::Approximate(_)) && !schedule_only;
            let (projection, contexts) = if approximate {
                let proj = ProjectionMatrix::generate(layer_seed(plan.seed, index, inputs), inputs, k)?;
                let ctx = make_weight_contexts(&weights, inputs, &proj)?;
                (Some(proj), ctx)
            } else {
                (None, placeholder_contexts(kernels, k))
            };
            dots.push(Some(PreparedDot {
                conv,
                inputs,
                kernels,
                k,
                projection,
                weights,
                contexts,
                bias: bias.as_ref().map(|b| b.iter().map(|&v| f64::from(v)).collect()),
                relu,
                software_input: dot_index == 0,
            }));
            dot_index += 1;
        }
        Ok(Self { model, plan, dots, schedule_only })
    }

    pub fn model(&self) -> &NetworkModel {
        self.model
    }

    pub fn plan(&self) -> &ExecutionPlan {
        &self.plan
    }

    /// Run layers `range` on one sample. `input` must have the shape of the
    /// first layer's input.
    pub fn run_layers(
        &self,
        range: Range<usize>,
        input: ActivationTensor,
        trace: &mut CostTrace,
    ) -> Result<ActivationTensor> {
        if range.end > self.model.layers().len() || range.start > range.end {
            return Err(Error::out_of_range("layer range", format!("{range:?}")));
        }
        let expected = self.model.input_of(range.start);
        if input.dims != expected && input.dims.len() != expected.len() {
            return Err(Error::DimensionMismatch { expected: expected.len(), found: input.dims.len() });
        }
        let batch_index = input.batch_index;
        let mut cam = CamState::new(self.plan.cam);
        let mut t = ActivationTensor { dims: expected, ..input };
        for index in range {
            t = self.run_layer(index, t, &mut cam, trace)?;
        }
        t.batch_index = batch_index;
        Ok(t)
    }

    pub fn run_sample(&self, input: ActivationTensor, trace: &mut CostTrace) -> Result<ActivationTensor> {
        self.run_layers(0..self.model.layers().len(), input, trace)
    }

    fn run_layer(
        &self,
        index: usize,
        t: ActivationTensor,
        cam: &mut CamState,
        trace: &mut CostTrace,
    ) -> Result<ActivationTensor> {
        let layer = &self.model.layers()[index];
        let (in_dims, out_dims) = (self.model.input_of(index), self.model.output_of(index));
        if let Some(prep) = &self.dots[index] {
            return self.run_dot(index, layer.kind(), prep, t, out_dims, cam, trace);
        }
        trace.push(index, CostEvent::Layer { kind: layer.kind(), dot: None });
        if let Some((op, elements)) = post_event(layer, in_dims, out_dims) {
            trace.push(index, CostEvent::Post { op, elements });
        }
        if self.schedule_only {
            return Ok(ActivationTensor { dims: out_dims, data: Vec::new(), batch_index: t.batch_index });
        }
        let mut t = t;
        Ok(match layer {
            Layer::Relu => {
                relu(&mut t);
                t
            }
            Layer::MaxPool(p) => max_pool(&t, p)?,
            Layer::AvgPool(p) => avg_pool(&t, p)?,
            Layer::BatchNorm(bn) => {
                batch_norm(&mut t, bn)?;
                t
            }
            Layer::Flatten => ActivationTensor { dims: out_dims, ..t },
            Layer::Conv2d(_) | Layer::Linear(_) => unreachable!("dot layers are prepared"),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_dot(
        &self,
        index: usize,
        kind: LayerKind,
        prep: &PreparedDot,
        t: ActivationTensor,
        out_dims: Dims,
        cam: &mut CamState,
        trace: &mut CostTrace,
    ) -> Result<ActivationTensor> {
        let patches = out_dims.height * out_dims.width;
        trace.push(
            index,
            CostEvent::Layer {
                kind,
                dot: Some(DotShape {
                    patches,
                    kernels: prep.kernels,
                    inputs: prep.inputs,
                    dataflow: self.plan.dataflow,
                }),
            },
        );

        let vectors = if self.schedule_only {
            Vec::new()
        } else {
            match &prep.conv {
                Some(g) => im2col(&t, g)?.data,
                None => t.data,
            }
        };

        let contexts = match &prep.projection {
            Some(proj) => {
                let mut scratch = vec![0.0; prep.k];
                let mut out = Vec::with_capacity(patches);
                for x in vectors.chunks_exact(prep.inputs) {
                    out.push(if prep.software_input {
                        build_context_with(x, proj, &mut scratch)?
                    } else {
                        online_activation_context(x, proj, &mut scratch, index, trace)?
                    });
                }
                out
            }
            None => {
                if !prep.software_input {
                    for _ in 0..patches {
                        trace.push(index, CostEvent::Transform { inputs: prep.inputs, hash_bits: prep.k });
                    }
                }
                placeholder_contexts(patches, prep.k)
            }
        };

        cam.set_word_length(prep.k)?;
        let acts = DotOperands { contexts: &contexts, vectors: &vectors, inputs: prep.inputs };
        let weights = DotOperands { contexts: &prep.contexts, vectors: &prep.weights, inputs: prep.inputs };
        let elements = (patches * prep.kernels) as u64;
        let pre = if self.schedule_only {
            schedule(self.plan.dataflow, acts.contexts, weights.contexts, cam, |_, _, _| {})?;
            trace.push_cam(index, cam.rows(), cam.take_events());
            Vec::new()
        } else {
            run_dot_layer(index, &acts, &weights, &self.plan, cam, trace)?
        };
        trace.push(index, CostEvent::Post { op: PostOp::DotFinalize, elements });
        if prep.relu {
            trace.push(index, CostEvent::Post { op: PostOp::Relu, elements });
        }
        if self.schedule_only {
            return Ok(ActivationTensor { dims: out_dims, data: Vec::new(), batch_index: t.batch_index });
        }

        let mut pre = pre;
        if let Some(bias) = &prep.bias {
            for row in pre.chunks_exact_mut(prep.kernels) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
        }
        let mut out = feature_map(&pre, prep.kernels, out_dims)?;
        if prep.relu {
            relu(&mut out);
        }
        out.batch_index = t.batch_index;
        Ok(out)
    }

    /// Run a batch of samples. Results and trace are in input order whatever
    /// the size of the thread pool.
    pub fn run_batch(&self, inputs: &[ActivationTensor], collect_trace: bool) -> Result<RunOutput> {
        self.run_batch_from(0, inputs, collect_trace)
    }

    /// Like [`run_batch`](Self::run_batch) for inputs that are the outputs of
    /// layer `start - 1`.
    pub fn run_batch_from(&self, start: usize, inputs: &[ActivationTensor], collect_trace: bool) -> Result<RunOutput> {
        let end = self.model.layers().len();
        let results: Vec<(Vec<f64>, CostTrace)> = inputs
            .par_iter()
            .map(|x| {
                let mut trace = if collect_trace { CostTrace::new() } else { CostTrace::disabled() };
                let y = self.run_layers(start..end, x.clone(), &mut trace)?;
                Ok((y.data, trace))
            })
            .collect::<Result<_>>()?;
        let mut out = RunOutput {
            trace: if collect_trace { CostTrace::new() } else { CostTrace::disabled() },
            ..RunOutput::default()
        };
        for (logits, mut trace) in results {
            out.predictions.push(argmax(&logits));
            out.logits.push(logits);
            out.trace.append(&mut trace);
        }
        Ok(out)
    }

    /// Run layers `range` on every input without tracing (prefix caching).
    pub fn run_batch_range(&self, range: Range<usize>, inputs: &[ActivationTensor]) -> Result<Vec<ActivationTensor>> {
        inputs.par_iter().map(|x| self.run_layers(range.clone(), x.clone(), &mut CostTrace::disabled())).collect()
    }
}

/// Run `inputs` through `model` under `plan`.
pub fn run_network(model: &NetworkModel, plan: &ExecutionPlan, inputs: &[ActivationTensor]) -> Result<RunOutput> {
    Executor::new(model, plan.clone())?.run_batch(inputs, true)
}

/// The cost trace of `images` inferences without any arithmetic. Identical
/// to the trace of a full run, since scheduling does not depend on data.
pub fn dry_run_trace(model: &NetworkModel, plan: &ExecutionPlan, images: usize) -> Result<CostTrace> {
    let exec = Executor::build(model, plan.clone(), true)?;
    let input = ActivationTensor { dims: model.input_dims(), data: Vec::new(), batch_index: 0 };
    let mut one = CostTrace::new();
    exec.run_sample(input, &mut one)?;
    let mut trace = CostTrace::new();
    for _ in 0..images {
        trace.append(&mut one.clone());
    }
    Ok(trace)
}

impl DotMode {
    pub fn cosine(self) -> Option<CosineModel> {
        match self {
            DotMode::Approximate(c) => Some(c),
            DotMode::Exact => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camarray::CamConfig;
    use crate::geodot::build_context;
    use crate::netexec::{Conv2d, Linear, Pool};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_vecs(rng: &mut impl Rng, count: usize, n: usize) -> Vec<f64> {
        (0..count * n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn contexts(v: &[f64], n: usize, proj: &ProjectionMatrix) -> Vec<Context> {
        v.chunks_exact(n).map(|x| build_context(x, proj).unwrap()).collect()
    }

    fn plan(dataflow: Dataflow, rows: usize, k: usize) -> ExecutionPlan {
        ExecutionPlan {
            dataflow,
            cam: CamConfig::new(rows).unwrap(),
            hash_lengths: vec![k],
            seed: 3,
            mode: DotMode::default(),
        }
    }

    fn run_both(p: usize, kk: usize, n: usize, rows: usize, k: usize, seed: u64) -> [(Vec<f64>, CostTrace); 2] {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let proj = ProjectionMatrix::generate(seed, n, k).unwrap();
        let av = random_vecs(&mut rng, p, n);
        let wv = random_vecs(&mut rng, kk, n);
        let (ac, wc) = (contexts(&av, n, &proj), contexts(&wv, n, &proj));
        [Dataflow::WeightStationary, Dataflow::ActivationStationary].map(|df| {
            let plan = plan(df, rows, k);
            let mut cam = CamState::new(plan.cam);
            cam.set_word_length(k).unwrap();
            let mut trace = CostTrace::new();
            let a = DotOperands { contexts: &ac, vectors: &av, inputs: n };
            let w = DotOperands { contexts: &wc, vectors: &wv, inputs: n };
            (run_dot_layer(0, &a, &w, &plan, &mut cam, &mut trace).unwrap(), trace)
        })
    }

    fn count_searches(trace: &CostTrace) -> usize {
        trace.iter().filter(|e| matches!(e.event, CostEvent::Cam { event: crate::CamEvent::Search { .. }, .. })).count()
    }

    #[test]
    fn dataflows_agree_on_a_lenet_layer() {
        let [(ws, ws_trace), (as_, as_trace)] = run_both(100, 16, 150, 64, 512, 11);
        assert_eq!(ws, as_);
        assert_eq!(count_searches(&ws_trace), 100);
        assert_eq!(count_searches(&as_trace), 16 * 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dataflows_agree(p in 1usize..150, kk in 1usize..40, n in 1usize..30,
                           rows_i in 0usize..4, k_i in 0usize..4, seed in any::<u64>()) {
            let rows = crate::camarray::ALLOWED_ROWS[rows_i];
            let k = crate::camarray::ALLOWED_WORD_BITS[k_i];
            let [(ws, wt), (as_, at)] = run_both(p, kk, n, rows, k, seed);
            prop_assert_eq!(ws, as_);
            prop_assert_eq!(count_searches(&wt), p * kk.div_ceil(rows));
            prop_assert_eq!(count_searches(&at), kk * p.div_ceil(rows));
        }
    }

    #[test]
    fn layer_rejects_wrong_word_length() {
        let proj = ProjectionMatrix::generate(1, 4, 256).unwrap();
        let c = vec![build_context(&[1.0, 2.0, 3.0, 4.0], &proj).unwrap()];
        let plan = plan(Dataflow::WeightStationary, 64, 512);
        let mut cam = CamState::new(plan.cam);
        cam.set_word_length(512).unwrap();
        let ops = DotOperands { contexts: &c, vectors: &[], inputs: 4 };
        let err = run_dot_layer(0, &ops, &ops, &plan, &mut cam, &mut CostTrace::new()).unwrap_err();
        assert!(matches!(err, Error::HashLengthMismatch { .. }));
    }

    fn tiny_model() -> NetworkModel {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let mut w = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect() };
        NetworkModel::new(
            Dims::new(1, 8, 8),
            vec![
                Layer::Conv2d(Conv2d {
                    in_channels: 1,
                    out_channels: 4,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                    weights: w(36),
                    bias: Some(w(4)),
                    relu: true,
                }),
                Layer::MaxPool(Pool { kernel: 2, stride: 2 }),
                Layer::Linear(Linear { in_features: 64, out_features: 3, weights: w(192), bias: None, relu: false }),
            ],
        )
        .unwrap()
    }

    fn inputs(count: usize) -> Vec<ActivationTensor> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        (0..count)
            .map(|i| {
                ActivationTensor::new(Dims::new(1, 8, 8), (0..64).map(|_| rng.gen_range(0.0..1.0)).collect())
                    .unwrap()
                    .with_batch_index(i)
            })
            .collect()
    }

    #[test]
    fn exact_mode_matches_direct_convolution() {
        let m = tiny_model();
        let mut plan = ExecutionPlan::uniform(&m, Dataflow::ActivationStationary, CamConfig::new(64).unwrap(), 256, 1);
        plan.mode = DotMode::Exact;
        let x = &inputs(1)[0];
        let out = Executor::new(&m, plan).unwrap().run_sample(x.clone(), &mut CostTrace::disabled()).unwrap();

        // reference forward pass
        let Layer::Conv2d(c) = &m.layers()[0] else { unreachable!() };
        let Layer::Linear(l) = &m.layers()[2] else { unreachable!() };
        let mut conv = vec![0.0f64; 4 * 64];
        for o in 0..4 {
            for y in 0..8i32 {
                for xx in 0..8i32 {
                    let mut s = f64::from(c.bias.as_ref().unwrap()[o]);
                    for ky in 0..3i32 {
                        for kx in 0..3i32 {
                            let (iy, ix) = (y + ky - 1, xx + kx - 1);
                            if (0..8).contains(&iy) && (0..8).contains(&ix) {
                                s += f64::from(c.weights[o * 9 + (ky * 3 + kx) as usize])
                                    * x.data[(iy * 8 + ix) as usize];
                            }
                        }
                    }
                    conv[o * 64 + (y * 8 + xx) as usize] = s.max(0.0);
                }
            }
        }
        let mut pooled = vec![0.0; 64];
        for o in 0..4 {
            for y in 0..4 {
                for xx in 0..4 {
                    let at = |dy: usize, dx: usize| conv[o * 64 + (2 * y + dy) * 8 + 2 * xx + dx];
                    pooled[o * 16 + y * 4 + xx] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
                }
            }
        }
        for j in 0..3 {
            let r: f64 = (0..64).map(|i| f64::from(l.weights[j * 64 + i]) * pooled[i]).sum();
            assert!((out.data[j] - r).abs() < 1e-9, "{} vs {r}", out.data[j]);
        }
    }

    #[test]
    fn dry_run_matches_full_run() {
        let m = tiny_model();
        for df in [Dataflow::WeightStationary, Dataflow::ActivationStationary] {
            for mode in [DotMode::default(), DotMode::Exact] {
                let plan = ExecutionPlan::uniform(&m, df, CamConfig::new(64).unwrap(), 512, 4).with_mode(mode);
                let full = run_network(&m, &plan, &inputs(3)).unwrap();
                let dry = dry_run_trace(&m, &plan, 3).unwrap();
                assert_eq!(full.trace, dry);
            }
        }
    }

    #[test]
    fn transforms_only_after_the_first_dot_layer() {
        let m = tiny_model();
        let plan = ExecutionPlan::uniform(&m, Dataflow::WeightStationary, CamConfig::new(64).unwrap(), 256, 4);
        let trace = dry_run_trace(&m, &plan, 1).unwrap();
        let layers: Vec<usize> =
            trace.iter().filter(|e| matches!(e.event, CostEvent::Transform { .. })).map(|e| e.layer).collect();
        assert_eq!(layers, vec![2]);
    }

    #[test]
    fn batch_results_are_ordered() {
        let m = tiny_model();
        let plan = ExecutionPlan::uniform(&m, Dataflow::ActivationStationary, CamConfig::new(128).unwrap(), 1024, 4);
        let exec = Executor::new(&m, plan).unwrap();
        let xs = inputs(4);
        let batch = exec.run_batch(&xs, false).unwrap();
        assert!(batch.trace.is_empty());
        for (i, x) in xs.iter().enumerate() {
            let y = exec.run_sample(x.clone(), &mut CostTrace::disabled()).unwrap();
            assert_eq!(batch.logits[i], y.data);
        }
        // prefix + suffix == whole
        let mid = exec.run_batch_range(0..2, &xs).unwrap();
        let rest = exec.run_batch_from(2, &mid, false).unwrap();
        assert_eq!(rest.logits, batch.logits);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[-1.0]), 0);
    }
}
