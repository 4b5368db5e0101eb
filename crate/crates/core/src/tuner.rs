//! Per-layer hash length selection.
//!
//! Starting from every layer at the longest candidate, layers are visited
//! first to last and each gets the shortest candidate that keeps calibration
//! accuracy within `tolerance` points of the all-longest baseline, given the
//! choices already made for earlier layers.

use serde::{Deserialize, Serialize};

use crate::camarray::ALLOWED_WORD_BITS;
use crate::modelio::Dataset;
use crate::netexec::{ActivationTensor, ExecutionPlan, Executor, NetworkModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    /// Allowed accuracy drop in percentage points.
    pub tolerance: f64,
    /// Number of calibration samples taken from the front of the dataset.
    pub calib_size: usize,
    /// Ascending hash lengths to choose from.
    pub candidates: Vec<usize>,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { tolerance: 1.0, calib_size: 500, candidates: ALLOWED_WORD_BITS.to_vec(), seed: 0 }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(Error::Config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if self.candidates.is_empty() {
            return Err(Error::Config("no candidate hash lengths".into()));
        }
        if self.candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "candidate hash lengths must be strictly ascending: {:?}",
                self.candidates
            )));
        }
        if let Some(k) = self.candidates.iter().find(|k| !ALLOWED_WORD_BITS.contains(k)) {
            return Err(Error::Config(format!("hash length {k} not in {ALLOWED_WORD_BITS:?}")));
        }
        Ok(())
    }

    fn max(&self) -> usize {
        *self.candidates.last().unwrap()
    }
}

/// Calibration accuracy (percent) with one layer at each candidate length
/// and every other layer at the longest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    /// Model indices of the dot-product layers.
    pub layers: Vec<usize>,
    pub candidates: Vec<usize>,
    /// `accuracy[layer][candidate]`.
    pub accuracy: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// Chosen length per dot-product layer, in model order.
    pub hash_lengths: Vec<usize>,
    pub tolerance: f64,
    pub seed: u64,
    pub calib_size: usize,
    /// Calibration accuracy (percent) with every layer at the longest length.
    pub baseline_accuracy: f64,
    /// Calibration accuracy (percent) of the chosen lengths.
    pub achieved_accuracy: f64,
    pub sensitivity: SensitivityTable,
}

impl TuneResult {
    pub fn total_bits(&self) -> usize {
        self.hash_lengths.iter().sum()
    }

    /// Internal consistency of a (possibly hand-edited) result.
    pub fn check(&self) -> Result<()> {
        let s = &self.sensitivity;
        if self.hash_lengths.len() != s.layers.len() || s.accuracy.len() != s.layers.len() {
            return Err(Error::Config(format!(
                "{} hash lengths for {} layers",
                self.hash_lengths.len(),
                s.layers.len()
            )));
        }
        if let Some(k) = self.hash_lengths.iter().find(|k| !s.candidates.contains(k)) {
            return Err(Error::Config(format!("hash length {k} is not a candidate")));
        }
        if s.accuracy.iter().any(|row| row.len() != s.candidates.len()) {
            return Err(Error::Config("sensitivity rows must have one entry per candidate".into()));
        }
        Ok(())
    }

    /// `base` with this result's hash lengths, after checking they fit `model`.
    pub fn apply(&self, model: &NetworkModel, base: &ExecutionPlan) -> Result<ExecutionPlan> {
        if self.sensitivity.layers != model.dot_layers() {
            return Err(Error::Config(format!(
                "tuned for dot layers {:?}, model has {:?}",
                self.sensitivity.layers,
                model.dot_layers()
            )));
        }
        let plan = ExecutionPlan { hash_lengths: self.hash_lengths.clone(), ..base.clone() };
        plan.validate(model)?;
        Ok(plan)
    }
}

struct Calibration<'m> {
    model: &'m NetworkModel,
    base: ExecutionPlan,
    inputs: Vec<ActivationTensor>,
    labels: Vec<u16>,
}

impl<'m> Calibration<'m> {
    fn new(model: &'m NetworkModel, calib: &Dataset, base: &ExecutionPlan, cfg: &TuneConfig) -> Result<Self> {
        cfg.validate()?;
        let calib = calib.slice(0, cfg.calib_size);
        if calib.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        if calib.dims.len() != model.input_dims().len() {
            return Err(Error::DimensionMismatch { expected: model.input_dims().len(), found: calib.dims.len() });
        }
        let base =
            ExecutionPlan { hash_lengths: vec![cfg.max(); model.dot_layers().len()], seed: cfg.seed, ..base.clone() };
        Ok(Self { model, base, inputs: calib.tensors(), labels: calib.labels })
    }

    fn executor(&self, lengths: &[usize]) -> Result<Executor<'m>> {
        Executor::new(self.model, ExecutionPlan { hash_lengths: lengths.to_vec(), ..self.base.clone() })
    }

    /// Accuracy (percent) of running layers `start..` on cached activations.
    fn accuracy_from(&self, lengths: &[usize], start: usize, cached: &[ActivationTensor]) -> Result<f64> {
        let out = self.executor(lengths)?.run_batch_from(start, cached, false)?;
        Ok(100.0 * out.correct(&self.labels) as f64 / self.labels.len() as f64)
    }

    fn advance(
        &self,
        lengths: &[usize],
        range: std::ops::Range<usize>,
        cached: &[ActivationTensor],
    ) -> Result<Vec<ActivationTensor>> {
        self.executor(lengths)?.run_batch_range(range, cached)
    }
}

fn scan(cal: &Calibration, cfg: &TuneConfig) -> Result<(SensitivityTable, f64)> {
    let dots = cal.model.dot_layers();
    let all_max = cal.base.hash_lengths.clone();
    let mut cached = cal.inputs.clone();
    let mut at = 0;
    let mut baseline = None;
    let mut accuracy = Vec::with_capacity(dots.len());
    for (d, &layer) in dots.iter().enumerate() {
        cached = cal.advance(&all_max, at..layer, &cached)?;
        at = layer;
        let mut row = Vec::with_capacity(cfg.candidates.len());
        for &k in &cfg.candidates {
            let acc = if let Some(b) = baseline.filter(|_| k == cfg.max()) {
                b
            } else {
                let mut lengths = all_max.clone();
                lengths[d] = k;
                cal.accuracy_from(&lengths, layer, &cached)?
            };
            if k == cfg.max() {
                baseline = Some(acc);
            }
            row.push(acc);
        }
        accuracy.push(row);
    }
    let baseline = match baseline {
        Some(b) => b,
        // no dot layers: the plan is just the digital layers
        None => cal.accuracy_from(&all_max, 0, &cal.inputs)?,
    };
    let table = SensitivityTable { layers: dots, candidates: cfg.candidates.clone(), accuracy };
    Ok((table, baseline))
}

/// Accuracy with each layer at each candidate, others at the longest.
pub fn sensitivity_scan(
    model: &NetworkModel,
    calib: &Dataset,
    base: &ExecutionPlan,
    cfg: &TuneConfig,
) -> Result<SensitivityTable> {
    let cal = Calibration::new(model, calib, base, cfg)?;
    Ok(scan(&cal, cfg)?.0)
}

/// Greedy first-to-last selection of per-layer hash lengths. `base` supplies
/// the dataflow, CAM and dot mode; its hash lengths and seed are replaced.
pub fn tune_hash_lengths(
    model: &NetworkModel,
    calib: &Dataset,
    base: &ExecutionPlan,
    cfg: &TuneConfig,
) -> Result<TuneResult> {
    let cal = Calibration::new(model, calib, base, cfg)?;
    let (sensitivity, baseline) = scan(&cal, cfg)?;
    let floor = baseline - cfg.tolerance - 1e-9;
    let dots = &sensitivity.layers;

    let mut lengths = cal.base.hash_lengths.clone();
    let mut achieved = baseline;
    let mut cached = cal.inputs.clone();
    let mut at = 0;
    for (d, &layer) in dots.iter().enumerate() {
        cached = cal.advance(&lengths, at..layer, &cached)?;
        at = layer;
        for &k in cfg.candidates.iter().filter(|&&k| k < cfg.max()) {
            let mut trial = lengths.clone();
            trial[d] = k;
            let acc = cal.accuracy_from(&trial, layer, &cached)?;
            if acc >= floor {
                lengths = trial;
                achieved = acc;
                break;
            }
        }
    }
    let result = TuneResult {
        hash_lengths: lengths,
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        calib_size: cal.labels.len(),
        baseline_accuracy: baseline,
        achieved_accuracy: achieved,
        sensitivity,
    };
    if result.achieved_accuracy < floor {
        return Err(Error::Config(format!(
            "tuned accuracy {:.2} below baseline {:.2} - {}",
            result.achieved_accuracy, baseline, cfg.tolerance
        )));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camarray::CamConfig;
    use crate::netexec::{Dataflow, Dims, Layer, Linear};
    use rand::{Rng, SeedableRng};

    /// Linear classifier whose rows are the class prototypes.
    fn prototype_model(classes: usize, n: usize, noise: f64, seed: u64) -> (NetworkModel, Dataset) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let protos: Vec<Vec<f32>> =
            (0..classes).map(|_| (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
        let hidden = Layer::Linear(Linear {
            in_features: n,
            out_features: n,
            weights: (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect(),
            bias: None,
            relu: false,
        });
        let head = Layer::Linear(Linear {
            in_features: n,
            out_features: classes,
            weights: protos.concat(),
            bias: None,
            relu: false,
        });
        let model = NetworkModel::new(Dims::new(n, 1, 1), vec![hidden, head]).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = i % classes;
            data.extend(protos[c].iter().map(|&p| p + rng.gen_range(-1.0..1.0) * noise as f32));
            labels.push(c as u16);
        }
        (model, Dataset { dims: Dims::new(n, 1, 1), num_classes: classes as u16, data, labels })
    }

    fn base() -> ExecutionPlan {
        ExecutionPlan {
            dataflow: Dataflow::ActivationStationary,
            cam: CamConfig::new(64).unwrap(),
            hash_lengths: Vec::new(),
            seed: 0,
            mode: Default::default(),
        }
    }

    fn cfg(tolerance: f64) -> TuneConfig {
        TuneConfig { tolerance, calib_size: 60, seed: 3, ..TuneConfig::default() }
    }

    #[test]
    fn loose_tolerance_picks_shortest() {
        let (m, ds) = prototype_model(5, 32, 1.5, 1);
        let r = tune_hash_lengths(&m, &ds, &base(), &cfg(100.0)).unwrap();
        assert_eq!(r.hash_lengths, vec![256, 256]);
        r.check().unwrap();
    }

    #[test]
    fn insensitive_model_goes_to_shortest_at_zero_tolerance() {
        let (m, ds) = prototype_model(4, 24, 0.0, 2);
        let r = tune_hash_lengths(&m, &ds, &base(), &cfg(0.0)).unwrap();
        assert_eq!(r.baseline_accuracy, 100.0);
        assert_eq!(r.hash_lengths, vec![256, 256]);
    }

    #[test]
    fn scan_shape_and_max_column() {
        let (m, ds) = prototype_model(5, 32, 1.5, 4);
        let c = cfg(1.0);
        let t = sensitivity_scan(&m, &ds, &base(), &c).unwrap();
        assert_eq!(t.layers, vec![0, 1]);
        assert_eq!(t.accuracy.len(), 2);
        let r = tune_hash_lengths(&m, &ds, &base(), &c).unwrap();
        for row in &t.accuracy {
            assert_eq!(row.len(), 4);
            assert_eq!(row[3], r.baseline_accuracy);
        }
        assert!(r.achieved_accuracy >= r.baseline_accuracy - 1.0);
    }

    #[test]
    fn one_layer_model_has_one_row() {
        let (m, ds) = prototype_model(3, 16, 0.5, 5);
        let single = NetworkModel::new(m.input_dims(), m.layers()[1..].to_vec()).unwrap();
        let t = sensitivity_scan(&single, &ds, &base(), &cfg(1.0)).unwrap();
        assert_eq!(t.accuracy.len(), 1);
        assert_eq!(t.accuracy[0].len(), 4);
    }

    #[test]
    fn empty_calibration_is_an_error() {
        let (m, ds) = prototype_model(3, 16, 0.5, 5);
        let c = TuneConfig { calib_size: 0, ..cfg(1.0) };
        assert!(matches!(tune_hash_lengths(&m, &ds, &base(), &c), Err(Error::EmptyCalibration)));
        assert!(matches!(sensitivity_scan(&m, &ds.slice(0, 0), &base(), &cfg(1.0)), Err(Error::EmptyCalibration)));
    }

    #[test]
    fn config_validation() {
        assert!(TuneConfig { tolerance: -1.0, ..cfg(0.0) }.validate().is_err());
        assert!(TuneConfig { candidates: vec![512, 256], ..cfg(0.0) }.validate().is_err());
        assert!(TuneConfig { candidates: vec![], ..cfg(0.0) }.validate().is_err());
        assert!(TuneConfig { candidates: vec![300], ..cfg(0.0) }.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let (m, ds) = prototype_model(5, 32, 1.5, 6);
        let a = tune_hash_lengths(&m, &ds, &base(), &cfg(2.0)).unwrap();
        let b = tune_hash_lengths(&m, &ds, &base(), &cfg(2.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loosening_never_lengthens() {
        let (m, ds) = prototype_model(6, 32, 1.8, 7);
        let mut prev: Option<Vec<usize>> = None;
        for tol in [0.0, 2.0, 5.0, 10.0, 30.0, 100.0] {
            let r = tune_hash_lengths(&m, &ds, &base(), &cfg(tol)).unwrap();
            if let Some(p) = &prev {
                assert!(r.total_bits() <= p.iter().sum::<usize>(), "tol {tol}: {:?} vs {p:?}", r.hash_lengths);
            }
            prev = Some(r.hash_lengths);
        }
    }
}
