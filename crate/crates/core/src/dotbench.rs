//! Monte-Carlo error of the approximate dot product versus hash length.
//!
//! Each trial draws a Gaussian vector pair and one projection matrix at the
//! longest requested hash length; shorter hashes use its column prefix, so
//! every hash length sees the same pairs and the same random directions.

use std::io::Write;

use crate::geodot::{
    algebraic_dot, build_context, dot_from_distance, gaussian_vector, hamming_distance, splitmix64, Context,
    CosineModel, ProjectionMatrix,
};
use crate::{Error, Result};

/// A fixed pair with a known inner product of about 2.0765.
pub const WORKED_X: [f64; 4] = [0.6012, 0.8383, 0.6859, 0.5712];
pub const WORKED_Y: [f64; 4] = [0.9044, 0.5352, 0.8110, 0.9243];

pub const MIN_HASH_BITS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct DotBenchConfig {
    pub hash_lengths: Vec<usize>,
    pub trials: usize,
    /// Length of the random vectors.
    pub dim: usize,
    pub seed: u64,
}

impl Default for DotBenchConfig {
    fn default() -> Self {
        Self { hash_lengths: vec![64, 128, 256, 512, 1024], trials: 1000, dim: 16, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    Random,
    Worked,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Random => "random",
            Case::Worked => "worked_example",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DotBenchRow {
    pub case: Case,
    pub k: usize,
    pub cosine: CosineModel,
    pub trials: usize,
    /// Exact product of the worked pair; `None` for random pairs.
    pub algebraic: Option<f64>,
    pub median_approx: Option<f64>,
    pub median_abs_err: f64,
    pub p95_abs_err: f64,
    pub median_rel_err: f64,
    pub p95_rel_err: f64,
}

/// Median of unsorted values (mean of the middle two for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ trial as u64)
}

fn approx(a: &Context, b: &Context, k: usize, cosine: CosineModel) -> Result<f64> {
    let (ha, hb) = (a.hash.prefix(k)?, b.hash.prefix(k)?);
    Ok(dot_from_distance(a.norm, b.norm, hamming_distance(&ha, &hb)?, k, cosine))
}

struct Samples {
    approx: Vec<f64>,
    abs: Vec<f64>,
    rel: Vec<f64>,
}

impl Samples {
    fn new(n: usize) -> Self {
        Self { approx: Vec::with_capacity(n), abs: Vec::with_capacity(n), rel: Vec::with_capacity(n) }
    }

    fn push(&mut self, approx: f64, exact: f64) {
        let err = (approx - exact).abs();
        self.approx.push(approx);
        self.abs.push(err);
        self.rel.push(if exact == 0.0 { f64::INFINITY } else { err / exact.abs() });
    }
}

pub fn dotbench(cfg: &DotBenchConfig) -> Result<Vec<DotBenchRow>> {
    if let Some(k) = cfg.hash_lengths.iter().find(|&&k| k < MIN_HASH_BITS) {
        return Err(Error::out_of_range("hash length", format!("{k} (minimum {MIN_HASH_BITS})")));
    }
    if cfg.dim == 0 {
        return Err(Error::out_of_range("vector length", 0));
    }
    if cfg.trials == 0 || cfg.hash_lengths.is_empty() {
        return Ok(Vec::new());
    }
    let kmax = *cfg.hash_lengths.iter().max().unwrap();
    let cosines = [CosineModel::Piecewise, CosineModel::Exact];
    let slots = cfg.hash_lengths.len() * cosines.len();
    let mut random: Vec<Samples> = (0..slots).map(|_| Samples::new(cfg.trials)).collect();
    let mut worked: Vec<Samples> = (0..slots).map(|_| Samples::new(cfg.trials)).collect();
    let worked_exact = algebraic_dot(&WORKED_X, &WORKED_Y)?;

    for t in 0..cfg.trials {
        let s = trial_seed(cfg.seed, t);
        let x = gaussian_vector(s, u64::MAX, cfg.dim);
        let y = gaussian_vector(s, u64::MAX - 1, cfg.dim);
        let exact = algebraic_dot(&x, &y)?;
        let c = ProjectionMatrix::generate(s, cfg.dim, kmax)?;
        let (cx, cy) = (build_context(&x, &c)?, build_context(&y, &c)?);
        let c4 = if cfg.dim == WORKED_X.len() { c } else { ProjectionMatrix::generate(s, WORKED_X.len(), kmax)? };
        let (wx, wy) = (build_context(&WORKED_X, &c4)?, build_context(&WORKED_Y, &c4)?);
        for (i, &k) in cfg.hash_lengths.iter().enumerate() {
            for (j, &cos) in cosines.iter().enumerate() {
                random[i * 2 + j].push(approx(&cx, &cy, k, cos)?, exact);
                worked[i * 2 + j].push(approx(&wx, &wy, k, cos)?, worked_exact);
            }
        }
    }

    let mut rows = Vec::with_capacity(2 * slots);
    for (case, samples) in [(Case::Random, &random), (Case::Worked, &worked)] {
        for (i, &k) in cfg.hash_lengths.iter().enumerate() {
            for (j, &cosine) in cosines.iter().enumerate() {
                let s = &samples[i * 2 + j];
                let is_worked = case == Case::Worked;
                rows.push(DotBenchRow {
                    case,
                    k,
                    cosine,
                    trials: cfg.trials,
                    algebraic: is_worked.then_some(worked_exact),
                    median_approx: is_worked.then(|| median(&s.approx)),
                    median_abs_err: median(&s.abs),
                    p95_abs_err: percentile(&s.abs, 0.95),
                    median_rel_err: median(&s.rel),
                    p95_rel_err: percentile(&s.rel, 0.95),
                });
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 10] = [
    "case",
    "k",
    "cosine",
    "trials",
    "algebraic",
    "median_approx",
    "median_abs_err",
    "p95_abs_err",
    "median_rel_err",
    "p95_rel_err",
];

pub fn write_csv<W: Write>(rows: &[DotBenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.case.name().to_string(),
            r.k.to_string(),
            r.cosine.name().to_string(),
            r.trials.to_string(),
            opt(r.algebraic),
            opt(r.median_approx),
            format!("{:.6}", r.median_abs_err),
            format!("{:.6}", r.p95_abs_err),
            format!("{:.6}", r.median_rel_err),
            format!("{:.6}", r.p95_rel_err),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}
