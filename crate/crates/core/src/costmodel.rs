//! Folding cost traces into cycles, utilization and energy.
//!
//! The fold first reduces a trace to integer event counts per layer and only
//! then prices them, so reports are independent of event order and folding is
//! linear in the counts. Utilization is tracked per *tile*: a run of searches
//! following a batch of row writes.

use std::collections::BTreeMap;
use std::io::Write;

use crate::camarray::{CamEvent, ALLOWED_ROWS, ALLOWED_WORD_BITS, DEFAULT_SENSE_WINDOW_CYCLES};
use crate::netexec::{Dataflow, LayerKind};
use crate::trace::{CostEvent, CostTrace, PostOp};
use crate::{Error, Result};

/// Prices for every event type.
///
/// The shipped defaults are placeholders with the right shape (search energy
/// grows with both row count and word length); they are not measured device
/// numbers. Energies are in picojoules.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    /// Energy of one parallel search, keyed by `(rows, word_bits)`.
    pub search_energy_pj: BTreeMap<(usize, usize), f64>,
    /// Energy of writing one row, keyed by `(rows, word_bits)`.
    pub write_energy_pj: BTreeMap<(usize, usize), f64>,
    /// Cycles per search (the CAM sense window).
    pub search_cycles: u32,
    pub write_cycles_per_row: u32,
    pub reconfigure_cycles: u32,
    /// Cycles per online-generated activation context.
    pub transform_cycles: u32,
    /// Analog crossbar projection energy per multiply-accumulate (n × k per
    /// context); femtojoule scale.
    pub transform_energy_pj_per_mac: f64,
    /// Digital post-processing cycles per element (0: fully pipelined).
    pub post_cycles_per_element: u32,
    pub dot_finalize_energy_pj: f64,
    /// ReLU, pooling and batchnorm energy per element.
    pub elementwise_energy_pj: f64,
    pub baseline_energy_pj_per_mac: f64,
    pub systolic: SystolicArray,
}

impl Default for CostTable {
    fn default() -> Self {
        let mut search = BTreeMap::new();
        let mut write = BTreeMap::new();
        for &rows in &ALLOWED_ROWS {
            for &bits in &ALLOWED_WORD_BITS {
                let cells = (rows * bits) as f64;
                search.insert((rows, bits), 1.0 + 5e-4 * cells);
                write.insert((rows, bits), 0.5 + 0.01 * bits as f64 + 0.002 * rows as f64);
            }
        }
        Self {
            search_energy_pj: search,
            write_energy_pj: write,
            search_cycles: DEFAULT_SENSE_WINDOW_CYCLES,
            write_cycles_per_row: 1,
            reconfigure_cycles: 1,
            transform_cycles: 1,
            transform_energy_pj_per_mac: 0.002,
            post_cycles_per_element: 0,
            dot_finalize_energy_pj: 0.5,
            elementwise_energy_pj: 0.05,
            baseline_energy_pj_per_mac: 0.2,
            systolic: SystolicArray::default(),
        }
    }
}

impl CostTable {
    /// Checks that energies are finite and non-negative and that search
    /// energy strictly increases along both table axes.
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("transform_energy_pj_per_mac", self.transform_energy_pj_per_mac),
            ("dot_finalize_energy_pj", self.dot_finalize_energy_pj),
            ("elementwise_energy_pj", self.elementwise_energy_pj),
            ("baseline_energy_pj_per_mac", self.baseline_energy_pj_per_mac),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, map) in [("search_energy_pj", &self.search_energy_pj), ("write_energy_pj", &self.write_energy_pj)] {
            for (&(rows, bits), &v) in map {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!("{name}[{rows}x{bits}] must be finite and >= 0")));
                }
            }
        }
        if self.search_cycles == 0 {
            return Err(Error::Config("search_cycles must be at least 1".into()));
        }
        for (&(rows, bits), &v) in &self.search_energy_pj {
            for (&(r2, b2), &v2) in &self.search_energy_pj {
                let grows = (r2 == rows && b2 > bits) || (b2 == bits && r2 > rows);
                if grows && v2 <= v {
                    return Err(Error::Config(format!(
                        "search energy must increase with rows and word length: \
                         {rows}x{bits} = {v} but {r2}x{b2} = {v2}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn search_energy(&self, rows: usize, word_bits: usize) -> Result<f64> {
        self.search_energy_pj.get(&(rows, word_bits)).copied().ok_or(Error::MissingCostEntry { rows, word_bits })
    }

    pub fn write_energy(&self, rows: usize, word_bits: usize) -> Result<f64> {
        self.write_energy_pj.get(&(rows, word_bits)).copied().ok_or(Error::MissingCostEntry { rows, word_bits })
    }
}

/// Analytic weight-stationary systolic array used as the comparison baseline.
///
/// `cycles = ceil(K / cols) * ceil(P / rows) * (n + rows + cols - 2)` for `K`
/// kernels, `P` output positions and kernels of length `n`: each fold of the
/// array streams the `n`-long reduction and pays the fill and drain latency.
/// Memory stalls are not modeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystolicArray {
    pub rows: usize,
    pub cols: usize,
}

impl Default for SystolicArray {
    fn default() -> Self {
        Self { rows: 14, cols: 12 }
    }
}

impl SystolicArray {
    pub const FORMULA: &'static str = "ceil(K/cols)*ceil(P/rows)*(n+rows+cols-2)";

    pub fn cycles(&self, patches: usize, kernels: usize, inputs: usize) -> Result<u64> {
        if patches == 0 || kernels == 0 || inputs == 0 {
            return Err(Error::Geometry(format!(
                "systolic baseline needs a dot-product layer (P={patches}, K={kernels}, n={inputs})"
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("systolic array dimensions must be positive".into()));
        }
        let folds = kernels.div_ceil(self.cols) as u64 * patches.div_ceil(self.rows) as u64;
        Ok(folds * (inputs + self.rows + self.cols - 2) as u64)
    }
}

/// Costs of one layer, accumulated over every execution in the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub layer: usize,
    pub kind: Option<LayerKind>,
    pub dataflow: Option<Dataflow>,
    pub rows: Option<usize>,
    pub word_bits: Option<usize>,
    pub executions: u64,
    pub searches: u64,
    pub writes: u64,
    pub transforms: u64,
    pub tiles: u64,
    pub cycles: u64,
    /// Mean fraction of valid rows per tile, counting ragged tiles exactly.
    pub utilization: Option<f64>,
    /// Utilization of a full tile, ignoring the ragged remainder.
    pub utilization_peak: Option<f64>,
    pub energy_pj: f64,
    pub macs: u64,
    pub baseline_cycles: Option<u64>,
    pub baseline_energy_pj: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostTotals {
    pub searches: u64,
    pub writes: u64,
    pub transforms: u64,
    pub tiles: u64,
    pub cycles: u64,
    pub utilization: Option<f64>,
    pub utilization_peak: Option<f64>,
    pub energy_pj: f64,
    pub baseline_cycles: Option<u64>,
    pub baseline_energy_pj: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total: CostTotals,
}

#[derive(Default)]
struct Acc {
    kind: Option<LayerKind>,
    dataflow: Option<Dataflow>,
    rows: Option<usize>,
    word_bits: Option<usize>,
    executions: u64,
    searches: BTreeMap<(usize, usize), u64>,
    search_cycles: u64,
    writes: BTreeMap<(usize, usize), u64>,
    reconfigs: u64,
    transforms: u64,
    transform_macs: u64,
    post: BTreeMap<PostOp, u64>,
    tiles: u64,
    tile_valid: u64,
    tile_capacity: u64,
    best_tile: Option<f64>,
    in_tile: bool,
    macs: u64,
    baseline_cycles: Option<u64>,
}

impl Acc {
    fn observe(&mut self, event: &CostEvent, table: &CostTable) -> Result<()> {
        match *event {
            CostEvent::Layer { kind, dot } => {
                self.kind = Some(kind);
                self.executions += 1;
                self.in_tile = false;
                if let Some(d) = dot {
                    self.dataflow = Some(d.dataflow);
                    self.macs += (d.patches * d.kernels * d.inputs) as u64;
                    let c = table.systolic.cycles(d.patches, d.kernels, d.inputs)?;
                    *self.baseline_cycles.get_or_insert(0) += c;
                }
            }
            CostEvent::Cam { rows, event } => {
                self.rows = Some(rows);
                match event {
                    CamEvent::Reconfigure { word_bits } => {
                        self.reconfigs += 1;
                        self.word_bits = Some(word_bits);
                    }
                    CamEvent::WriteRow { word_bits, .. } => {
                        *self.writes.entry((rows, word_bits)).or_insert(0) += 1;
                        self.in_tile = false;
                    }
                    CamEvent::Search { word_bits, valid_rows, cycles } => {
                        *self.searches.entry((rows, word_bits)).or_insert(0) += 1;
                        self.search_cycles += u64::from(cycles);
                        self.word_bits = Some(word_bits);
                        if !self.in_tile {
                            self.in_tile = true;
                            self.tiles += 1;
                            self.tile_valid += valid_rows as u64;
                            self.tile_capacity += rows as u64;
                            let u = valid_rows as f64 / rows as f64;
                            self.best_tile = Some(self.best_tile.map_or(u, |b| b.max(u)));
                        }
                    }
                }
            }
            CostEvent::Transform { inputs, hash_bits } => {
                self.transforms += 1;
                self.transform_macs += (inputs * hash_bits) as u64;
            }
            CostEvent::Post { op, elements } => {
                *self.post.entry(op).or_insert(0) += elements;
            }
        }
        Ok(())
    }

    fn finish(self, layer: usize, table: &CostTable) -> Result<LayerCost> {
        let searches: u64 = self.searches.values().sum();
        let writes: u64 = self.writes.values().sum();
        let post_elements: u64 = self.post.values().sum();

        let mut energy = 0.0;
        for (&(rows, bits), &n) in &self.searches {
            energy += n as f64 * table.search_energy(rows, bits)?;
        }
        for (&(rows, bits), &n) in &self.writes {
            energy += n as f64 * table.write_energy(rows, bits)?;
        }
        energy += self.transform_macs as f64 * table.transform_energy_pj_per_mac;
        for (&op, &n) in &self.post {
            let unit = match op {
                PostOp::DotFinalize => table.dot_finalize_energy_pj,
                _ => table.elementwise_energy_pj,
            };
            energy += n as f64 * unit;
        }

        let cycles = self.search_cycles
            + writes * u64::from(table.write_cycles_per_row)
            + self.reconfigs * u64::from(table.reconfigure_cycles)
            + self.transforms * u64::from(table.transform_cycles)
            + post_elements * u64::from(table.post_cycles_per_element);

        let utilization = (self.tile_capacity > 0).then(|| self.tile_valid as f64 / self.tile_capacity as f64);
        Ok(LayerCost {
            layer,
            kind: self.kind,
            dataflow: self.dataflow,
            rows: self.rows,
            word_bits: self.word_bits,
            executions: self.executions,
            searches,
            writes,
            transforms: self.transforms,
            tiles: self.tiles,
            cycles,
            utilization,
            utilization_peak: self.best_tile,
            energy_pj: energy,
            macs: self.macs,
            baseline_cycles: self.baseline_cycles,
            baseline_energy_pj: self.baseline_cycles.map(|_| self.macs as f64 * table.baseline_energy_pj_per_mac),
        })
    }
}

fn sum_opt<T: std::ops::Add<Output = T> + Copy>(items: impl Iterator<Item = Option<T>>) -> Option<T> {
    items.flatten().reduce(|a, b| a + b)
}

fn totals(layers: &[LayerCost]) -> CostTotals {
    let tiles: u64 = layers.iter().map(|l| l.tiles).sum();
    let (valid, capacity) = layers.iter().fold((0.0, 0.0), |(v, c), l| match (l.utilization, l.rows) {
        (Some(u), Some(rows)) => {
            let cap = (l.tiles * rows as u64) as f64;
            (v + u * cap, c + cap)
        }
        _ => (v, c),
    });
    let peak = (tiles > 0).then(|| {
        layers.iter().filter_map(|l| l.utilization_peak.map(|u| u * l.tiles as f64)).sum::<f64>() / tiles as f64
    });
    CostTotals {
        searches: layers.iter().map(|l| l.searches).sum(),
        writes: layers.iter().map(|l| l.writes).sum(),
        transforms: layers.iter().map(|l| l.transforms).sum(),
        tiles,
        cycles: layers.iter().map(|l| l.cycles).sum(),
        utilization: (capacity > 0.0).then(|| valid / capacity),
        utilization_peak: peak,
        energy_pj: layers.iter().map(|l| l.energy_pj).sum(),
        baseline_cycles: sum_opt(layers.iter().map(|l| l.baseline_cycles)),
        baseline_energy_pj: sum_opt(layers.iter().map(|l| l.baseline_energy_pj)),
    }
}

/// Price every event of `trace` with `table`.
pub fn fold_trace(trace: &CostTrace, table: &CostTable) -> Result<CostReport> {
    let mut accs: BTreeMap<usize, Acc> = BTreeMap::new();
    for entry in trace.iter() {
        accs.entry(entry.layer).or_default().observe(&entry.event, table)?;
    }
    let layers = accs.into_iter().map(|(layer, acc)| acc.finish(layer, table)).collect::<Result<Vec<_>>>()?;
    let total = totals(&layers);
    Ok(CostReport { layers, total })
}

/// The systolic-array baseline for the same layers, as a report: cycles and
/// energy are the baseline's own, CAM-specific columns are empty.
pub fn baseline_report(cam: &CostReport) -> CostReport {
    let layers: Vec<LayerCost> = cam
        .layers
        .iter()
        .map(|l| LayerCost {
            layer: l.layer,
            kind: l.kind,
            dataflow: None,
            rows: None,
            word_bits: None,
            executions: l.executions,
            searches: 0,
            writes: 0,
            transforms: 0,
            tiles: 0,
            cycles: l.baseline_cycles.unwrap_or(0),
            utilization: None,
            utilization_peak: None,
            energy_pj: l.baseline_energy_pj.unwrap_or(0.0),
            macs: l.macs,
            baseline_cycles: l.baseline_cycles,
            baseline_energy_pj: l.baseline_energy_pj,
        })
        .collect();
    let total = totals(&layers);
    CostReport { layers, total }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRatio {
    pub layer: usize,
    /// `baseline cycles / cam cycles`; `None` when either side is zero.
    pub cycle_ratio: Option<f64>,
    pub energy_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub layers: Vec<LayerRatio>,
    pub cycle_ratio: Option<f64>,
    pub energy_ratio: Option<f64>,
}

fn ratio(baseline: f64, cam: f64) -> Option<f64> {
    (baseline > 0.0 && cam > 0.0).then(|| baseline / cam)
}

/// Per-layer and total speedup/efficiency of `cam` over `baseline`.
pub fn compare(cam: &CostReport, baseline: &CostReport) -> Result<Comparison> {
    let cam_layers: Vec<usize> = cam.layers.iter().map(|l| l.layer).collect();
    let base_layers: Vec<usize> = baseline.layers.iter().map(|l| l.layer).collect();
    if cam_layers != base_layers {
        return Err(Error::ReportMismatch(format!("layers {cam_layers:?} vs {base_layers:?}")));
    }
    let layers = cam
        .layers
        .iter()
        .zip(&baseline.layers)
        .map(|(c, b)| LayerRatio {
            layer: c.layer,
            cycle_ratio: ratio(b.cycles as f64, c.cycles as f64),
            energy_ratio: ratio(b.energy_pj, c.energy_pj),
        })
        .collect();
    Ok(Comparison {
        layers,
        cycle_ratio: ratio(baseline.total.cycles as f64, cam.total.cycles as f64),
        energy_ratio: ratio(baseline.total.energy_pj, cam.total.energy_pj),
    })
}

pub const CSV_HEADER: [&str; 12] = [
    "layer",
    "dataflow",
    "rows",
    "word_bits",
    "searches",
    "writes",
    "cycles",
    "utilization",
    "energy_pj",
    "baseline_cycles",
    "utilization_peak",
    "kind",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl CostReport {
    /// Write the report as CSV: one row per layer plus a `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("CSV write failed: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for l in &self.layers {
            w.write_record([
                l.layer.to_string(),
                opt(l.dataflow.map(|d| d.short_name())),
                opt(l.rows),
                opt(l.word_bits),
                l.searches.to_string(),
                l.writes.to_string(),
                l.cycles.to_string(),
                opt(l.utilization),
                l.energy_pj.to_string(),
                opt(l.baseline_cycles),
                opt(l.utilization_peak),
                opt(l.kind.map(|k| k.name())),
            ])
            .map_err(io)?;
        }
        let t = &self.total;
        w.write_record([
            "total".to_string(),
            String::new(),
            String::new(),
            String::new(),
            t.searches.to_string(),
            t.writes.to_string(),
            t.cycles.to_string(),
            opt(t.utilization),
            t.energy_pj.to_string(),
            opt(t.baseline_cycles),
            opt(t.utilization_peak),
            String::new(),
        ])
        .map_err(io)?;
        w.flush().map_err(|e| Error::Config(format!("CSV write failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn layer(&self, index: usize) -> Option<&LayerCost> {
        self.layers.iter().find(|l| l.layer == index)
    }
}
