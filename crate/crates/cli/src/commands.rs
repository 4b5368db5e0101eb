use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context as _, Result};
use camdot_core::costmodel::{compare, fold_trace, CostReport};
use camdot_core::dotbench::{self, DotBenchConfig};
use camdot_core::modelio::{load_dataset, load_model, save_tune_result};
use camdot_core::netexec::{dry_run_trace, Executor};
use camdot_core::tuner::{tune_hash_lengths, TuneConfig, TuneResult};
use camdot_core::{Dataset, DotMode, ExecutionPlan, NetworkModel};

use crate::args::{conv_model, invalid, parse_cosine};
use crate::{plot, CostArgs, DotbenchArgs, RunArgs, TuneArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn check_data(model: &NetworkModel, data: &Dataset) -> Result<()> {
    if data.dims != model.input_dims() {
        return Err(invalid(format!("dataset samples are {}, model expects {}", data.dims, model.input_dims())));
    }
    let outputs = model.output_dims().len();
    if usize::from(data.num_classes) > outputs {
        return Err(invalid(format!("dataset has {} classes, model has {outputs} outputs", data.num_classes)));
    }
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn lengths(ks: &[usize]) -> String {
    ks.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn print_cost(report: &CostReport) -> Result<()> {
    let t = &report.total;
    let cmp = compare(report, &camdot_core::costmodel::baseline_report(report))?;
    println!("searches     {}", t.searches);
    println!("row writes   {}", t.writes);
    match (t.baseline_cycles, cmp.cycle_ratio) {
        (Some(b), Some(r)) => println!("cycles       {} (systolic baseline {b}, {r:.2}x)", t.cycles),
        _ => println!("cycles       {}", t.cycles),
    }
    println!("utilization  {} (peak-tile accounting {})", pct(t.utilization), pct(t.utilization_peak));
    match (t.baseline_energy_pj, cmp.energy_ratio) {
        (Some(b), Some(r)) => println!("energy       {:.1} pJ (baseline {b:.1} pJ, {r:.2}x)", t.energy_pj),
        _ => println!("energy       {:.1} pJ", t.energy_pj),
    }
    Ok(())
}

fn write_report(report: &CostReport, csv: Option<&Path>, plot_dir: Option<&Path>) -> Result<()> {
    if let Some(path) = csv {
        let mut w = create(path)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(dir) = plot_dir {
        plot::cycles(report, dir)?;
    }
    Ok(())
}

pub fn run(a: RunArgs, plot_dir: Option<&Path>) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, a.limit)?;
    check_data(&model, &data)?;
    let mode = if a.exact { DotMode::Exact } else { DotMode::Approximate(parse_cosine(&a.cosine)?) };
    let plan = a.hw.plan(&model, &a.hash, a.seed, mode)?;
    let table = a.hw.cost_table()?;

    let out = Executor::new(&model, plan.clone())?.run_batch(&data.tensors(), true)?;
    let report = fold_trace(&out.trace, &table)?;
    let correct = out.correct(&data.labels);
    let top1 = if data.is_empty() { 0.0 } else { 100.0 * correct as f64 / data.len() as f64 };

    println!("samples      {}", data.len());
    println!("top1         {top1:.2}% ({correct}/{})", data.len());
    println!("hash bits    {} (total {})", lengths(&plan.hash_lengths), plan.total_hash_bits());
    print_cost(&report)?;

    if let Some(path) = &a.summary {
        let mut w = create(path)?;
        write_summary(&mut w, &a, &plan, &data, correct, &report)?;
        w.flush()?;
    }
    write_report(&report, a.csv.as_deref(), plot_dir)
}

fn write_summary(
    w: &mut impl Write,
    a: &RunArgs,
    plan: &ExecutionPlan,
    data: &Dataset,
    correct: usize,
    report: &CostReport,
) -> Result<()> {
    let t = &report.total;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v}"));
    let mode = match plan.mode {
        DotMode::Exact => "exact".to_string(),
        DotMode::Approximate(c) => c.name().to_string(),
    };
    writeln!(w, "model = {:?}", a.model.display().to_string())?;
    writeln!(w, "data = {:?}", a.data.display().to_string())?;
    writeln!(w, "dataflow = {:?}", plan.dataflow.short_name())?;
    writeln!(w, "rows = {}", plan.cam.rows())?;
    writeln!(w, "hash_lengths = [{}]", plan.hash_lengths.iter().map(usize::to_string).collect::<Vec<_>>().join(", "))?;
    writeln!(w, "seed = {}", plan.seed)?;
    writeln!(w, "mode = {mode:?}")?;
    writeln!(w, "samples = {}", data.len())?;
    writeln!(w, "correct = {correct}")?;
    let top1 = if data.is_empty() { f64::NAN } else { correct as f64 / data.len() as f64 };
    writeln!(w, "top1 = {}", opt(Some(top1)))?;
    writeln!(w, "searches = {}", t.searches)?;
    writeln!(w, "writes = {}", t.writes)?;
    writeln!(w, "cycles = {}", t.cycles)?;
    writeln!(w, "baseline_cycles = {}", t.baseline_cycles.unwrap_or(0))?;
    writeln!(w, "utilization = {}", opt(t.utilization))?;
    writeln!(w, "utilization_peak = {}", opt(t.utilization_peak))?;
    writeln!(w, "energy_pj = {}", t.energy_pj)?;
    writeln!(w, "baseline_energy_pj = {}", opt(t.baseline_energy_pj))?;
    Ok(())
}

pub fn dotbench(a: DotbenchArgs, plot_dir: Option<&Path>) -> Result<()> {
    let cfg = DotBenchConfig { hash_lengths: a.k, trials: a.trials, dim: a.dim, seed: a.seed };
    let rows = dotbench::dotbench(&cfg)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            dotbench::write_csv(&rows, &mut w)?;
            w.flush()?;
        }
        None => dotbench::write_csv(&rows, std::io::stdout().lock())?,
    }
    if let Some(dir) = plot_dir {
        plot::dotbench(&rows, dir)?;
    }
    Ok(())
}

fn write_sensitivity(path: &Path, model: &NetworkModel, r: &TuneResult) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "layer,kind,k,accuracy,chosen")?;
    let s = &r.sensitivity;
    for (d, &layer) in s.layers.iter().enumerate() {
        let kind = model.layers()[layer].kind().name();
        for (c, &k) in s.candidates.iter().enumerate() {
            writeln!(w, "{layer},{kind},{k},{:.4},{}", s.accuracy[d][c], k == r.hash_lengths[d])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn tune(a: TuneArgs, plot_dir: Option<&Path>) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, None)?;
    check_data(&model, &data)?;
    let cfg = TuneConfig { tolerance: a.tolerance, calib_size: a.calib_size, candidates: a.candidates, seed: a.seed };
    cfg.validate()?;
    let base = ExecutionPlan {
        dataflow: a.hw.dataflow()?,
        cam: a.hw.cam()?,
        hash_lengths: Vec::new(),
        seed: a.seed,
        mode: DotMode::default(),
    };
    let (calib, held_out) = data.split_at(a.calib_size);
    let r = tune_hash_lengths(&model, &calib, &base, &cfg)?;
    save_tune_result(&a.out, &r)?;

    println!("calibration  {} samples", r.calib_size);
    println!("baseline     {:.2}% (every layer at {})", r.baseline_accuracy, cfg.candidates.last().unwrap());
    println!("tuned        {:.2}% (tolerance {} pts)", r.achieved_accuracy, r.tolerance);
    let max_bits = cfg.candidates.last().unwrap() * r.hash_lengths.len();
    println!("hash bits    {} (total {} of {max_bits})", lengths(&r.hash_lengths), r.total_bits());

    if a.evaluate {
        if held_out.is_empty() {
            println!("held-out     no samples after the calibration split");
        } else {
            let xs = held_out.tensors();
            let eval = |ks: Vec<usize>| -> Result<f64> {
                let plan = ExecutionPlan { hash_lengths: ks, ..base.clone() };
                Ok(100.0 * Executor::new(&model, plan)?.run_batch(&xs, false)?.accuracy(&held_out.labels))
            };
            let uniform = eval(vec![*cfg.candidates.last().unwrap(); r.hash_lengths.len()])?;
            let tuned = eval(r.hash_lengths.clone())?;
            println!("held-out     {} samples: tuned {tuned:.2}%, uniform {uniform:.2}%", held_out.len());
        }
    }
    if let Some(path) = &a.csv {
        write_sensitivity(path, &model, &r)?;
    }
    if let Some(dir) = plot_dir {
        plot::sensitivity(&model, &r, dir)?;
    }
    Ok(())
}

pub fn cost(a: CostArgs, plot_dir: Option<&Path>) -> Result<()> {
    let model = match (&a.model, &a.conv) {
        (Some(path), _) => load_model(path)?,
        (None, Some(spec)) => conv_model(spec)?,
        (None, None) => return Err(invalid("either --model or --conv is required")),
    };
    let plan = a.hw.plan(&model, &a.hash, a.seed, DotMode::default())?;
    let table = a.hw.cost_table()?;
    let report = fold_trace(&dry_run_trace(&model, &plan, a.images)?, &table)?;

    println!(
        "{:<6} {:<10} {:<4} {:>10} {:>8} {:>12} {:>8} {:>8} {:>12}",
        "layer", "kind", "df", "searches", "writes", "cycles", "util", "peak", "baseline"
    );
    for l in &report.layers {
        println!(
            "{:<6} {:<10} {:<4} {:>10} {:>8} {:>12} {:>8} {:>8} {:>12}",
            l.layer,
            l.kind.map_or("-", |k| k.name()),
            l.dataflow.map_or("-", |d| d.short_name()),
            l.searches,
            l.writes,
            l.cycles,
            pct(l.utilization),
            pct(l.utilization_peak),
            l.baseline_cycles.map_or_else(|| "-".into(), |c| c.to_string()),
        );
    }
    print_cost(&report)?;
    write_report(&report, a.csv.as_deref(), plot_dir)
}
