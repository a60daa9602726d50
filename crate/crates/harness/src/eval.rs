//! Evaluation campaigns over a ladder of distributions, report emission and
//! embedding export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use milpbranch_core::bnb::{
    self, BnbConfig, BnbResult, BnbStatus, BranchingPolicy, NodeSelection, PseudocostBranching, RandomBranching,
    ReliabilityBranching, StrongBranching,
};
use milpbranch_core::features::BranchSample;
use milpbranch_core::MilpInstance;
use milpbranch_learn::gnn::{PolicyNet, SampleInput};
use milpbranch_learn::nn::{Checkpoint, NnError};
use milpbranch_learn::policy::GnnBranching;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{pd_gap, pd_integral, Clock, GapCap, MetricError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing checkpoint for {method}: {path}")]
    MissingCheckpoint { method: String, path: PathBuf },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("solving {instance} with {method}: {source}")]
    Solve { method: String, instance: String, source: bnb::SolveError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub enum Policy {
    Strong,
    Reliability,
    Pseudocost,
    Random,
    Learned(Arc<PolicyNet>),
}

#[derive(Debug, Clone)]
pub struct Method {
    pub name: String,
    pub policy: Policy,
}

impl Method {
    pub fn new(name: impl Into<String>, policy: Policy) -> Self {
        Method { name: name.into(), policy }
    }

    pub fn learned(name: impl Into<String>, net: PolicyNet) -> Self {
        Method::new(name, Policy::Learned(Arc::new(net)))
    }

    /// Loads a learned method from a policy checkpoint file.
    pub fn load(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let name = name.into();
        let path = path.as_ref();
        if !path.is_file() {
            return Err(EvalError::MissingCheckpoint { method: name, path: path.to_path_buf() });
        }
        let net = PolicyNet::from_checkpoint(&Checkpoint::load(path)?)?;
        Ok(Method::learned(name, net))
    }

    /// Built-in heuristics by name: `sb`, `reliability`, `pseudocost`,
    /// `random`.
    pub fn builtin(name: &str) -> Option<Self> {
        let p = match name {
            "sb" => Policy::Strong,
            "reliability" => Policy::Reliability,
            "pseudocost" => Policy::Pseudocost,
            "random" => Policy::Random,
            _ => return None,
        };
        Some(Method::new(name, p))
    }

    fn brancher(&self, seed: u64) -> Box<dyn BranchingPolicy + '_> {
        match &self.policy {
            Policy::Strong => Box::new(StrongBranching::new()),
            Policy::Reliability => Box::new(ReliabilityBranching::default()),
            Policy::Pseudocost => Box::new(PseudocostBranching),
            Policy::Random => Box::new(RandomBranching::new(seed)),
            Policy::Learned(net) => Box::new(GnnBranching::greedy(net)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Distribution {
    pub name: String,
    /// `(name, instance)` pairs.
    pub instances: Vec<(String, MilpInstance)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    /// Shifted geometric mean with shift 1.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub node_limit: usize,
    pub time_limit: Option<f64>,
    pub clock: Clock,
    pub gap_cap: f64,
    pub node_selection: NodeSelection,
    pub aggregation: Aggregation,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            node_limit: 20_000,
            time_limit: None,
            clock: Clock::Nodes,
            gap_cap: 1.0,
            node_selection: NodeSelection::BestBound,
            aggregation: Aggregation::Arithmetic,
        }
    }
}

impl EvalSettings {
    pub fn bnb(&self) -> BnbConfig {
        BnbConfig { node_limit: Some(self.node_limit), time_limit: self.time_limit, node_selection: self.node_selection, ..BnbConfig::default() }
    }
}

/// One solve. `time` is on the report clock: seconds for the wall clock,
/// nodes for the node clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub method: String,
    pub distribution: String,
    pub instance: String,
    pub seed: u64,
    pub status: BnbStatus,
    pub nodes: usize,
    pub time: f64,
    pub pd_integral: f64,
    pub pd_gap: f64,
    pub objective: Option<f64>,
    pub dual_bound: f64,
    pub sb_lp_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub distribution: String,
    pub count: usize,
    pub time: f64,
    pub nodes: f64,
    pub pd_integral: f64,
    pub pd_gap: f64,
    pub solved: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub methods: Vec<String>,
    pub distributions: Vec<String>,
    pub rows: Vec<InstanceRow>,
    /// Method-major, one per (method, distribution).
    pub aggregates: Vec<AggregateRow>,
}

impl EvalReport {
    pub fn aggregate(&self, method: &str, distribution: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method && a.distribution == distribution)
    }
}

/// Solves one instance and derives its metrics.
pub fn solve_row(
    method: &Method,
    distribution: &str,
    name: &str,
    inst: &MilpInstance,
    seed: u64,
    settings: &EvalSettings,
) -> Result<(InstanceRow, BnbResult), EvalError> {
    let mut pol = method.brancher(seed);
    let res = bnb::solve(inst, pol.as_mut(), &settings.bnb()).map_err(|source| EvalError::Solve {
        method: method.name.clone(),
        instance: name.to_string(),
        source,
    })?;
    let cap = GapCap::for_instance(inst, settings.gap_cap);
    let last = res.trace.events.last().map_or(0.0, |e| settings.clock.stamp(e));
    let time = match settings.clock {
        Clock::Wall => res.wall_time,
        Clock::Nodes => res.nodes as f64,
    };
    let integral = pd_integral(&res.trace, last.max(time), settings.clock, &cap)?;
    let row = InstanceRow {
        method: method.name.clone(),
        distribution: distribution.to_string(),
        instance: name.to_string(),
        seed,
        status: res.status,
        nodes: res.nodes,
        time,
        pd_integral: integral,
        pd_gap: pd_gap(&res),
        objective: res.objective,
        dual_bound: res.dual_bound,
        sb_lp_solves: res.stats.sb_lp_solves,
    };
    Ok((row, res))
}

fn aggregate_values(v: &[f64], how: Aggregation) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    match how {
        Aggregation::Arithmetic => v.iter().sum::<f64>() / n,
        Aggregation::Geometric => (v.iter().map(|x| (x.max(0.0) + 1.0).ln()).sum::<f64>() / n).exp() - 1.0,
    }
}

/// Solves every instance under every seed with every method in parallel;
/// rows are ordered by (method, distribution, instance, seed).
pub fn evaluate(methods: &[Method], ladder: &[Distribution], seeds: &[u64], settings: &EvalSettings) -> Result<EvalReport, EvalError> {
    let mut jobs = Vec::new();
    for (mi, _) in methods.iter().enumerate() {
        for (di, d) in ladder.iter().enumerate() {
            for (ii, _) in d.instances.iter().enumerate() {
                for &seed in seeds {
                    jobs.push((mi, di, ii, seed));
                }
            }
        }
    }
    let mut results: Vec<((usize, usize, usize, u64), InstanceRow)> = jobs
        .par_iter()
        .map(|&(mi, di, ii, seed)| {
            let d = &ladder[di];
            let (name, inst) = &d.instances[ii];
            solve_row(&methods[mi], &d.name, name, inst, seed, settings).map(|(row, _)| ((mi, di, ii, seed), row))
        })
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|(k, _)| *k);
    let rows: Vec<InstanceRow> = results.into_iter().map(|(_, r)| r).collect();

    let mut aggregates = Vec::with_capacity(methods.len() * ladder.len());
    for m in methods {
        for d in ladder {
            let sel: Vec<&InstanceRow> = rows.iter().filter(|r| r.method == m.name && r.distribution == d.name).collect();
            let col = |f: fn(&InstanceRow) -> f64| aggregate_values(&sel.iter().map(|r| f(r)).collect::<Vec<_>>(), settings.aggregation);
            let solved = sel.iter().filter(|r| matches!(r.status, BnbStatus::Optimal | BnbStatus::Infeasible)).count();
            aggregates.push(AggregateRow {
                method: m.name.clone(),
                distribution: d.name.clone(),
                count: sel.len(),
                time: col(|r| r.time),
                nodes: col(|r| r.nodes as f64),
                pd_integral: col(|r| r.pd_integral),
                pd_gap: col(|r| r.pd_gap),
                solved: solved as f64 / sel.len().max(1) as f64,
            });
        }
    }
    Ok(EvalReport {
        methods: methods.iter().map(|m| m.name.clone()).collect(),
        distributions: ladder.iter().map(|d| d.name.clone()).collect(),
        rows,
        aggregates,
    })
}

/// Per-distribution change of `other` relative to `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub distribution: String,
    pub base: String,
    pub other: String,
    pub nodes_delta: f64,
    pub nodes_ratio: f64,
    pub pd_integral_delta: f64,
    pub pd_integral_ratio: f64,
}

pub fn deltas(report: &EvalReport, base: &str, other: &str) -> Vec<DeltaRow> {
    let ratio = |o: f64, b: f64| if b > 0.0 { o / b } else { f64::NAN };
    report
        .distributions
        .iter()
        .filter_map(|d| {
            let (b, o) = (report.aggregate(base, d)?, report.aggregate(other, d)?);
            Some(DeltaRow {
                distribution: d.clone(),
                base: base.to_string(),
                other: other.to_string(),
                nodes_delta: o.nodes - b.nodes,
                nodes_ratio: ratio(o.nodes, b.nodes),
                pd_integral_delta: o.pd_integral - b.pd_integral,
                pd_integral_ratio: ratio(o.pd_integral, b.pd_integral),
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Methods as rows and, per distribution, Time and PD integral columns;
/// followed by the same layout for node counts and PD gaps.
pub fn markdown_table(report: &EvalReport, clock: Clock) -> String {
    let time_label = match clock {
        Clock::Wall => "Time(s)",
        Clock::Nodes => "Time(nodes)",
    };
    let mut s = String::new();
    let table = |s: &mut String, a: &str, b: &str, fa: fn(&AggregateRow) -> f64, fb: fn(&AggregateRow) -> f64| {
        let _ = write!(s, "| Method |");
        for d in &report.distributions {
            let _ = write!(s, " {d} {a} | {d} {b} |");
        }
        let _ = write!(s, "\n|---|");
        for _ in &report.distributions {
            let _ = write!(s, "---|---|");
        }
        s.push('\n');
        for m in &report.methods {
            let _ = write!(s, "| {m} |");
            for d in &report.distributions {
                match report.aggregate(m, d) {
                    Some(r) => {
                        let _ = write!(s, " {:.2} | {:.2} |", fa(r), fb(r));
                    }
                    None => s.push_str(" - | - |"),
                }
            }
            s.push('\n');
        }
    };
    table(&mut s, time_label, "PD integral", |r| r.time, |r| r.pd_integral);
    s.push('\n');
    table(&mut s, "Nodes", "PD gap", |r| r.nodes, |r| r.pd_gap);
    s
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line plot of one aggregate metric against the distribution index, one
/// line per method.
pub fn line_plot_svg(report: &EvalReport, title: &str, metric: fn(&AggregateRow) -> f64) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 160.0, 40.0, 50.0);
    let nd = report.distributions.len().max(1);
    let vals: Vec<f64> = report.aggregates.iter().map(metric).filter(|v| v.is_finite()).collect();
    let ymax = vals.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let x = |i: usize| left + (w - left - right) * if nd > 1 { i as f64 / (nd - 1) as f64 } else { 0.5 };
    let y = |v: f64| h - bottom - (h - top - bottom) * (v / ymax);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - bottom, w - right, h - bottom);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y(v) + 4.0, fmt_tick(v));
    }
    for (i, d) in report.distributions.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{d}</text>"#, x(i), h - bottom + 18.0);
    }
    for (k, m) in report.methods.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = report
            .distributions
            .iter()
            .enumerate()
            .filter_map(|(i, d)| report.aggregate(m, d).map(|r| format!("{:.1},{:.1}", x(i), y(metric(r)))))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{m}</text>"#, w - right + 36.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Writes `instances.csv`, `summary.csv`, `table.md` and one SVG per
/// metric into `dir`. Returns the written paths.
pub fn emit_report(report: &EvalReport, clock: Clock, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let p = dir.join("instances.csv");
    write_csv(&p, &report.rows)?;
    out.push(p);
    let p = dir.join("summary.csv");
    write_csv(&p, &report.aggregates)?;
    out.push(p);
    let p = dir.join("table.md");
    std::fs::write(&p, markdown_table(report, clock))?;
    out.push(p);
    let plots: [(&str, &str, fn(&AggregateRow) -> f64); 4] = [
        ("time.svg", "Time", |r| r.time),
        ("nodes.svg", "Nodes", |r| r.nodes),
        ("pd_integral.svg", "PD integral", |r| r.pd_integral),
        ("pd_gap.svg", "PD gap", |r| r.pd_gap),
    ];
    for (file, title, f) in plots {
        let p = dir.join(file);
        std::fs::write(&p, line_plot_svg(report, title, f))?;
        out.push(p);
    }
    Ok(out)
}

pub fn emit_deltas(rows: &[DeltaRow], path: impl AsRef<Path>) -> Result<(), EvalError> {
    write_csv(path.as_ref(), rows)
}

/// Pre-head embedding of one candidate variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub label: String,
    pub sample: usize,
    pub var: usize,
    pub embedding: Vec<f64>,
}

/// One row per (sample, candidate), samples in input order and candidates
/// by index.
pub fn dump_embeddings(net: &PolicyNet, samples: &[(String, BranchSample)]) -> Result<Vec<EmbeddingRow>, NnError> {
    let mut rows = Vec::new();
    for (k, (label, s)) in samples.iter().enumerate() {
        let x = SampleInput::new(s);
        let (_, cache) = net.forward(&x)?;
        for j in s.candidates() {
            rows.push(EmbeddingRow { label: label.clone(), sample: k, var: j, embedding: cache.embeddings.row(j).to_vec() });
        }
    }
    Ok(rows)
}

pub fn write_embeddings(rows: &[EmbeddingRow], path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = rows.first().map_or(0, |r| r.embedding.len());
    let mut header = vec!["label".to_string(), "sample".into(), "var".into()];
    header.extend((0..dim).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.label.clone(), r.sample.to_string(), r.var.to_string()];
        rec.extend(r.embedding.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
