//! Expert branching datasets as JSON Lines.
//!
//! The first line is a header `{"kind":"header","format":"branch-samples/1"}`.
//! Each distinct edge list is written once as an `edges` line with a numeric
//! id before the first record that uses it; `record` lines refer to it by id.
//! Field order is fixed by the struct definitions, so identical datasets
//! serialize to identical bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bnb::ExpertRecord;
use crate::features::{BranchSample, SampleEdge, CONS_FEATURES, VAR_FEATURES};

pub const FORMAT: &str = "branch-samples/1";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("missing or unsupported header")]
    Header,
    #[error("line {line}: unknown edge list {id}")]
    UnknownEdges { line: usize, id: u64 },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Line {
    Header { format: String },
    Edges { id: u64, edges: Vec<SampleEdge> },
    Record(RecordLine),
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    edges: u64,
    var_features: Vec<[f64; VAR_FEATURES]>,
    cons_features: Vec<[f64; CONS_FEATURES]>,
    candidate_mask: Vec<bool>,
    depth: usize,
    parent_objective: f64,
    candidates: Vec<usize>,
    action: usize,
    scores: Vec<f64>,
}

/// Streaming writer; edge lists are deduplicated by `Arc` identity.
pub struct DatasetWriter<W: Write> {
    out: W,
    ids: HashMap<*const Vec<SampleEdge>, u64>,
    // Keeps deduplicated lists alive so their addresses are not reused.
    held: Vec<Arc<Vec<SampleEdge>>>,
    count: usize,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W) -> Result<Self, DatasetError> {
        write_line(&mut out, &Line::Header { format: FORMAT.into() })?;
        Ok(DatasetWriter { out, ids: HashMap::new(), held: Vec::new(), count: 0 })
    }

    pub fn write(&mut self, rec: &ExpertRecord) -> Result<(), DatasetError> {
        let key = Arc::as_ptr(&rec.sample.edges);
        let id = match self.ids.get(&key) {
            Some(&id) => id,
            None => {
                let id = self.held.len() as u64;
                write_line(&mut self.out, &Line::Edges { id, edges: rec.sample.edges.as_ref().clone() })?;
                self.ids.insert(key, id);
                self.held.push(rec.sample.edges.clone());
                id
            }
        };
        let s = &rec.sample;
        let line = Line::Record(RecordLine {
            edges: id,
            var_features: s.var_features.clone(),
            cons_features: s.cons_features.clone(),
            candidate_mask: s.candidate_mask.clone(),
            depth: s.depth,
            parent_objective: s.parent_objective,
            candidates: rec.candidates.clone(),
            action: rec.action,
            scores: rec.scores.clone(),
        });
        write_line(&mut self.out, &line)?;
        self.count += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn finish(mut self) -> Result<W, DatasetError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut *out, line).map_err(|e| DatasetError::Json { line: 0, source: e })?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_records(records: &[ExpertRecord], out: impl Write) -> Result<(), DatasetError> {
    let mut w = DatasetWriter::new(out)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn write_dataset(records: &[ExpertRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write_records(records, BufWriter::new(File::create(path)?))
}

pub fn read_records(input: impl BufRead) -> Result<Vec<ExpertRecord>, DatasetError> {
    let mut edges: HashMap<u64, Arc<Vec<SampleEdge>>> = HashMap::new();
    let mut records = Vec::new();
    let mut seen_header = false;
    for (k, text) in input.lines().enumerate() {
        let text = text?;
        let line = k + 1;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&text).map_err(|e| DatasetError::Json { line, source: e })?;
        match parsed {
            Line::Header { format } => {
                if seen_header || format != FORMAT {
                    return Err(DatasetError::Header);
                }
                seen_header = true;
            }
            _ if !seen_header => return Err(DatasetError::Header),
            Line::Edges { id, edges: list } => {
                edges.insert(id, Arc::new(list));
            }
            Line::Record(r) => {
                let shared = edges.get(&r.edges).cloned().ok_or(DatasetError::UnknownEdges { line, id: r.edges })?;
                let sample = BranchSample {
                    var_features: r.var_features,
                    cons_features: r.cons_features,
                    edges: shared,
                    candidate_mask: r.candidate_mask,
                    depth: r.depth,
                    parent_objective: r.parent_objective,
                };
                validate(&sample, &r.candidates, r.action, &r.scores).map_err(|reason| DatasetError::Invalid { line, reason })?;
                records.push(ExpertRecord { sample, candidates: r.candidates, action: r.action, scores: r.scores });
            }
        }
    }
    if !seen_header {
        return Err(DatasetError::Header);
    }
    Ok(records)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<ExpertRecord>, DatasetError> {
    read_records(BufReader::new(File::open(path)?))
}

fn validate(s: &BranchSample, candidates: &[usize], action: usize, scores: &[f64]) -> Result<(), String> {
    let (n, m) = (s.num_vars(), s.num_cons());
    if s.candidate_mask.len() != n {
        return Err(format!("mask length {} for {n} variables", s.candidate_mask.len()));
    }
    if candidates != s.candidates().as_slice() {
        return Err("candidate ids disagree with the mask".into());
    }
    if scores.len() != candidates.len() {
        return Err("one score per candidate expected".into());
    }
    if !candidates.contains(&action) {
        return Err(format!("action {action} is not a candidate"));
    }
    if s.edges.iter().any(|e| e.var as usize >= n || e.cons as usize >= m) {
        return Err("edge endpoint out of range".into());
    }
    Ok(())
}
