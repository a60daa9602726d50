//! Instance sets on disk, expert collection and dataset splits.

use std::path::Path;

use milpbranch_core::bnb::{run_expert_collect, BnbConfig, ExpertRecord, SolveError};
use milpbranch_core::gen::{self, ladder, write_batch, Family, GenError, Manifest, Preset};
use milpbranch_core::io;
use milpbranch_core::MilpInstance;
use rayon::prelude::*;
use thiserror::Error;

use crate::eval::Distribution;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("distribution {0} is not in the manifest")]
    UnknownDistribution(String),
}

pub const TRAIN: &str = "train";
pub const VALID: &str = "valid";

/// Ladder rung names `D1`..`D6`.
pub fn rung_name(k: usize) -> String {
    format!("D{}", k + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateSpec {
    pub family: Family,
    pub preset: Preset,
    pub train: usize,
    pub valid: usize,
    /// Test instances per ladder rung.
    pub test: usize,
    pub seed: u64,
}

/// Writes training and validation instances from the first rung plus
/// `test` instances per rung, each group with its own seed range.
pub fn generate(spec: &GenerateSpec, dir: impl AsRef<Path>) -> Result<Manifest, PipelineError> {
    let dir = dir.as_ref();
    let rungs = ladder(spec.family, spec.preset);
    let mut manifest = Manifest::default();
    let stride = 1_000_000u64;
    write_batch(&rungs[0], TRAIN, spec.train, spec.seed, dir, &mut manifest)?;
    write_batch(&rungs[0], VALID, spec.valid, spec.seed + stride, dir, &mut manifest)?;
    for (k, p) in rungs.iter().enumerate() {
        write_batch(p, &rung_name(k), spec.test, spec.seed + (k as u64 + 2) * stride, dir, &mut manifest)?;
    }
    manifest.write(dir)?;
    Ok(manifest)
}

/// Reads one distribution's instances in manifest order.
pub fn load_distribution(dir: impl AsRef<Path>, manifest: &Manifest, name: &str) -> Result<Distribution, PipelineError> {
    let dir = dir.as_ref();
    let instances = manifest
        .distribution(name)
        .map(|e| Ok((e.file.clone(), io::read_instance(dir.join(&e.file))?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    if instances.is_empty() {
        return Err(PipelineError::UnknownDistribution(name.to_string()));
    }
    Ok(Distribution { name: name.to_string(), instances })
}

/// Distribution names of the ladder found in the manifest, in rung order.
pub fn ladder_names(manifest: &Manifest) -> Vec<String> {
    (0..6).map(rung_name).filter(|n| manifest.distribution(n).next().is_some()).collect()
}

/// Runs the strong-branching expert on every instance in parallel; records
/// come back in instance order. Instance `k` uses seed `seed + k`.
pub fn collect(instances: &[MilpInstance], sample_rate: f64, seed: u64, config: &BnbConfig) -> Result<Vec<ExpertRecord>, PipelineError> {
    let per: Vec<Vec<ExpertRecord>> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| run_expert_collect(inst, sample_rate, seed + k as u64, config).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Generates set-covering instances with consecutive seeds and collects
/// expert records until at least `min_records` are gathered. Returns the
/// instances used and their records.
pub fn collect_until(
    rows: usize,
    cols: usize,
    density: f64,
    first_seed: u64,
    min_records: usize,
    config: &BnbConfig,
) -> Result<(Vec<MilpInstance>, Vec<ExpertRecord>), PipelineError> {
    let mut instances = Vec::new();
    let mut records = Vec::new();
    let mut seed = first_seed;
    let chunk = rayon::current_num_threads().max(1) * 4;
    while records.len() < min_records {
        let batch: Vec<MilpInstance> =
            (0..chunk).map(|k| gen::gen_set_covering(rows, cols, density, seed + k as u64)).collect::<Result<_, _>>()?;
        records.extend(collect(&batch, 1.0, seed, config)?);
        instances.extend(batch);
        seed += chunk as u64;
    }
    Ok((instances, records))
}
