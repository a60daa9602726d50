use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use milpbranch::config::{Mode, RunConfig};
use milpbranch::eval::{self, Distribution, EvalSettings, Method};
use milpbranch::pipeline::{self, GenerateSpec, TRAIN, VALID};
use milpbranch::train::{train_il_mode, train_rl_mode, IlData, RlData, TrainOutcome};
use milpbranch_core::bnb::BnbConfig;
use milpbranch_core::dataset;
use milpbranch_core::gen::{Family, Manifest, Preset};
use milpbranch_core::io::{read_instance, write_instance};
use milpbranch_core::model::to_instance_graph;
use milpbranch_learn::adversary::{random_augment, Augmenter, Proportions, AUGMENTER_KIND};
use milpbranch_learn::gnn::{GraphInput, PolicyNet};
use milpbranch_learn::nn::Checkpoint;
use milpbranch_learn::policy::Example;

#[derive(Parser)]
#[command(name = "milpbranch", version, about = "Learned branching for a pure-Rust MILP solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/valid instances and a D1..D6 test ladder.
    Generate {
        #[arg(long, default_value = "set-covering")]
        family: String,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value_t = 100)]
        train: usize,
        #[arg(long, default_value_t = 20)]
        valid: usize,
        #[arg(long, default_value_t = 20)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect strong-branching samples from one distribution.
    Collect {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value = TRAIN)]
        distribution: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sample_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        node_limit: Option<usize>,
    },
    /// Imitation learning (mode `il`).
    TrainIl {
        #[arg(long)]
        config: PathBuf,
    },
    /// REINFORCE on the branching MDP (mode `rl`).
    TrainRl {
        #[arg(long)]
        config: PathBuf,
    },
    /// Adversarial augmentation training; the mode comes from the config.
    TrainAdasolver {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mask one instance with a trained augmenter or at random.
    Augment {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "set-covering")]
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve one instance.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// `sb`, `reliability`, `pseudocost`, `random` or a policy checkpoint path.
        #[arg(long, default_value = "reliability")]
        method: String,
        #[arg(long, default_value_t = 20_000)]
        node_limit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate methods over the test ladder and write a report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated `name` or `name=checkpoint`.
        #[arg(long, default_value = "sb,reliability,random")]
        methods: String,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        /// Report AdaSolver-vs-baseline deltas for these two methods.
        #[arg(long, num_args = 2)]
        compare: Option<Vec<String>>,
    },
    /// Export pre-head variable embeddings of a policy.
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `label=dataset` pairs.
        #[arg(long, required = true)]
        samples: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_family(s: &str) -> Result<Family> {
    Family::from_name(s).with_context(|| format!("unknown family {s}"))
}

fn parse_preset(s: &str) -> Result<Preset> {
    Ok(match s {
        "paper" => Preset::Paper,
        "desk" => Preset::Desk,
        "tiny" => Preset::Tiny,
        _ => bail!("unknown preset {s}"),
    })
}

fn load_records(path: &Path) -> Result<Vec<Example>> {
    let recs = dataset::read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(recs.iter().map(Example::new).collect())
}

fn save_outcome(cfg: &RunConfig, out: &TrainOutcome) -> Result<()> {
    let dir = &cfg.paths.checkpoints;
    std::fs::create_dir_all(dir)?;
    let name = cfg.mode.name();
    out.policy.checkpoint().save(dir.join(format!("{name}.policy.json")))?;
    if let Some(adv) = &out.adversary {
        adv.augmenter.checkpoint().save(dir.join(format!("{name}.augmenter.json")))?;
        adv.discriminator.checkpoint("discriminator").save(dir.join(format!("{name}.discriminator.json")))?;
    }
    std::fs::write(dir.join(format!("{name}.log.json")), serde_json::to_string_pretty(&out.log)?)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.epochs.csv")))?;
    for e in &out.log.epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

fn train(cfg: RunConfig) -> Result<()> {
    let manifest = Manifest::read(&cfg.paths.instances)?;
    let instances: Vec<_> =
        pipeline::load_distribution(&cfg.paths.instances, &manifest, TRAIN)?.instances.into_iter().map(|(_, i)| i).collect();
    let out = if cfg.mode.is_rl() {
        let valid: Vec<_> = pipeline::load_distribution(&cfg.paths.instances, &manifest, VALID)?
            .instances
            .into_iter()
            .map(|(_, i)| i)
            .collect();
        train_rl_mode(&cfg, &RlData { instances: &instances, valid: &valid })?
    } else {
        let train = load_records(&cfg.paths.datasets.join("train.samples"))?;
        let valid = load_records(&cfg.paths.datasets.join("valid.samples"))?;
        train_il_mode(&cfg, &IlData { instances: &instances, train: &train, valid: &valid })?
    };
    for e in &out.log.epochs {
        eprintln!(
            "epoch {:3} train {:.4}/{:.3} valid {:.4}/{:.3} accepted {}/{}",
            e.epoch, e.train_loss, e.train_accuracy, e.valid_loss, e.valid_accuracy, e.accepted, e.proposed
        );
    }
    save_outcome(&cfg, &out)
}

fn method_from(spec: &str, checkpoints: &Path) -> Result<Method> {
    if let Some((name, path)) = spec.split_once('=') {
        return Ok(Method::load(name, path)?);
    }
    if let Some(m) = Method::builtin(spec) {
        return Ok(m);
    }
    Ok(Method::load(spec, checkpoints.join(format!("{spec}.policy.json")))?)
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate { family, preset, train, valid, test, seed, out } => {
            let spec = GenerateSpec { family: parse_family(&family)?, preset: parse_preset(&preset)?, train, valid, test, seed };
            let m = pipeline::generate(&spec, &out)?;
            println!("wrote {} instances to {}", m.entries.len(), out.display());
        }
        Cmd::Collect { instances, distribution, out, sample_rate, seed, node_limit } => {
            let manifest = Manifest::read(&instances)?;
            let d = pipeline::load_distribution(&instances, &manifest, &distribution)?;
            let insts: Vec<_> = d.instances.into_iter().map(|(_, i)| i).collect();
            let cfg = BnbConfig { node_limit, ..BnbConfig::default() };
            let recs = pipeline::collect(&insts, sample_rate, seed, &cfg)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            dataset::write_dataset(&recs, &out)?;
            println!("wrote {} samples to {}", recs.len(), out.display());
        }
        Cmd::TrainIl { config } => train(RunConfig { mode: Mode::Il, ..RunConfig::load(config)? })?,
        Cmd::TrainRl { config } => train(RunConfig { mode: Mode::Rl, ..RunConfig::load(config)? })?,
        Cmd::TrainAdasolver { config } => {
            let cfg = RunConfig::load(config)?;
            if !cfg.mode.augments() {
                bail!("train-adasolver needs mode adasolver-il, adasolver-rl, ra or reinforce; got {}", cfg.mode.name());
            }
            train(cfg)?
        }
        Cmd::Augment { instance, out, checkpoint, family, seed } => {
            let inst = read_instance(&instance)?;
            let props = Proportions::for_family(parse_family(&family)?);
            let aug = match checkpoint {
                Some(p) => {
                    let ck = Checkpoint::load(&p)?;
                    ck.expect_kind(AUGMENTER_KIND)?;
                    let a = Augmenter::from_checkpoint(&ck)?;
                    let (action, _) = a.propose(&GraphInput::new(&to_instance_graph(&inst)), &props)?;
                    milpbranch_learn::adversary::apply_mask(&inst, &action)?
                }
                None => random_augment(&inst, &props, seed)?.0,
            };
            write_instance(&aug, &out)?;
            println!("rows {} -> {}, nnz {} -> {}", inst.num_rows(), aug.num_rows(), inst.nnz(), aug.nnz());
        }
        Cmd::Solve { instance, method, node_limit, seed } => {
            let inst = read_instance(&instance)?;
            let m = match Method::builtin(&method) {
                Some(m) => m,
                None => Method::load("policy", &method)?,
            };
            let settings = EvalSettings { node_limit, ..EvalSettings::default() };
            let (row, res) = eval::solve_row(&m, "-", &instance.display().to_string(), &inst, seed, &settings)?;
            println!(
                "status {:?} objective {:?} dual {} nodes {} time {:.3}s pd-gap {}",
                res.status, res.objective, res.dual_bound, res.nodes, res.wall_time, row.pd_gap
            );
        }
        Cmd::Evaluate { config, methods, seeds, compare } => {
            let cfg = RunConfig::load(config)?;
            let methods: Vec<Method> =
                methods.split(',').map(|s| method_from(s.trim(), &cfg.paths.checkpoints)).collect::<Result<_>>()?;
            let seeds: Vec<u64> = seeds.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
            let manifest = Manifest::read(&cfg.paths.instances)?;
            let ladder: Vec<Distribution> = pipeline::ladder_names(&manifest)
                .iter()
                .map(|n| pipeline::load_distribution(&cfg.paths.instances, &manifest, n))
                .collect::<Result<_, _>>()?;
            let settings = EvalSettings {
                node_limit: cfg.limits.node_limit,
                time_limit: cfg.limits.time_limit,
                clock: cfg.clock,
                gap_cap: cfg.limits.gap_cap,
                ..EvalSettings::default()
            };
            let report = eval::evaluate(&methods, &ladder, &seeds, &settings)?;
            let files = eval::emit_report(&report, cfg.clock, &cfg.paths.reports)?;
            if let Some(pair) = compare {
                eval::emit_deltas(&eval::deltas(&report, &pair[0], &pair[1]), cfg.paths.reports.join("deltas.csv"))?;
            }
            print!("{}", eval::markdown_table(&report, cfg.clock));
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Cmd::DumpEmbeddings { checkpoint, samples, out } => {
            let net = PolicyNet::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let mut all = Vec::new();
            for spec in &samples {
                let (label, path) = spec.split_once('=').with_context(|| format!("expected label=path, got {spec}"))?;
                all.extend(dataset::read_dataset(path)?.into_iter().map(|r| (label.to_string(), r.sample)));
            }
            let rows = eval::dump_embeddings(&net, &all)?;
            eval::write_embeddings(&rows, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}
