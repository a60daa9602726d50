use std::sync::Arc;

use milpbranch::eval::{self, deltas, dump_embeddings, emit_report, evaluate, Distribution, EvalError, EvalSettings, Method};
use milpbranch::pipeline::{self, GenerateSpec};
use milpbranch_core::bnb::{run_expert_collect, BnbConfig, BnbStatus};
use milpbranch_core::features::{BranchSample, SampleEdge};
use milpbranch_core::gen::{self, Family, GenSpec, Manifest, Preset};
use milpbranch_learn::gnn::{PolicyNet, PolicyNetConfig};

fn tiny_ladder(per: usize) -> Vec<Distribution> {
    (0..6)
        .map(|k| {
            let family = Family::ALL[k % 4];
            let params = gen::base_params(family, Preset::Tiny);
            let instances = (0..per)
                .map(|s| {
                    let seed = (k * 100 + s) as u64;
                    (format!("{}-{seed}", family.short_name()), gen::generate(&GenSpec { params, seed }).unwrap())
                })
                .collect();
            Distribution { name: pipeline::rung_name(k), instances }
        })
        .collect()
}

fn methods() -> Vec<Method> {
    let mut m: Vec<Method> = ["sb", "reliability", "random"].iter().map(|n| Method::builtin(n).unwrap()).collect();
    m.push(Method::learned("gnn", PolicyNet::new(PolicyNetConfig { hidden: 8, seed: 1 })));
    m
}

#[test]
fn strong_branching_closes_every_tiny_instance() {
    let ladder = tiny_ladder(3);
    let report = evaluate(&[Method::builtin("sb").unwrap()], &ladder, &[0], &EvalSettings::default()).unwrap();
    assert!(report.rows.iter().all(|r| r.status == BnbStatus::Optimal || r.status == BnbStatus::Infeasible));
    assert!(report.rows.iter().all(|r| r.pd_gap == 0.0));
}

#[test]
fn report_shape_and_buckets() {
    let ladder = tiny_ladder(2);
    let ms = methods();
    let seeds = [0, 1, 2];
    let report = evaluate(&ms, &ladder, &seeds, &EvalSettings::default()).unwrap();
    assert_eq!(report.aggregates.len(), ms.len() * 6);
    assert_eq!(report.rows.len(), ms.len() * 6 * 2 * seeds.len());
    for m in &ms {
        for d in &ladder {
            for (name, _) in &d.instances {
                for &s in &seeds {
                    let hits = report.rows.iter().filter(|r| r.method == m.name && &r.instance == name && r.seed == s).count();
                    assert_eq!(hits, 1, "{} {name} {s}", m.name);
                }
            }
            assert_eq!(report.aggregate(&m.name, &d.name).unwrap().count, 2 * seeds.len());
        }
    }
    let table = eval::markdown_table(&report, EvalSettings::default().clock);
    assert_eq!(table.lines().filter(|l| l.starts_with("| sb |")).count(), 2);
    let d = deltas(&report, "sb", "random");
    assert_eq!(d.len(), 6);
}

#[test]
fn node_clock_reports_are_byte_identical() {
    let ladder = tiny_ladder(2);
    let settings = EvalSettings::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for d in &dirs {
        let report = evaluate(&methods(), &ladder, &[0, 1], &settings).unwrap();
        files.push(emit_report(&report, settings.clock, d.path()).unwrap());
    }
    assert_eq!(files[0].len(), 7);
    for (a, b) in files[0].iter().zip(&files[1]) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
    let summary = std::fs::read_to_string(&files[0][1]).unwrap();
    assert!(summary.starts_with("method,distribution,count,time,nodes,pd_integral,pd_gap,solved\n"));
}

#[test]
fn missing_checkpoint_is_reported() {
    let err = Method::load("il", "/nonexistent/il.policy.json").unwrap_err();
    assert!(matches!(err, EvalError::MissingCheckpoint { .. }));
}

#[test]
fn checkpoint_loads_as_method() {
    let dir = tempfile::tempdir().unwrap();
    let net = PolicyNet::new(PolicyNetConfig { hidden: 8, seed: 5 });
    let path = dir.path().join("p.json");
    net.checkpoint().save(&path).unwrap();
    let m = Method::load("p", &path).unwrap();
    match m.policy {
        eval::Policy::Learned(n) => assert_eq!(*n, net),
        _ => panic!("expected a learned policy"),
    }
}

fn samples() -> Vec<BranchSample> {
    (0..)
        .map(|seed| {
            let inst = gen::gen_set_covering(15, 25, 0.2, seed).unwrap();
            run_expert_collect(&inst, 1.0, 0, &BnbConfig::default()).unwrap().0
        })
        .find(|recs| recs.len() >= 2)
        .unwrap()
        .into_iter()
        .map(|r| r.sample)
        .collect()
}

fn permuted(s: &BranchSample, perm: &[usize]) -> BranchSample {
    // perm[new] = old
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    BranchSample {
        var_features: perm.iter().map(|&o| s.var_features[o]).collect(),
        candidate_mask: perm.iter().map(|&o| s.candidate_mask[o]).collect(),
        edges: Arc::new(s.edges.iter().map(|e| SampleEdge { var: inv[e.var as usize] as u32, ..*e }).collect()),
        ..s.clone()
    }
}

#[test]
fn embedding_rows_count_candidates() {
    let net = PolicyNet::new(PolicyNetConfig::default());
    let ss = samples();
    let labelled: Vec<(String, BranchSample)> = ss.iter().map(|s| ("D1".to_string(), s.clone())).collect();
    let rows = dump_embeddings(&net, &labelled).unwrap();
    assert_eq!(rows.len(), ss.iter().map(|s| s.candidates().len()).sum::<usize>());
    assert!(rows.iter().all(|r| r.embedding.len() == 64 && r.label == "D1"));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("emb.csv");
    eval::write_embeddings(&rows, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert!(text.starts_with("label,sample,var,e0,"));
}

#[test]
fn identical_samples_give_identical_rows() {
    let net = PolicyNet::new(PolicyNetConfig::default());
    let s = samples().remove(0);
    let rows = dump_embeddings(&net, &[("a".into(), s.clone()), ("a".into(), s)]).unwrap();
    let half = rows.len() / 2;
    for (x, y) in rows[..half].iter().zip(&rows[half..]) {
        assert_eq!(x.embedding, y.embedding);
        assert_eq!(x.var, y.var);
    }
}

#[test]
fn permuted_sample_permutes_rows() {
    let net = PolicyNet::new(PolicyNetConfig::default());
    let s = samples().remove(0);
    let n = s.num_vars();
    let perm: Vec<usize> = (0..n).rev().collect();
    let p = permuted(&s, &perm);
    let a = dump_embeddings(&net, &[("x".into(), s)]).unwrap();
    let b = dump_embeddings(&net, &[("x".into(), p)]).unwrap();
    assert_eq!(a.len(), b.len());
    for ra in &a {
        let rb = b.iter().find(|r| perm[r.var] == ra.var).expect("candidate survives permutation");
        for (x, y) in ra.embedding.iter().zip(&rb.embedding) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}

#[test]
fn generate_and_collect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenerateSpec { family: Family::SetCovering, preset: Preset::Tiny, train: 3, valid: 2, test: 2, seed: 9 };
    let manifest = pipeline::generate(&spec, dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 3 + 2 + 6 * 2);
    let back = Manifest::read(dir.path()).unwrap();
    assert_eq!(back, manifest);
    assert_eq!(pipeline::ladder_names(&back), (0..6).map(pipeline::rung_name).collect::<Vec<_>>());
    let train = pipeline::load_distribution(dir.path(), &back, pipeline::TRAIN).unwrap();
    assert_eq!(train.instances.len(), 3);
    let insts: Vec<_> = train.instances.iter().map(|(_, i)| i.clone()).collect();
    let a = pipeline::collect(&insts, 1.0, 0, &BnbConfig::default()).unwrap();
    let b = pipeline::collect(&insts, 1.0, 0, &BnbConfig::default()).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        pipeline::load_distribution(dir.path(), &back, "D9"),
        Err(pipeline::PipelineError::UnknownDistribution(_))
    ));
}
