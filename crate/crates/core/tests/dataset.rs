//! Expert dataset file round trips.

use std::sync::Arc;

use milpbranch_core::bnb::{self, BnbConfig, ExpertRecord};
use milpbranch_core::dataset::{self, DatasetError};
use milpbranch_core::gen;

fn collect() -> Vec<ExpertRecord> {
    let mut all = Vec::new();
    for seed in 0..4 {
        let inst = gen::gen_set_covering(30, 40, 0.3, seed).unwrap();
        let (recs, _) = bnb::run_expert_collect(&inst, 1.0, seed, &BnbConfig::default()).unwrap();
        all.extend(recs);
    }
    all
}

#[test]
fn records_round_trip_and_share_edges() {
    let recs = collect();
    assert!(recs.len() > 4);
    let mut buf = Vec::new();
    dataset::write_records(&recs, &mut buf).unwrap();
    let back = dataset::read_records(buf.as_slice()).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.sample, b.sample);
        assert_eq!((&a.candidates, a.action, &a.scores), (&b.candidates, b.action, &b.scores));
    }
    for i in 0..recs.len() {
        for j in 0..recs.len() {
            assert_eq!(
                Arc::ptr_eq(&recs[i].sample.edges, &recs[j].sample.edges),
                Arc::ptr_eq(&back[i].sample.edges, &back[j].sample.edges)
            );
        }
    }
    let text = String::from_utf8(buf.clone()).unwrap();
    let edge_lines = text.lines().filter(|l| l.starts_with(r#"{"kind":"edges""#)).count();
    let mut distinct: Vec<&Arc<_>> = Vec::new();
    for r in &recs {
        if !distinct.iter().any(|d| Arc::ptr_eq(d, &r.sample.edges)) {
            distinct.push(&r.sample.edges);
        }
    }
    assert!(distinct.len() > 1);
    assert_eq!(edge_lines, distinct.len());
    let mut again = Vec::new();
    dataset::write_records(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn files_round_trip() {
    let recs = collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sb.jsonl");
    dataset::write_dataset(&recs, &path).unwrap();
    assert_eq!(dataset::read_dataset(&path).unwrap().len(), recs.len());
}

#[test]
fn malformed_files_are_rejected() {
    assert!(matches!(dataset::read_records(&b""[..]), Err(DatasetError::Header)));
    let no_header = br#"{"kind":"edges","id":0,"edges":[]}"#;
    assert!(matches!(dataset::read_records(&no_header[..]), Err(DatasetError::Header)));
    let recs = collect();
    let mut buf = Vec::new();
    dataset::write_records(&recs[..1], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let dangling: String = text.lines().filter(|l| !l.contains(r#""kind":"edges""#)).map(|l| format!("{l}\n")).collect();
    assert!(matches!(dataset::read_records(dangling.as_bytes()), Err(DatasetError::UnknownEdges { line: 2, id: 0 })));
    let bad_action = text.replace(&format!(r#""action":{}"#, recs[0].action), r#""action":999999"#);
    assert!(matches!(dataset::read_records(bad_action.as_bytes()), Err(DatasetError::Invalid { .. })));
}
