use attn_steer::eval::{load_dataset, split, write_dataset};

const QA16: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/qa16.jsonl");

#[test]
fn fixture_loads_and_round_trips() {
    let data = load_dataset(QA16).unwrap();
    assert_eq!(data.len(), 16);
    let multi: Vec<_> = data.iter().filter(|i| i.passages.len() > 1).collect();
    assert_eq!(multi.len(), 6);
    for inst in &multi {
        assert!(inst.passages.iter().all(|p| p.hop_id.is_some()));
        assert!(inst.context().starts_with("[1]: "));
    }
    for inst in &data {
        for s in inst.sentences() {
            assert_eq!(&inst.context()[s.start..s.end], s.text);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.jsonl");
    write_dataset(&path, &data).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), data);
}

#[test]
fn fixture_split_partitions_instances() {
    let data = load_dataset(QA16).unwrap();
    let s = split(data.clone(), 5, 3);
    assert_eq!((s.profiling.len(), s.test.len()), (5, 11));
    let mut ids: Vec<_> = s.profiling.iter().chain(&s.test).map(|i| i.id.clone()).collect();
    ids.sort();
    let mut want: Vec<_> = data.iter().map(|i| i.id.clone()).collect();
    want.sort();
    assert_eq!(ids, want);
    assert_eq!(split(data.clone(), 5, 3), s);
    assert_ne!(split(data, 5, 4).profiling, s.profiling);
}
