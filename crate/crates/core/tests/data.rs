use std::collections::{HashMap, HashSet};
use std::io::Write as _;

use fearec_core::data::{
    build_dataset, load_interactions, make_batches, pad_truncate, synthetic_periodic, EvalSplit, Format,
    Interaction, InteractionLog, SemanticIndex, SequenceDataset,
};
use fearec_core::Error;

fn log(rows: &[(&str, &str, i64)]) -> InteractionLog {
    InteractionLog {
        records: rows
            .iter()
            .map(|&(u, i, t)| Interaction { user: u.into(), item: i.into(), timestamp: t })
            .collect(),
    }
}

/// Five users share five items; a sixth user also touches a private item,
/// which is dropped in the first pass and takes the user below the floor
/// in the second.
fn six_user_log() -> InteractionLog {
    let mut rows = Vec::new();
    for u in 1..=5 {
        for (t, item) in ["p1", "p2", "p3", "p4", "p5"].iter().enumerate() {
            rows.push((format!("u{u}"), item.to_string(), (t * 10 + u) as i64));
        }
    }
    for (t, item) in ["p1", "p2", "p3", "p4", "z"].iter().enumerate() {
        rows.push(("u6".to_string(), item.to_string(), t as i64));
    }
    let refs: Vec<(&str, &str, i64)> = rows.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)).collect();
    log(&refs)
}

fn degrees(ds: &SequenceDataset) -> (usize, usize) {
    let min_user = ds.sequences.iter().map(Vec::len).min().unwrap();
    let mut users_of: HashMap<usize, HashSet<usize>> = HashMap::new();
    for (u, s) in ds.sequences.iter().enumerate() {
        for &i in s {
            users_of.entry(i).or_default().insert(u);
        }
    }
    (min_user, users_of.values().map(HashSet::len).min().unwrap())
}

#[test]
fn k_core_reaches_a_fixpoint() {
    let ds = build_dataset(&six_user_log(), 5).unwrap();
    assert_eq!(ds.num_users(), 5);
    assert!(!ds.users.contains(&"u6".to_string()));
    assert_eq!(ds.num_items(), 5);
    let (min_user, min_item) = degrees(&ds);
    assert!(min_user >= 5 && min_item >= 5);
    for u in 0..ds.num_users() {
        assert!(ds.train(u).len() >= 3);
    }
}

#[test]
fn min_count_one_keeps_everything_long_enough() {
    let ds = build_dataset(&six_user_log(), 1).unwrap();
    assert_eq!(ds.num_users(), 6);
    assert_eq!(ds.num_items(), 6);
}

#[test]
fn filtering_everything_is_an_error() {
    let tiny = log(&[("a", "x", 1), ("a", "y", 2), ("b", "x", 3)]);
    assert!(matches!(build_dataset(&tiny, 5), Err(Error::EmptyAfterKCore(_))));
    assert!(build_dataset(&InteractionLog::default(), 5).is_err());
}

#[test]
fn item_ids_are_dense_and_splits_reconstruct_sequences() {
    let ds = build_dataset(&six_user_log(), 5).unwrap();
    let seen: HashSet<usize> = ds.sequences.iter().flatten().copied().collect();
    assert_eq!(seen, (1..=ds.num_items()).collect());
    for u in 0..ds.num_users() {
        let (valid_in, valid_target) = ds.eval_example(u, EvalSplit::Valid);
        let (test_in, test_target) = ds.eval_example(u, EvalSplit::Test);
        assert_eq!(valid_in, ds.train(u));
        let mut rebuilt = ds.train(u).to_vec();
        rebuilt.push(valid_target);
        assert_eq!(rebuilt, test_in);
        rebuilt.push(test_target);
        assert_eq!(rebuilt, ds.sequences[u]);
    }
}

#[test]
fn sequences_follow_timestamps() {
    let ds = build_dataset(&six_user_log(), 5).unwrap();
    let u1 = ds.users.iter().position(|u| u == "u1").unwrap();
    let names: Vec<&str> = ds.sequences[u1].iter().map(|&i| ds.items[i - 1].as_str()).collect();
    assert_eq!(names, ["p1", "p2", "p3", "p4", "p5"]);
}

#[test]
fn tsv_file_loading() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "u1\ti1\t100\nu1\ti2\t200\nu2\ti1\t50").unwrap();
    assert_eq!(load_interactions(f.path(), Format::Tsv).unwrap().records.len(), 3);

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "u1\ti1\t100\nu1\ti2").unwrap();
    let err = load_interactions(bad.path(), Format::Tsv).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");

    let empty = tempfile::NamedTempFile::new().unwrap();
    assert!(load_interactions(empty.path(), Format::Tsv).unwrap().records.is_empty());
    assert!(load_interactions(std::path::Path::new("/nonexistent/x.tsv"), Format::Tsv).is_err());
}

#[test]
fn processed_dataset_round_trips_bit_exactly() {
    let ds = synthetic_periodic(7, 12, 3, 10, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    ds.save(&a).unwrap();
    let back = SequenceDataset::load(&a).unwrap();
    assert_eq!(back, ds);
    back.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn padding_and_truncation() {
    assert_eq!(pad_truncate(&[7, 8], 4), vec![0, 0, 7, 8]);
    let long: Vec<usize> = (1..=60).collect();
    assert_eq!(pad_truncate(&long, 50), (11..=60).collect::<Vec<_>>());
    assert_eq!(pad_truncate(&[1, 2, 3], 3), vec![1, 2, 3]);
}

#[test]
fn one_epoch_visits_every_example_once_and_is_reproducible() {
    let ds = synthetic_periodic(23, 15, 4, 12, 9).unwrap();
    let examples = ds.training_examples(true);
    let index = SemanticIndex::build(&examples);
    let batches = make_batches(&examples, &index, 5, 12, 3, 0);
    let mut visited: Vec<usize> = batches.iter().flat_map(|b| b.examples.clone()).collect();
    visited.sort_unstable();
    assert_eq!(visited, (0..examples.len()).collect::<Vec<_>>());
    assert!(batches.iter().all(|b| b.len() >= 2));
    assert_eq!(batches, make_batches(&examples, &index, 5, 12, 3, 0));
    assert_ne!(batches, make_batches(&examples, &index, 5, 12, 3, 1));
    for b in &batches {
        for (k, &e) in b.examples.iter().enumerate() {
            assert_eq!(b.targets[k], examples[e].target);
            assert!(index.candidates(b.targets[k]).contains(&e));
        }
    }
}

#[test]
fn synthetic_fixture_is_periodic_with_motif_targets() {
    let ds = synthetic_periodic(10, 40, 5, 50, 1).unwrap();
    for u in 0..ds.num_users() {
        let s = &ds.sequences[u];
        assert_eq!(s.len(), 52);
        assert!(s.windows(6).all(|w| w[0] == w[5]));
        let (input, target) = ds.eval_example(u, EvalSplit::Test);
        assert_eq!(target, input[input.len() - 5]);
    }
    assert_ne!(ds.sequences, synthetic_periodic(10, 40, 5, 50, 2).unwrap().sequences);
    assert!(synthetic_periodic(10, 40, 26, 50, 1).is_err());
    assert!(synthetic_periodic(10, 40, 1, 50, 1).is_err());
}

#[test]
fn statistics_block() {
    let ds = build_dataset(&six_user_log(), 5).unwrap();
    let st = ds.stats();
    assert_eq!((st.users, st.items, st.actions), (5, 5, 25));
    assert!((st.avg_length - 5.0).abs() < 1e-12);
    assert!(st.sparsity.abs() < 1e-12);
}
