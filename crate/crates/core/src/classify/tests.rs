use super::*;
use alloc::string::ToString;
use proptest::prelude::*;

fn row(label: &str, a: f64, b: f64) -> LabeledRow {
    let mut values = [0.0; NUM_SLOTS];
    values[0] = a;
    values[1] = b;
    LabeledRow {
        label: label.to_string(),
        profile_id: "p".into(),
        scenario_id: label.to_string(),
        policy: "fifo".into(),
        seed: 0,
        window: 0,
        values,
    }
}

fn separable() -> Vec<LabeledRow> {
    let mut rows = Vec::new();
    for i in 0..20 {
        let t = i as f64;
        rows.push(row("a", -1.0 - t * 0.1, (t * 7.0) % 5.0));
        rows.push(row("b", 1.0 + t * 0.1, (t * 3.0) % 5.0));
    }
    rows
}

fn all_features() -> Hyperparams {
    Hyperparams {
        n_trees: 16,
        min_leaf: 1,
        feature_subsample: FeatureSubsample::All,
        ..Hyperparams::default()
    }
}

/// Brute force: does some threshold on some slot separate the two labels?
fn depth_one_separates(rows: &[LabeledRow]) -> bool {
    (0..NUM_SLOTS).any(|f| {
        rows.iter().any(|pivot| {
            let t = pivot.values[f];
            let side = |r: &LabeledRow| r.values[f] <= t;
            let a: Vec<bool> = rows.iter().filter(|r| r.label == "a").map(side).collect();
            let b: Vec<bool> = rows.iter().filter(|r| r.label == "b").map(side).collect();
            (a.iter().all(|&s| s) && b.iter().all(|&s| !s)) || (a.iter().all(|&s| !s) && b.iter().all(|&s| s))
        })
    })
}

#[test]
fn separable_set_has_perfect_oob() {
    let rows = separable();
    assert!(depth_one_separates(&rows));
    let m = train(&rows, &all_features()).unwrap();
    assert_eq!(m.training_meta.oob_accuracy, Some(1.0));
    m.validate().unwrap();
}

#[test]
fn xor_is_learned_with_depth_two() {
    let rows = [
        row("a", 0.0, 0.0),
        row("b", 0.0, 1.0),
        row("b", 1.0, 0.0),
        row("a", 1.0, 1.0),
    ];
    let hp = Hyperparams {
        n_trees: 1,
        max_depth: 2,
        bootstrap: false,
        ..all_features()
    };
    let m = train(&rows, &hp).unwrap();
    assert_eq!(accuracy(&m, &rows), 1.0);
}

#[test]
fn single_class_is_rejected() {
    let rows: Vec<_> = (0..10).map(|i| row("a", i as f64, 0.0)).collect();
    assert!(matches!(
        train(&rows, &Hyperparams::default()),
        Err(Error::DegenerateDataset(_))
    ));
}

fn leaf_model(hists: Vec<Vec<(u32, f64)>>) -> ForestModel {
    let mut m = train(&separable(), &Hyperparams { n_trees: 1, ..all_features() }).unwrap();
    m.trees = hists
        .into_iter()
        .map(|hist| Member {
            weight: 1.0,
            tree: Tree {
                nodes: vec![Node::Leaf { hist }],
            },
        })
        .collect();
    m
}

#[test]
fn predict_proba_normalizes_and_averages() {
    let x = row("a", 0.0, 0.0).features();
    let m = leaf_model(vec![vec![(0, 3.0), (1, 1.0)]]);
    assert_eq!(predict_proba(&m, &x).unwrap().probs, vec![0.75, 0.25]);
    let m = leaf_model(vec![vec![(0, 5.0)], vec![(0, 2.0), (1, 2.0)]]);
    assert_eq!(predict_proba(&m, &x).unwrap().probs, vec![0.75, 0.25]);
    let m = leaf_model(vec![vec![(0, 5.0)], vec![(0, 1.0)]]);
    assert_eq!(predict_proba(&m, &x).unwrap().probs, vec![1.0, 0.0]);

    let mut wrong = x.clone();
    wrong.schema_version += 1;
    assert!(matches!(predict_proba(&m, &wrong), Err(Error::SchemaMismatch { .. })));
}

fn clusters(offset: f64, n: usize) -> Vec<LabeledRow> {
    let mut rows = Vec::new();
    for i in 0..n {
        let j = (i as f64 * 0.37) % 1.0;
        rows.push(row("a", offset + j, 2.0 + j));
        rows.push(row("b", offset + 2.0 + j, j));
        rows.push(row("c", offset + 4.0 + j, 4.0 + j));
    }
    rows
}

#[test]
fn fine_tune_identity_cases() {
    let base = clusters(0.0, 20);
    let m = train(&base, &Hyperparams::default()).unwrap();
    assert_eq!(fine_tune(&m, &[], &FineTuneParams::default()).unwrap(), m);
    assert_eq!(accuracy(&m, &base), 1.0);
    let same = fine_tune(&m, &base, &FineTuneParams::default()).unwrap();
    assert_eq!(accuracy(&same, &base), 1.0);
    assert_eq!(same.trees, m.trees);
    assert_eq!(same.training_meta.lineage.len(), 2);
}

#[test]
fn fine_tune_fixes_a_shifted_cluster() {
    let base = clusters(0.0, 20);
    let m = train(&base, &Hyperparams::default()).unwrap();
    // The same three classes seen on a machine where slot 0 reads 3 higher.
    let shifted = clusters(3.0, 17);
    let before = accuracy(&m, &shifted);
    assert!(before < 1.0);
    let tuned = fine_tune(&m, &shifted, &FineTuneParams::default()).unwrap();
    let after = accuracy(&tuned, &shifted);
    assert!(after >= before, "{after} < {before}");
    assert!(after > before);
    assert_eq!(tuned.label_set, m.label_set);
    assert_eq!(tuned.schema_version, m.schema_version);
    assert_eq!(tuned.training_meta.lineage.len(), 2);
    tuned.validate().unwrap();
}

#[test]
fn fine_tune_rejects_unknown_labels() {
    let m = train(&clusters(0.0, 10), &Hyperparams::default()).unwrap();
    assert!(fine_tune(&m, &[row("z", 0.0, 0.0)], &FineTuneParams::default()).is_err());
}

#[test]
fn true_class_probability_beats_uniform() {
    let rows = clusters(0.0, 30);
    let (train_rows, hold) = stratified_split(&rows, 0.2, 3);
    let m = train(&train_rows, &Hyperparams::default()).unwrap();
    assert!(mean_true_probability(&m, &hold) >= 1.0 / 3.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn row_order_does_not_matter(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let mut rows = clusters(0.0, 8);
        let hp = Hyperparams { n_trees: 4, seed, ..Hyperparams::default() };
        let a = train(&rows, &hp).unwrap();
        use rand::seq::SliceRandom;
        rows.shuffle(&mut stream(perm_seed, 1));
        let b = train(&rows, &hp).unwrap();
        prop_assert_eq!(a, b);
    }
}
