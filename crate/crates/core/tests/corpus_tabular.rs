mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use textscore::corpus::{
    parse_dataset, stratified_split, text_length_stats, Dataset, FeatureKind, FeatureSpec, FeatureValue, LoanRecord,
    Schema, TextSelector,
};
use textscore::linalg::Matrix;
use textscore::tabular::{encode, fit_binning, fit_woe, iv_from_counts, vif_filter, EncodedMatrix};
use textscore::textfeat::Tokenizer;

use common::label_only_dataset;

fn schema() -> Schema {
    Schema(vec![
        FeatureSpec { name: "income".into(), kind: FeatureKind::Continuous },
        FeatureSpec { name: "housing".into(), kind: FeatureKind::Categorical },
    ])
}

fn mixed_dataset(rows: &[(f64, &str, u8, &str)]) -> Dataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(x, c, label, text))| LoanRecord {
            id: format!("R{i:04}"),
            features: BTreeMap::from([
                ("income".to_string(), FeatureValue::Continuous(x)),
                ("housing".to_string(), FeatureValue::Categorical(c.into())),
            ]),
            human_text: text.into(),
            refined_texts: Default::default(),
            label,
            loan_amount: 1000.0,
            interest_rate: 0.1,
            term_months: 12,
        })
        .collect();
    Dataset { records, schema: schema() }
}

#[test]
fn null_field_and_duplicate_id() {
    let line = |id: &str, income: &str| {
        format!(
            r#"{{"id":"{id}","features":{{"income":{income},"housing":"own"}},"human_text":"t","label":0,"loan_amount":100,"interest_rate":0.1,"term_months":12}}"#
        )
    };
    let text = [line("L001", "1.0"), line("L002", "null"), line("L003", "3.5")].join("\n");
    let ds = parse_dataset(&text, &schema()).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.records[1].features["income"], FeatureValue::Missing);

    let dup = [line("L001", "1.0"), line("L001", "2.0")].join("\n");
    let err = parse_dataset(&dup, &schema()).unwrap_err();
    assert!(err.to_string().contains("L001"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn split_partitions_every_index(n in 4usize..400, pos_frac in 0.02f64..0.98, seed in any::<u64>()) {
        let n_pos = ((n as f64 * pos_frac).round() as usize).clamp(2, n - 2);
        let ds = label_only_dataset(n, n_pos);
        let Ok(s) = stratified_split(&ds, 0.7, 0.2, seed) else { return Ok(()) };
        let all: BTreeSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), s.train.len() + s.val.len() + s.test.len());
        prop_assert_eq!(all, (0..n).collect::<BTreeSet<_>>());
        for label in [0u8, 1] {
            let stratum = ds.records.iter().filter(|r| r.label == label).count();
            let in_test = s.test.iter().filter(|&&i| ds.records[i].label == label).count();
            let frac = in_test as f64 / stratum as f64;
            prop_assert!((frac - 0.3).abs() <= 1.0 / stratum as f64 + 1e-12, "label {} frac {}", label, frac);
        }
    }
}

proptest! {
    #[test]
    fn length_stats_ignore_record_order(lens in prop::collection::vec((0usize..40, 0u8..2), 2..40), seed in any::<u64>()) {
        let texts: Vec<String> = lens.iter().map(|(k, _)| vec!["w"; *k].join(" ")).collect();
        let rows: Vec<(f64, &str, u8, &str)> = texts.iter().zip(&lens).map(|(t, (_, l))| (1.0, "own", *l, t.as_str())).collect();
        let ds = mixed_dataset(&rows);
        let mut shuffled = ds.clone();
        use rand::seq::SliceRandom;
        shuffled.records.shuffle(&mut textscore::rng::rng(seed));
        let tk = Tokenizer::default();
        prop_assert_eq!(
            text_length_stats(&ds, TextSelector::Human, &tk).unwrap(),
            text_length_stats(&shuffled, TextSelector::Human, &tk).unwrap()
        );
    }

    #[test]
    fn information_value_is_non_negative(
        counts in prop::collection::vec((0u32..200, 0u32..200), 1..12),
        smoothing in prop::sample::select(vec![0.0, 0.5, 1.0]),
    ) {
        let goods: Vec<f64> = counts.iter().map(|c| f64::from(c.0)).collect();
        let bads: Vec<f64> = counts.iter().map(|c| f64::from(c.1)).collect();
        prop_assume!(goods.iter().sum::<f64>() > 0.0 && bads.iter().sum::<f64>() > 0.0);
        if smoothing == 0.0 {
            prop_assume!(counts.iter().all(|c| c.0 > 0 && c.1 > 0));
        }
        prop_assert!(iv_from_counts(&goods, &bads, smoothing) >= -1e-15);
    }
}

fn sample_rows(seed: u64, n: usize) -> Vec<(f64, &'static str, u8, &'static str)> {
    use rand::Rng as _;
    let mut r = textscore::rng::rng(seed);
    (0..n)
        .map(|i| {
            let x: f64 = r.random_range(0.0..100.0);
            let c = ["own", "rent", "family"][r.random_range(0..3)];
            let label = u8::from(r.random_bool((0.1 + x / 200.0).min(0.9)));
            let label = if i < 2 { i as u8 } else { label };
            (x, c, label, "text")
        })
        .collect()
}

#[test]
fn woe_matches_raw_counts_without_smoothing() {
    let ds = mixed_dataset(&sample_rows(3, 300));
    let train: Vec<usize> = (0..300).collect();
    let bins = fit_binning(&ds, &train, 5).unwrap();
    let table = fit_woe(&ds, &train, &bins, 0.0).unwrap();
    let total_bad = ds.records.iter().filter(|r| r.label == 1).count() as f64;
    let total_good = 300.0 - total_bad;
    for (name, fb) in &bins.features {
        let fw = &table.features[name];
        for (b, stats) in fw.bins.iter().enumerate() {
            let members: Vec<&LoanRecord> =
                ds.records.iter().filter(|r| fb.bin_of(&r.features[name]) == Some(b)).collect();
            let bad = members.iter().filter(|r| r.label == 1).count() as f64;
            let good = members.len() as f64 - bad;
            if good == 0.0 || bad == 0.0 {
                continue;
            }
            let expected = ((good / total_good) / (bad / total_bad)).ln();
            assert!((stats.woe - expected).abs() < 1e-12, "{name} bin {b}");
        }
    }
}

#[test]
fn encoding_commutes_with_row_shuffles() {
    let ds = mixed_dataset(&sample_rows(5, 200));
    let train: Vec<usize> = (0..200).collect();
    let bins = fit_binning(&ds, &train, 4).unwrap();
    let table = fit_woe(&ds, &train, &bins, 0.5).unwrap();
    let cols = vec!["income".to_string(), "housing".to_string()];
    let base = encode(&ds, &table, &cols).unwrap();
    let perm: Vec<usize> = (0..200).rev().collect();
    let shuffled = Dataset { records: perm.iter().map(|&i| ds.records[i].clone()).collect(), schema: ds.schema.clone() };
    assert_eq!(encode(&shuffled, &table, &cols).unwrap(), base.select_rows(&perm));
}

#[test]
fn vif_filter_ignores_column_order() {
    use rand::Rng as _;
    let mut r = textscore::rng::rng(17);
    let n = 80;
    let a: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.9 * x + 0.4 * y + r.random_range(-0.05..0.05)).collect();
    let d: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let cols = [("a", &a), ("b", &b), ("c", &c), ("d", &d)];
    let build = |order: &[usize]| {
        let names: Vec<String> = order.iter().map(|&i| cols[i].0.to_string()).collect();
        let mut m = Matrix::zeros(n, order.len());
        for (j, &i) in order.iter().enumerate() {
            for row in 0..n {
                m.set(row, j, cols[i].1[row]);
            }
        }
        EncodedMatrix::new((0..n).map(|i| i.to_string()).collect(), names, m)
    };
    let keep = |order: &[usize]| -> BTreeSet<String> { vif_filter(&build(order), 10.0).unwrap().into_iter().collect() };
    let reference = keep(&[0, 1, 2, 3]);
    assert!(reference.len() < 4);
    for order in [[3, 2, 1, 0], [2, 0, 3, 1], [1, 3, 0, 2]] {
        assert_eq!(keep(&order), reference);
    }
}
