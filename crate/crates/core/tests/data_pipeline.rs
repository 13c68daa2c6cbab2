use hopular::data::{split, Dataset, Normalizer, SplitIndices, SplitSpec, TableSchema};
use hopular::harness::synthetic::planted_neighbors;
use hopular::harness::Prepared;
use hopular::model::{Dropout, HopularModel, ModelConfig, SelfColumn};
use hopular::training::evaluate;

fn glass() -> Dataset {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    Dataset::load(
        std::path::Path::new(&format!("{dir}/glass.csv")),
        std::path::Path::new(&format!("{dir}/glass.schema")),
    )
    .unwrap()
}

#[test]
fn glass_table_shape() {
    let g = glass();
    assert_eq!(g.len(), 214);
    assert_eq!(g.schema().len(), 10);
    assert_eq!(
        g.schema().attribute(g.schema().target()).cardinality(),
        Some(6)
    );
}

#[test]
fn stratified_split_is_a_deterministic_partition() {
    let g = glass();
    let spec = SplitSpec::Fractions {
        train: 0.6,
        val: 0.2,
        test: 0.2,
    };
    let a = split(&g, &spec, 11).unwrap();
    assert_eq!(a, split(&g, &spec, 11).unwrap());
    assert_ne!(a, split(&g, &spec, 12).unwrap());
    a.validate(g.len()).unwrap();
    let mut all: Vec<usize> = a
        .train
        .iter()
        .chain(&a.val)
        .chain(&a.test)
        .copied()
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..g.len()).collect::<Vec<_>>());
    // each class keeps roughly its share in every part
    for class in 0..6 {
        let total = (0..g.len())
            .filter(|&i| g.target_class(i) == Some(class))
            .count();
        let in_train = a
            .train
            .iter()
            .filter(|&&i| g.target_class(i) == Some(class))
            .count();
        assert!(
            (in_train as f64 - 0.6 * total as f64).abs() <= 2.0,
            "class {class}: {in_train} of {total}"
        );
    }
}

#[test]
fn split_files_round_trip() {
    let g = glass();
    let s = split(
        &g,
        &SplitSpec::Fractions {
            train: 0.5,
            val: 0.25,
            test: 0.25,
        },
        3,
    )
    .unwrap();
    let back = SplitIndices::parse(&s.to_text()).unwrap();
    assert_eq!(back, s);
    let explicit = split(&g, &SplitSpec::Explicit(back), 99).unwrap();
    assert_eq!(explicit, s);
    assert!(SplitIndices::parse("[train]\n0 1\n[val]\n1\n[test]\n2\n")
        .unwrap()
        .validate(3)
        .is_err());
}

#[test]
fn normalization_sees_only_training_rows() {
    let g = glass();
    let p = Prepared::with_fractions(g.clone(), [0.6, 0.2, 0.2], 5).unwrap();
    // rewrite every non-training cell; the statistics must not move
    let mut text = String::new();
    let csv = g.to_csv();
    let mut lines = csv.lines();
    text.push_str(lines.next().unwrap());
    text.push('\n');
    for (i, line) in lines.enumerate() {
        if p.split.train.contains(&i) {
            text.push_str(line);
        } else {
            let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
            for c in cells.iter_mut().take(9) {
                *c = "1000".into();
            }
            text.push_str(&cells.join(","));
        }
        text.push('\n');
    }
    let changed =
        Dataset::parse(&text, TableSchema::parse(&g.schema().to_text()).unwrap()).unwrap();
    let a = Normalizer::fit(&g, &p.split.train).unwrap();
    let b = Normalizer::fit(&changed, &p.split.train).unwrap();
    assert_eq!(a, b);
}

#[test]
fn test_predictions_depend_only_on_training_rows_and_the_query() {
    let ds = planted_neighbors(60, 4, 3, 0.5, 1).unwrap();
    let p = Prepared::with_fractions(ds, [0.5, 0.25, 0.25], 1).unwrap();
    let cfg = ModelConfig {
        embedding_dim: 4,
        blocks: 1,
        heads: 2,
        beta_scale: 1.0,
        dropout: Dropout::NONE,
        detach_memory: false,
        self_column: SelfColumn::MaskPattern,
    };
    let model = HopularModel::new(p.dataset.schema().clone(), cfg, 0).unwrap();
    let base = evaluate(&model, &p.train, &p.test).unwrap();
    // changing other test rows, or the query's own target, leaves a prediction unchanged
    let mut altered = p.test.clone();
    for row in altered.iter_mut().skip(1) {
        row[0] = hopular::data::EncodedValue {
            value: hopular::data::Encoded::Continuous(9.0),
            missing: false,
        };
    }
    altered[0][4] = hopular::data::EncodedValue {
        value: hopular::data::Encoded::Category(2),
        missing: false,
    };
    let again = evaluate(&model, &p.train, &altered).unwrap();
    assert_eq!(base.predictions[0], again.predictions[0]);
}
