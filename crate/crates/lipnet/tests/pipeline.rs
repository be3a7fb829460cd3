use std::f64::consts::SQRT_2;

use lipnet::experiments::{
    build_classifier, fit_toy, load_splits, run_certify, run_train, train_classifier, CertifyOptions, DataOptions,
    ToyOptions, TrainOptions,
};
use lipnet::formats::{read_network, write_network};
use lipnet_core::nn::{certify, InMemoryDataset, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn perfect_margin_model_certifies_everything_it_gets_right() {
    let net = Network::empty(2);
    let data = InMemoryDataset::classification(
        vec![vec![3.0, 0.0], vec![0.0, 3.0], vec![0.0, 3.0]],
        vec![0, 1, 0],
        2,
    )
    .unwrap();
    let report = certify(&net, &data, SQRT_2).unwrap();
    assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-15);
    for cra in report.cra {
        assert_eq!(cra, report.accuracy);
    }
}

#[test]
fn untrained_model_has_almost_no_cra_at_one() {
    let opts = TrainOptions::default();
    let splits = load_splits(&opts.data, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = build_classifier(&opts, 2, 2, &mut rng).unwrap();
    let report = certify(&net, &splits.test, SQRT_2).unwrap();
    assert!(report.cra[3] < 0.05, "{:?}", report.cra);
}

#[test]
fn moons_training_separates_and_stays_lipschitz() {
    let run = train_classifier(&TrainOptions { seed: 11, ..TrainOptions::default() }).unwrap();
    assert!(run.train_report.accuracy > 0.9, "{}", run.train_report.accuracy);
    assert!(run.audit.passed, "{:?}", run.audit);
    assert_eq!(run.history.records.len(), 20);
    assert!(run.history.records.iter().all(|r| r.cra.is_some()));
}

#[test]
fn checkpoint_reproduces_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions { epochs: 3, seed: 5, ..TrainOptions::default() };
    let run = train_classifier(&opts).unwrap();
    let path = dir.path().join("net.json");
    write_network(&path, &run.network).unwrap();
    let back = read_network(&path).unwrap();
    let splits = load_splits(&opts.data, opts.seed).unwrap();
    let a = certify(&run.network, &splits.test, SQRT_2).unwrap();
    let b = certify(&back, &splits.test, SQRT_2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn certify_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    write_network(&path, &Network::empty(3)).unwrap();
    let opts = CertifyOptions {
        net: path,
        data: DataOptions::default(),
        split: lipnet::experiments::SplitArg::Test,
        seed: 0,
        factor: SQRT_2,
        perturbations: 0,
    };
    let err = run_certify(&opts, &dir.path().join("c.csv")).unwrap_err();
    assert_eq!(err.kind(), "checkpoint");
}

#[test]
fn train_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions { epochs: 2, seed: 2, ..TrainOptions::default() };
    run_train(&opts, &dir.path().join("a")).unwrap();
    run_train(&opts, &dir.path().join("b")).unwrap();
    for name in ["history.csv", "checkpoint.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn short_toy_fit_reduces_loss() {
    let run = fit_toy(&ToyOptions { epochs: 20, ..ToyOptions::default() }).unwrap();
    let first = run.history.records.first().unwrap().loss;
    assert!(run.final_mse < first, "{first} -> {}", run.final_mse);
    assert_eq!(run.samples.x.len(), run.samples.prediction.len());
    assert_eq!(run.samples.x[0], -3.0);
    assert_eq!(*run.samples.x.last().unwrap(), 3.0);
}

fn write_fake_cifar(dir: &std::path::Path, per_file: usize) {
    use lipnet::data::{CIFAR_RECORD_BYTES, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in CIFAR_TRAIN_FILES.iter().chain([&CIFAR_TEST_FILE]) {
        let mut bytes = Vec::with_capacity(per_file * CIFAR_RECORD_BYTES);
        for _ in 0..per_file {
            let label: u8 = rng.random_range(0..10);
            bytes.push(label);
            // Brightness depends on the label so there is something to learn.
            bytes.extend((1..CIFAR_RECORD_BYTES).map(|_| label * 20 + rng.random_range(0..40u8)));
        }
        std::fs::write(dir.join(name), bytes).unwrap();
    }
}

#[test]
fn cifar_smoke_run_populates_cra_columns() {
    let data_dir = tempfile::tempdir().unwrap();
    write_fake_cifar(data_dir.path(), 20);
    let out = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        data: DataOptions {
            dataset: lipnet::experiments::DatasetArg::Cifar10,
            data_dir: Some(data_dir.path().to_path_buf()),
            ..DataOptions::default()
        },
        width: 64,
        depth: 4,
        epochs: 2,
        augment: true,
        audit_trials: 50,
        ..TrainOptions::default()
    };
    let outcome = run_train(&opts, out.path()).unwrap();
    assert!(outcome.passed, "{}", outcome.report);
    let history = std::fs::read_to_string(out.path().join("history.csv")).unwrap();
    let rows: Vec<&str> = history.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row.split(',').all(|field| !field.is_empty()), "{row}");
    }
    let net = read_network(&out.path().join("checkpoint.json")).unwrap();
    assert_eq!((net.input_dim(), net.output_dim()), (3072, 10));
}
