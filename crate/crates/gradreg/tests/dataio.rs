//! Checks against the real MNIST files and a trained-softmax sanity check
//! for the synthetic generator.

use gradreg::data::{synthetic_blobs, Dataset};
use gradreg::model::MlpModel;
use gradreg::num::Rng;
use gradreg::train::{evaluate_error, fit, TrainConfig};

fn mnist_dir() -> std::path::PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(Into::into)
        .unwrap_or_else(|| {
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
        })
}

#[test]
fn mnist_shapes_and_ranges() {
    let dir = mnist_dir();
    let train = Dataset::from_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        10,
    )
    .expect("MNIST training pair under data/mnist (or $MNIST_DIR)");
    assert_eq!(train.len(), 60_000);
    assert_eq!(train.dim(), 784);
    assert!(train.inputs.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

    let test_labels =
        gradreg::data::load_idx_labels(dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(test_labels.len(), 10_000);

    let (first, rest) = train.split(50_000).unwrap();
    assert_eq!((first.len(), rest.len()), (50_000, 10_000));
}

#[test]
fn two_stage_mnist_smoke() {
    let dir = mnist_dir();
    let train = Dataset::from_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        10,
    )
    .expect("MNIST training pair under data/mnist (or $MNIST_DIR)");
    let (subset, _) = train.split(12_000).unwrap();
    let cfg = TrainConfig {
        learning_rate: 2.0,
        epochs: 2,
        batch_size: 500,
        momentum: 0.5,
        ..TrainConfig::default()
    };
    let model = MlpModel::new(&[784, 10], &mut Rng::new(7));
    let out = gradreg::train::train_two_stage(model, &subset, 10_000, &cfg).unwrap();
    assert!(out.stage1_loss.is_finite() && out.stage1_loss > 0.0);
    assert!(out.stage2_epochs <= 2 * cfg.epochs);
    let err = evaluate_error(&out.model, &subset);
    assert!(err < 0.15, "training error {err}");
}

#[test]
fn tight_blobs_are_linearly_separable() {
    let mut rng = Rng::new(12);
    let all = synthetic_blobs(&mut rng, 300, 2, 2, 0.02);
    let (train, test) = all.split(400).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 20,
        ..TrainConfig::default()
    };
    let model = MlpModel::new(&[2, 2], &mut Rng::new(1));
    let (model, _) = fit(model, &train, &test, &cfg).unwrap();
    let acc = 1.0 - evaluate_error(&model, &test);
    assert!(acc >= 0.99, "accuracy {acc}");
}
