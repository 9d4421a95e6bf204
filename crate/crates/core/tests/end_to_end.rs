use std::path::PathBuf;

use mpsr_core::inference::{classify, evaluate_accuracy};
use mpsr_core::io::idx::load_idx;
use mpsr_core::io::model_file::{load_model, save_model};
use mpsr_core::io::preprocess::{preprocess, PreprocessConfig};
use mpsr_core::pipeline::pretrain;
use mpsr_core::{FeatureMap, PixelOrder, ReductionPlan, Strategy};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MPSR_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"))
}

fn load(split: &str) -> mpsr_core::Dataset {
    let dir = mnist_dir();
    load_idx(
        dir.join(format!("{split}-images-idx3-ubyte")),
        dir.join(format!("{split}-labels-idx1-ubyte")),
    )
    .unwrap()
}

#[test]
fn bundled_subset_headers() {
    let train = load("train");
    let test = load("test");
    assert_eq!((train.len(), train.height, train.width), (5000, 28, 28));
    assert_eq!(test.len(), 2000);
    assert!(train.images.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(train.by_label().len(), 10);
    assert!(train.provenance.iter().any(|p| p.contains("sha256")));
}

#[test]
fn saved_model_classifies_identically() {
    let snake = PreprocessConfig {
        downscale: 4,
        binarize: None,
        order: PixelOrder::Snake,
    };
    let train = preprocess(&load("train"), &snake).unwrap().take_per_label(40);
    let test = preprocess(&load("test"), &snake).unwrap().take(300);
    let plan = ReductionPlan::new(8, Strategy::Tree);
    let set = pretrain(&train, FeatureMap::Phased, &plan).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.mpsm");
    save_model(&set, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, set);

    let a = evaluate_accuracy(&set, &test.images, &test.labels).unwrap();
    let b = evaluate_accuracy(&back, &test.images, &test.labels).unwrap();
    assert_eq!(a, b);
    assert!(a.accuracy > 0.3, "accuracy {}", a.accuracy);
    for (x, &p) in test.images.iter().zip(&a.predictions).take(20) {
        assert_eq!(classify(&back, x).unwrap(), p);
    }
}

#[test]
fn direct_and_tree_agree_when_lossless() {
    let cfg = PreprocessConfig {
        downscale: 4,
        ..Default::default()
    };
    let train = preprocess(&load("train"), &cfg).unwrap().take_per_label(6);
    let test = preprocess(&load("test"), &cfg).unwrap().take(200);
    let tree = pretrain(&train, FeatureMap::CosSin, &ReductionPlan::new(8, Strategy::Tree)).unwrap();
    let direct = pretrain(&train, FeatureMap::CosSin, &ReductionPlan::new(8, Strategy::Direct)).unwrap();
    for (t, d) in tree.models().iter().zip(direct.models()) {
        let f = t.state().fidelity(d.state()).unwrap();
        assert!(f > 1.0 - 1e-10, "label {}: {f}", t.label);
    }
    let a = evaluate_accuracy(&tree, &test.images, &test.labels).unwrap();
    let b = evaluate_accuracy(&direct, &test.images, &test.labels).unwrap();
    assert!((a.accuracy - b.accuracy).abs() <= 0.01);
}
