use std::path::PathBuf;

use glstm::math::SeededRng;
use glstm::tasks::{load_mnist_idx, sequences_to_dataset, to_mnist_idx_bytes, Dataset, LabeledSequence};

/// Directory for inspectable test artifacts (gradient-norm curves,
/// openness maps); lives under target/ so it never pollutes the tree.
pub fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-artifacts");
    std::fs::create_dir_all(&dir).expect("create artifact dir");
    dir
}

/// Deterministic 10-class sequence-classification dataset in MNIST-like
/// IDX form (class-specific oscillation patterns plus noise, quantized to
/// bytes). The data is written out and re-read through the IDX parser so
/// the test pipeline matches the real one.
#[allow(dead_code)]
pub fn synthetic_digits_idx(
    train_count: usize,
    test_count: usize,
    seq_len: usize,
    seed: u64,
) -> (Dataset, Dataset) {
    assert_eq!(seq_len, 784, "IDX images are 28x28");
    let mut rng = SeededRng::new(seed);
    let mut generate = |count: usize| -> Vec<LabeledSequence> {
        (0..count)
            .map(|_| {
                let label = rng.below(10);
                let freq = 2.0 + label as f64;
                let phase = rng.next_f64() * std::f64::consts::TAU;
                let features = (0..seq_len)
                    .map(|t| {
                        let angle =
                            std::f64::consts::TAU * freq * t as f64 / seq_len as f64 + phase;
                        let value =
                            0.5 + 0.3 * angle.sin() + 0.08 * (rng.next_f64() - 0.5);
                        // Quantize exactly as a pixel byte would store it.
                        (value.clamp(0.0, 1.0) * 255.0).round() / 255.0
                    })
                    .collect();
                LabeledSequence { features, label }
            })
            .collect()
    };
    let train = generate(train_count);
    let test = generate(test_count);

    // Round-trip through IDX bytes and the real parser.
    let dir = artifact_dir();
    let load = |data: Vec<LabeledSequence>, tag: &str| -> Dataset {
        let (images, labels) = to_mnist_idx_bytes(&data, 28, 28);
        let image_path = dir.join(format!("digits-{tag}-images-idx3-ubyte"));
        let label_path = dir.join(format!("digits-{tag}-labels-idx1-ubyte"));
        std::fs::write(&image_path, images).expect("write images");
        std::fs::write(&label_path, labels).expect("write labels");
        let parsed = load_mnist_idx(&image_path, &label_path).expect("parse idx");
        sequences_to_dataset(&parsed, 10)
    };
    (load(train, "train"), load(test, "test"))
}
