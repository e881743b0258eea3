//! Dataset generation and ingestion: the adding task, MNIST-style IDX
//! files flattened to scalar sequences, and fixed-permutation variants.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::lstm::SeqView;
use crate::math::SeededRng;
use crate::{Error, Result};

/// One adding-task sample: values x in [0,1), binary markers m with exactly
/// two ones, label y = sum of the two marked values.
#[derive(Clone, Debug)]
pub struct AddingSample {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub y: f64,
}

/// Supervised target for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Regression target vector.
    Value(Vec<f64>),
    /// Class index.
    Class(usize),
}

/// One training sequence stored flat: `dim` consecutive features per step.
#[derive(Clone, Debug)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Target,
}

impl Sample {
    pub fn view(&self, dim: usize) -> SeqView<'_> {
        SeqView::new(&self.features, dim)
    }
}

/// Immutable dataset; all sequences share one length and feature dimension.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub input_dim: usize,
    pub seq_len: usize,
    pub num_classes: Option<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Generates adding-task samples: x_n iid uniform in [0,1), two distinct
/// marker positions chosen uniformly at random.
pub fn gen_adding_batch(rng: &mut SeededRng, n: usize, count: usize) -> Vec<AddingSample> {
    assert!(n >= 2, "adding task needs sequence length >= 2");
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let first = rng.below(n);
            let mut second = rng.below(n - 1);
            if second >= first {
                second += 1;
            }
            let mut m = vec![0.0; n];
            m[first] = 1.0;
            m[second] = 1.0;
            let y = x[first] + x[second];
            AddingSample { x, m, y }
        })
        .collect()
}

/// Network encoding of the adding task: input at step n is the pair
/// (x_n, m_n), so D = 2; the target is the scalar sum.
pub fn adding_to_dataset(samples: &[AddingSample]) -> Dataset {
    let seq_len = samples.first().map_or(0, |s| s.x.len());
    let data = samples
        .iter()
        .map(|s| {
            let mut features = Vec::with_capacity(s.x.len() * 2);
            for (xv, mv) in s.x.iter().zip(&s.m) {
                features.push(*xv);
                features.push(*mv);
            }
            Sample {
                features,
                target: Target::Value(vec![s.y]),
            }
        })
        .collect();
    Dataset {
        samples: data,
        input_dim: 2,
        seq_len,
        num_classes: None,
    }
}

/// CSV export of adding-task samples: header `x_1..x_N,m_1..m_N,y`.
pub fn write_adding_csv<W: Write>(samples: &[AddingSample], mut w: W) -> std::io::Result<()> {
    let n = samples.first().map_or(0, |s| s.x.len());
    let mut header = Vec::with_capacity(2 * n + 1);
    for i in 1..=n {
        header.push(format!("x_{i}"));
    }
    for i in 1..=n {
        header.push(format!("m_{i}"));
    }
    header.push("y".to_string());
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        let mut row: Vec<String> = s.x.iter().map(|v| format!("{v:.16e}")).collect();
        row.extend(s.m.iter().map(|v| format!("{}", *v as i64)));
        row.push(format!("{:.16e}", s.y));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// A label plus a scalar sequence in [0, 1] (one pixel per step, D = 1).
#[derive(Clone, Debug)]
pub struct LabeledSequence {
    pub features: Vec<f64>,
    pub label: usize,
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: file truncated at offset {offset}")))
}

/// Parses a big-endian IDX image/label file pair into scalar sequences.
/// Pixels are scaled to [0, 1] by dividing by 255; images are flattened
/// row-major.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledSequence>> {
    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;

    let image_magic = read_be_u32(&image_bytes, 0, "image file")?;
    if image_magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file magic 0x{image_magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )));
    }
    let count = read_be_u32(&image_bytes, 4, "image file")? as usize;
    let rows = read_be_u32(&image_bytes, 8, "image file")? as usize;
    let cols = read_be_u32(&image_bytes, 12, "image file")? as usize;
    let pixels = rows * cols;
    let expected_len = 16 + count * pixels;
    if image_bytes.len() != expected_len {
        return Err(Error::Format(format!(
            "image file length {} does not match header ({count} x {rows} x {cols})",
            image_bytes.len()
        )));
    }

    let label_magic = read_be_u32(&label_bytes, 0, "label file")?;
    if label_magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label file magic 0x{label_magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )));
    }
    let label_count = read_be_u32(&label_bytes, 4, "label file")? as usize;
    if label_bytes.len() != 8 + label_count {
        return Err(Error::Format(format!(
            "label file length {} does not match header count {label_count}",
            label_bytes.len()
        )));
    }
    if label_count != count {
        return Err(Error::Format(format!(
            "image count {count} does not match label count {label_count}"
        )));
    }

    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let start = 16 + idx * pixels;
        let features = image_bytes[start..start + pixels]
            .iter()
            .map(|&p| p as f64 / 255.0)
            .collect();
        out.push(LabeledSequence {
            features,
            label: label_bytes[8 + idx] as usize,
        });
    }
    Ok(out)
}

/// Serializes sequences back to an IDX image/label byte pair. Features must
/// be `p / 255` values; parsing then re-serializing a file reproduces its
/// bytes exactly.
pub fn to_mnist_idx_bytes(data: &[LabeledSequence], rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    let pixels = rows * cols;
    let mut image_bytes = Vec::with_capacity(16 + data.len() * pixels);
    image_bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(data.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut label_bytes = Vec::with_capacity(8 + data.len());
    label_bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(data.len() as u32).to_be_bytes());
    for seq in data {
        assert_eq!(seq.features.len(), pixels, "sequence length mismatch");
        for &f in &seq.features {
            image_bytes.push((f * 255.0).round() as u8);
        }
        label_bytes.push(seq.label as u8);
    }
    (image_bytes, label_bytes)
}

pub fn sequences_to_dataset(data: &[LabeledSequence], num_classes: usize) -> Dataset {
    let seq_len = data.first().map_or(0, |s| s.features.len());
    Dataset {
        samples: data
            .iter()
            .map(|s| Sample {
                features: s.features.clone(),
                target: Target::Class(s.label),
            })
            .collect(),
        input_dim: 1,
        seq_len,
        num_classes: Some(num_classes),
    }
}

/// Fixed random permutation of sequence positions, derived from a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationSpec {
    pub seed: u64,
    pub perm: Vec<usize>,
}

impl PermutationSpec {
    pub fn from_seed(seed: u64, len: usize) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        let mut rng = SeededRng::with_stream(seed, 0x70_65_72_6d); // "perm"
        rng.shuffle(&mut perm);
        PermutationSpec { seed, perm }
    }

    pub fn identity(len: usize) -> Self {
        PermutationSpec {
            seed: 0,
            perm: (0..len).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        PermutationSpec {
            seed: self.seed,
            perm: inv,
        }
    }
}

/// Reindexes every sequence by the same permutation; labels unchanged.
/// Panics if any sequence length differs from the permutation length.
pub fn permute_dataset(data: &[LabeledSequence], spec: &PermutationSpec) -> Vec<LabeledSequence> {
    data.iter()
        .map(|s| {
            assert_eq!(
                s.features.len(),
                spec.perm.len(),
                "sequence length does not match permutation"
            );
            LabeledSequence {
                features: spec.perm.iter().map(|&p| s.features[p]).collect(),
                label: s.label,
            }
        })
        .collect()
}
