use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// One streamed observation. Features are normalized to [0,1]; the label
/// is carried for evaluation only and never reaches the clustering path.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub features: Array1<f64>,
    pub label: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Idx,
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: Option<usize>,
    pub source: DataSource,
}

fn read_u32_be(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads an image/label pair in the IDX binary layout: big-endian magic,
/// big-endian u32 dimensions, then raw bytes. Pixels map to [0,1] by /255.
pub fn read_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<(Vec<StreamSample>, DatasetMeta)> {
    let mut images = BufReader::new(File::open(image_path.as_ref())?);
    let magic = read_u32_be(&mut images)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let n_images = read_u32_be(&mut images)? as usize;
    let rows = read_u32_be(&mut images)? as usize;
    let cols = read_u32_be(&mut images)? as usize;
    let n_features = rows * cols;
    let mut pixels = vec![0u8; n_images * n_features];
    images.read_exact(&mut pixels)?;

    let mut labels = BufReader::new(File::open(label_path.as_ref())?);
    let label_magic = read_u32_be(&mut labels)?;
    if label_magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {label_magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = read_u32_be(&mut labels)? as usize;
    if n_labels != n_images {
        return Err(Error::Inconsistent(format!(
            "{n_images} images but {n_labels} labels"
        )));
    }
    let mut label_bytes = vec![0u8; n_labels];
    labels.read_exact(&mut label_bytes)?;

    let samples: Vec<StreamSample> = pixels
        .chunks_exact(n_features)
        .zip(&label_bytes)
        .map(|(chunk, &label)| StreamSample {
            features: chunk.iter().map(|&b| b as f64 / 255.0).collect(),
            label: Some(label as i64),
        })
        .collect();
    let meta = DatasetMeta {
        n_samples: samples.len(),
        n_features,
        n_classes: Some(distinct_labels(&samples)),
        source: DataSource::Idx,
    };
    Ok((samples, meta))
}

fn distinct_labels(samples: &[StreamSample]) -> usize {
    let mut seen: Vec<i64> = Vec::new();
    for s in samples {
        if let Some(l) = s.label {
            if !seen.contains(&l) {
                seen.push(l);
            }
        }
    }
    seen.len()
}

/// Reads a headered numeric CSV, min-max normalizing every feature column
/// to [0,1] over the whole file. Constant columns map to 0. The label
/// column is selected by header name, or by zero-based index if the
/// argument parses as an integer and matches no header.
pub fn read_csv(
    path: impl AsRef<Path>,
    label_column: &str,
) -> Result<(Vec<StreamSample>, DatasetMeta)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let label_idx = match headers.iter().position(|h| h == label_column) {
        Some(i) => i,
        None => match label_column.parse::<usize>() {
            Ok(i) if i < headers.len() => i,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "label column '{label_column}' not found among {} columns",
                    headers.len()
                )))
            }
        },
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::ParseRow {
            row: row_no,
            detail: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(record.len().saturating_sub(1));
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::ParseRow {
                row: row_no,
                detail: format!("non-numeric value '{field}' in column {j}"),
            })?;
            if j == label_idx {
                if value.fract() != 0.0 {
                    return Err(Error::ParseRow {
                        row: row_no,
                        detail: format!("non-integer label '{field}'"),
                    });
                }
                labels.push(value as i64);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let n_features = rows[0].len();
    let mut minima = vec![f64::INFINITY; n_features];
    let mut maxima = vec![f64::NEG_INFINITY; n_features];
    for row in &rows {
        for (j, &v) in row.iter().enumerate() {
            minima[j] = minima[j].min(v);
            maxima[j] = maxima[j].max(v);
        }
    }
    let samples: Vec<StreamSample> = rows
        .into_iter()
        .zip(labels)
        .map(|(row, label)| StreamSample {
            features: row
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let span = maxima[j] - minima[j];
                    if span == 0.0 {
                        0.0
                    } else {
                        (v - minima[j]) / span
                    }
                })
                .collect(),
            label: Some(label),
        })
        .collect();
    let meta = DatasetMeta {
        n_samples: samples.len(),
        n_features,
        n_classes: Some(distinct_labels(&samples)),
        source: DataSource::Csv,
    };
    Ok((samples, meta))
}

/// Synthetic stream: `k` isotropic Gaussian blobs in [0,1]^dim with
/// pairwise center separation of at least `separation`, sample noise
/// std `noise`, clipped to the unit cube. The emitted order interleaves
/// the blobs (a seeded shuffle), so every cluster stays active throughout
/// the stream. Deterministic per seed.
pub fn make_blobs(
    k: usize,
    n_per: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<(Vec<StreamSample>, DatasetMeta)> {
    if k == 0 || dim == 0 || n_per == 0 {
        return Err(Error::InvalidInput(
            "k, n_per and dim must be positive".into(),
        ));
    }
    if !(separation >= 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidInput(
            "separation and noise must be nonnegative".into(),
        ));
    }
    if separation > (dim as f64).sqrt() {
        return Err(Error::Geometry(format!(
            "separation {separation} exceeds the unit-cube diameter {}",
            (dim as f64).sqrt()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while centers.len() < k {
        attempts += 1;
        if attempts > 10_000 * k {
            return Err(Error::Geometry(format!(
                "could not place {k} centers with pairwise separation {separation}"
            )));
        }
        let cand: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let ok = centers.iter().all(|c| {
            c.iter()
                .zip(&cand)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                >= separation
        });
        if ok {
            centers.push(cand);
        }
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut samples: Vec<StreamSample> = Vec::with_capacity(k * n_per);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            let features: Array1<f64> = center
                .iter()
                .map(|&c| (c + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            samples.push(StreamSample {
                features,
                label: Some(label as i64),
            });
        }
    }
    samples.shuffle(&mut rng);
    let meta = DatasetMeta {
        n_samples: samples.len(),
        n_features: dim,
        n_classes: Some(k),
        source: DataSource::Synthetic,
    };
    Ok((samples, meta))
}

/// Iteration order for a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    AsIs,
    Shuffled(u64),
}

/// Turns a loaded dataset into a sample-by-sample iterator, optionally
/// applying a seeded uniform permutation first.
pub fn stream(mut samples: Vec<StreamSample>, order: Order) -> std::vec::IntoIter<StreamSample> {
    if let Order::Shuffled(seed) = order {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        samples.shuffle(&mut rng);
    }
    samples.into_iter()
}
