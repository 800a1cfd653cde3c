//! Development-dataset pipeline: beam-power downsampling, relabeling,
//! train/validation splitting, min-max normalization, and (de)serialization
//! as JSON-lines and CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::argmax;
use crate::scalar::Real;
use crate::scene::Position;

/// One labeled observation: flattened visual features, GPS position, the
/// per-beam power vector, and the optimal beam index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<F = f64> {
    pub features: Vec<F>,
    pub position: Position<F>,
    pub power: Vec<F>,
    pub label: usize,
    pub true_xy: [F; 2],
}

/// Ordered collection of samples sharing one codebook size.
///
/// Model training treats the stored features and position as raw values
/// and scales them on the fly with the attached [`NormStats`]; use
/// [`Dataset::with_stats`] to attach fitted stats without rewriting the
/// samples. [`apply_normalization`] rewrites the samples in place and is
/// meant for exports and inspection, not as model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F = f64> {
    pub samples: Vec<Sample<F>>,
    pub normalization: Option<NormStats<F>>,
    pub codebook_size: usize,
}

impl<F: Real> Dataset<F> {
    pub fn with_stats(mut self, stats: NormStats<F>) -> Self {
        self.normalization = Some(stats);
        self
    }
}

/// Per-dimension min/max for position and features, fitted on the training
/// split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats<F = f64> {
    pub pos_min: [F; 2],
    pub pos_max: [F; 2],
    pub feat_min: Vec<F>,
    pub feat_max: Vec<F>,
}

impl<F: Real> NormStats<F> {
    /// Min-max scaling; a degenerate dimension (max == min) maps to 0.5.
    /// Values outside the fitted range are not clamped.
    fn scale(x: F, min: F, max: F) -> F {
        if max == min {
            F::of(0.5)
        } else {
            (x - min) / (max - min)
        }
    }

    /// Normalized `[lat, lon]` input for the position models.
    pub fn normalize_position(&self, pos: &Position<F>) -> [F; 2] {
        [
            Self::scale(pos.latitude, self.pos_min[0], self.pos_max[0]),
            Self::scale(pos.longitude, self.pos_min[1], self.pos_max[1]),
        ]
    }

    pub fn normalize_features(&self, features: &[F]) -> Result<Vec<F>> {
        if features.len() != self.feat_min.len() {
            return Err(Error::Dimension(format!(
                "expected {} features, got {}",
                self.feat_min.len(),
                features.len()
            )));
        }
        Ok(features
            .iter()
            .enumerate()
            .map(|(i, &x)| Self::scale(x, self.feat_min[i], self.feat_max[i]))
            .collect())
    }
}

/// Keeps the even-index elements 0, 2, ..., 62 of a 64-beam power vector.
pub fn downsample_power<F: Real>(power64: &[F]) -> Result<Vec<F>> {
    if power64.len() != 64 {
        return Err(Error::Dimension(format!(
            "downsample expects 64 beam powers, got {}",
            power64.len()
        )));
    }
    Ok(power64.iter().step_by(2).copied().collect())
}

/// Downsamples every power vector 64 -> 32 and relabels each sample with
/// the argmax of its downsampled powers (ties to the lowest index).
pub fn relabel<F: Real>(dataset: Dataset<F>) -> Result<Dataset<F>> {
    let samples = dataset
        .samples
        .into_iter()
        .map(|mut s| {
            let ds = downsample_power(&s.power)?;
            s.label = argmax(&ds);
            s.power = ds;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        normalization: dataset.normalization,
        codebook_size: 32,
    })
}

/// Seeded random split: a permutation of the samples, first
/// `floor(n * train_fraction)` to the training set.
pub fn split<F: Real>(
    dataset: &Dataset<F>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<F>, Dataset<F>)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.samples.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "split of {n} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let pick = |range: &[usize]| Dataset {
        samples: range.iter().map(|&i| dataset.samples[i].clone()).collect(),
        normalization: dataset.normalization.clone(),
        codebook_size: dataset.codebook_size,
    };
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..])))
}

/// Fits per-dimension min/max on the given (training) dataset.
pub fn fit_normalization<F: Real>(train: &Dataset<F>) -> Result<NormStats<F>> {
    let first = train
        .samples
        .first()
        .ok_or_else(|| Error::Config("cannot fit normalization on an empty dataset".into()))?;
    let dim = first.features.len();
    let mut stats = NormStats {
        pos_min: [F::infinity(); 2],
        pos_max: [F::neg_infinity(); 2],
        feat_min: vec![F::infinity(); dim],
        feat_max: vec![F::neg_infinity(); dim],
    };
    for s in &train.samples {
        if s.features.len() != dim {
            return Err(Error::Dimension("inconsistent feature dimensionality".into()));
        }
        let p = [s.position.latitude, s.position.longitude];
        for k in 0..2 {
            stats.pos_min[k] = stats.pos_min[k].min(p[k]);
            stats.pos_max[k] = stats.pos_max[k].max(p[k]);
        }
        for (i, &x) in s.features.iter().enumerate() {
            stats.feat_min[i] = stats.feat_min[i].min(x);
            stats.feat_max[i] = stats.feat_max[i].max(x);
        }
    }
    Ok(stats)
}

/// Applies min-max scaling to every sample's features and position and
/// attaches the stats to the dataset. Powers and labels are untouched.
pub fn apply_normalization<F: Real>(dataset: Dataset<F>, stats: &NormStats<F>) -> Result<Dataset<F>> {
    let samples = dataset
        .samples
        .into_iter()
        .map(|mut s| {
            s.features = stats.normalize_features(&s.features)?;
            let p = stats.normalize_position(&s.position);
            s.position = Position {
                latitude: p[0],
                longitude: p[1],
            };
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        normalization: Some(stats.clone()),
        codebook_size: dataset.codebook_size,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord<F> {
    features: Vec<F>,
    lat: F,
    lon: F,
    power: Vec<F>,
    label: usize,
    true_xy: [F; 2],
}

/// Writes one JSON object per line with keys
/// `{features, lat, lon, power, label, true_xy}`.
pub fn save_jsonl<F: Real>(dataset: &Dataset<F>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in &dataset.samples {
        let rec = JsonlRecord {
            features: s.features.clone(),
            lat: s.position.latitude,
            lon: s.position.longitude,
            power: s.power.clone(),
            label: s.label,
            true_xy: s.true_xy,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads a JSON-lines dataset; malformed records are reported with their
/// 1-based line number. The codebook size is taken from the power-vector
/// length, which must be consistent across records.
pub fn load_jsonl<F: Real>(path: &Path) -> Result<Dataset<F>> {
    let input = BufReader::new(File::open(path)?);
    let mut samples: Vec<Sample<F>> = Vec::new();
    let mut codebook_size = 0;
    let mut feat_dim = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord<F> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if samples.is_empty() {
            codebook_size = rec.power.len();
            feat_dim = rec.features.len();
        } else if rec.power.len() != codebook_size || rec.features.len() != feat_dim {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!(
                    "inconsistent dimensions: power {} (expected {codebook_size}), features {} (expected {feat_dim})",
                    rec.power.len(),
                    rec.features.len()
                ),
            });
        }
        if rec.label >= codebook_size {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("label {} out of range for {codebook_size} beams", rec.label),
            });
        }
        samples.push(Sample {
            features: rec.features,
            position: Position {
                latitude: rec.lat,
                longitude: rec.lon,
            },
            power: rec.power,
            label: rec.label,
            true_xy: rec.true_xy,
        });
    }
    Ok(Dataset {
        samples,
        normalization: None,
        codebook_size,
    })
}

/// CSV export with the JSONL columns flattened:
/// `feat_0.., lat, lon, p_0.., label, true_x, true_y`.
pub fn save_csv<F: Real>(dataset: &Dataset<F>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let feat_dim = dataset.samples.first().map_or(0, |s| s.features.len());
    let mut header: Vec<String> = (0..feat_dim).map(|i| format!("feat_{i}")).collect();
    header.push("lat".into());
    header.push("lon".into());
    header.extend((0..dataset.codebook_size).map(|i| format!("p_{i}")));
    header.push("label".into());
    header.push("true_x".into());
    header.push("true_y".into());
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row: Vec<String> = s.features.iter().map(|x| x.to_string()).collect();
        row.push(s.position.latitude.to_string());
        row.push(s.position.longitude.to_string());
        row.extend(s.power.iter().map(|x| x.to_string()));
        row.push(s.label.to_string());
        row.push(s.true_xy[0].to_string());
        row.push(s.true_xy[1].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
