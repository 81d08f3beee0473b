//! Small classification datasets: synthetic generators plus CSV ingestion.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TwoMoons,
    Blobs,
    Spirals,
    Csv,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::TwoMoons => "two_moons",
            DatasetKind::Blobs => "blobs",
            DatasetKind::Spirals => "spirals",
            DatasetKind::Csv => "csv",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [DatasetKind::TwoMoons, DatasetKind::Blobs, DatasetKind::Spirals, DatasetKind::Csv]
            .into_iter()
            .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub samples: usize,
    pub noise: f64,
    /// Number of blobs or spiral arms; ignored by two_moons and csv.
    pub classes: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DatasetKind::TwoMoons,
            samples: 1000,
            noise: 0.2,
            classes: 3,
            val_frac: 0.2,
            seed: 1,
            path: None,
        }
    }
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    pub dim: usize,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub classes: usize,
}

impl Dataset {
    /// Accuracy of always predicting the most frequent training class.
    pub fn chance(&self) -> f64 {
        let mut counts = vec![0usize; self.classes];
        for &y in &self.train.y {
            counts[y] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.train.len().max(1) as f64
    }
}

pub fn make_dataset(cfg: &DataConfig) -> Result<Dataset, Error> {
    if !(cfg.val_frac > 0.0 && cfg.val_frac < 1.0) {
        return Err(Error::Config("val_frac must lie in (0, 1)".into()));
    }
    let (x, y, dim) = match cfg.kind {
        DatasetKind::Csv => {
            let path = cfg.path.as_ref().ok_or_else(|| Error::Config("csv dataset needs a path".into()))?;
            read_csv(path)?
        }
        kind => {
            if cfg.samples == 0 || cfg.noise < 0.0 {
                return Err(Error::Config("samples must be positive and noise nonnegative".into()));
            }
            if kind != DatasetKind::TwoMoons && cfg.classes < 2 {
                return Err(Error::Config("blobs and spirals need at least 2 classes".into()));
            }
            let (x, y) = synthesize(kind, cfg);
            (x, y, 2)
        }
    };
    split(x, y, dim, cfg)
}

fn synthesize(kind: DatasetKind, cfg: &DataConfig) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).expect("noise validated");
    let n = cfg.samples;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let pi = std::f64::consts::PI;
    for i in 0..n {
        let (px, py, label) = match kind {
            DatasetKind::TwoMoons => {
                let label = i % 2;
                let theta = rng.gen_range(0.0..pi);
                if label == 0 {
                    (theta.cos(), theta.sin(), 0)
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin(), 1)
                }
            }
            DatasetKind::Blobs => {
                let label = i % cfg.classes;
                let angle = 2.0 * pi * label as f64 / cfg.classes as f64;
                (3.0 * angle.cos(), 3.0 * angle.sin(), label)
            }
            DatasetKind::Spirals => {
                let label = i % cfg.classes;
                let r: f64 = rng.gen_range(0.05..1.0);
                let angle = 2.0 * pi * (1.5 * r + label as f64 / cfg.classes as f64);
                (r * angle.cos(), r * angle.sin(), label)
            }
            DatasetKind::Csv => unreachable!("csv is read, not generated"),
        };
        let spread = if kind == DatasetKind::Blobs { 5.0 } else { 1.0 };
        x.push(px + spread * noise.sample(&mut rng));
        x.push(py + spread * noise.sample(&mut rng));
        y.push(label);
    }
    (x, y)
}

/// Reads a header row plus numeric rows; the `label` column holds class ids
/// (any integers, remapped to `0..classes` in sorted order).
fn read_csv(path: &std::path::Path) -> Result<(Vec<f64>, Vec<usize>, usize), Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
    let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Csv { line: 1, msg: "missing `label` column".into() })?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::Csv { line: 1, msg: "no feature columns".into() });
    }
    let mut x = Vec::new();
    let mut raw_labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if j == label_col {
                let l: i64 = field
                    .parse()
                    .map_err(|_| Error::Csv { line, msg: format!("label `{field}` is not an integer") })?;
                raw_labels.push(l);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Csv { line, msg: format!("feature `{field}` is not a number") })?;
                if !v.is_finite() {
                    return Err(Error::Csv { line, msg: format!("feature `{field}` is not finite") });
                }
                x.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Csv { line: 2, msg: "no data rows".into() });
    }
    let mut distinct = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let y = raw_labels.iter().map(|l| distinct.binary_search(l).expect("present")).collect();
    Ok((x, y, dim))
}

/// Shuffles, splits off the validation fraction and standardizes features
/// with training statistics.
fn split(x: Vec<f64>, y: Vec<usize>, dim: usize, cfg: &DataConfig) -> Result<Dataset, Error> {
    let n = y.len();
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a));
    let n_val = ((n as f64) * cfg.val_frac).round() as usize;
    let (val_idx, train_idx) = idx.split_at(n_val);
    let take = |ids: &[usize]| Split {
        x: ids.iter().flat_map(|&i| x[i * dim..(i + 1) * dim].iter().copied()).collect(),
        y: ids.iter().map(|&i| y[i]).collect(),
        dim,
    };
    let mut train = take(train_idx);
    let mut val = take(val_idx);
    for c in 0..classes {
        if !train.y.contains(&c) || !val.y.contains(&c) {
            return Err(Error::Config(format!("class {c} is missing from the train or validation split")));
        }
    }
    for j in 0..dim {
        let col = || train.x.iter().skip(j).step_by(dim);
        let mean = col().sum::<f64>() / train.len() as f64;
        let var = col().map(|v| (v - mean) * (v - mean)).sum::<f64>() / train.len() as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for s in [&mut train, &mut val] {
            for v in s.x.iter_mut().skip(j).step_by(dim) {
                *v = (*v - mean) / sd;
            }
        }
    }
    Ok(Dataset { train, val, classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn two_moons_shape() {
        let d = make_dataset(&DataConfig::default()).unwrap();
        assert_eq!(d.train.len() + d.val.len(), 1000);
        assert_eq!(d.val.len(), 200);
        assert_eq!(d.classes, 2);
        assert_eq!(d, make_dataset(&DataConfig::default()).unwrap());
    }

    #[test]
    fn blobs_and_spirals_classes() {
        let d = make_dataset(&DataConfig { kind: DatasetKind::Blobs, ..Default::default() }).unwrap();
        assert_eq!(d.classes, 3);
        let d = make_dataset(&DataConfig { kind: DatasetKind::Spirals, classes: 2, ..Default::default() }).unwrap();
        assert_eq!(d.classes, 2);
        assert!((d.chance() - 0.5).abs() < 0.05);
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn csv_cfg(f: &tempfile::NamedTempFile) -> DataConfig {
        DataConfig { kind: DatasetKind::Csv, path: Some(f.path().to_path_buf()), val_frac: 0.5, ..Default::default() }
    }

    #[test]
    fn csv_reads_and_remaps_labels() {
        let f = csv_file("a,label,b\n1,5,2\n2,7,3\n3,5,4\n4,7,5\n");
        let d = make_dataset(&csv_cfg(&f)).unwrap();
        assert_eq!(d.classes, 2);
        assert_eq!(d.train.dim, 2);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let f = csv_file("a,b\n1,2\n");
        let e = make_dataset(&csv_cfg(&f)).unwrap_err();
        assert!(e.to_string().contains("label"), "{e}");

        let f = csv_file("a,label\n1,0\nx,1\n");
        let e = make_dataset(&csv_cfg(&f)).unwrap_err();
        assert!(matches!(e, Error::Csv { line: 3, .. }), "{e}");
    }
}
