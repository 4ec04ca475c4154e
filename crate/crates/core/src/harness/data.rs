//! Dataset ingestion, standardization and the built-in synthetic generator.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::predictors::Dataset;

/// Reads a numeric CSV with one header row; the last column is the label.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let width = reader
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .len();
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one feature column and a label column".into(),
        ));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in reader.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("column {} is not numeric: {field:?}", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    message: format!("column {} is not finite", j + 1),
                });
            }
            if j + 1 == width {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidDataset(format!("{} has no data rows", path.display())));
    }
    Dataset::new(features, labels, width - 1)
}

/// Per-column affine map `(v - mean) / scale`, fit on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population standard deviation; constant columns keep scale 1.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = (rows.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows.chunks(dim) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, rows: &[f64]) -> Vec<f64> {
        let dim = self.mean.len();
        rows.chunks(dim)
            .flat_map(|r| {
                r.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
            })
            .collect()
    }

    pub fn invert(&self, column: usize, v: f64) -> f64 {
        v * self.scale[column] + self.mean[column]
    }
}

/// `y = slope·x + (noise + hetero·|x|)·ε` with `x, ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub slope: f64,
    pub noise: f64,
    pub hetero: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 2000,
            slope: 1.0,
            noise: 1.0,
            hetero: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self, rng: &mut impl Rng) -> Result<Dataset> {
        let xs: Vec<f64> = (0..self.size).map(|_| StandardNormal.sample(rng)).collect();
        let ys = xs
            .iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(rng);
                self.slope * x + (self.noise + self.hetero * x.abs()) * e
            })
            .collect();
        Dataset::new(xs, ys, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_numeric_csv() {
        let f = write("a,b,y\n1,2,3\n4,5,6.5\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.row(1), &[4.0, 5.0]);
        assert_eq!(d.labels(), &[3.0, 6.5]);
    }

    #[test]
    fn header_only_is_empty() {
        let f = write("a,y\n");
        assert!(matches!(load_csv(f.path()), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn bad_field_reports_line() {
        let f = write("a,y\n1,2\n3,x\n");
        assert!(matches!(load_csv(f.path()), Err(Error::Parse { row: 3, .. })));
        let g = write("a,y\n1,2\n3\n");
        assert!(matches!(load_csv(g.path()), Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn standardizer_round_trip() {
        let rows = [1.0, 10.0, 3.0, 10.0, 5.0, 10.0];
        let s = Standardizer::fit(&rows, 2);
        let z = s.apply(&rows);
        assert_eq!(z[1], 0.0);
        let m: f64 = z.iter().step_by(2).sum();
        assert!(m.abs() < 1e-12);
        assert!((s.invert(0, z[4]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_is_seeded() {
        let spec = SyntheticSpec { size: 50, ..Default::default() };
        let a = spec.generate(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = spec.generate(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }
}
