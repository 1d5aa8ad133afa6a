use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `n` samples in ℝ^m with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<f64>,
    m: usize,
    intrinsic_dim: Option<usize>,
    params: Option<Vec<f64>>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    /// Wraps row-major `points` with `m` columns. Every entry must be finite.
    pub fn new(points: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || points.is_empty() || points.len() % m != 0 {
            return Err(Error::InvalidShape {
                shape: vec![points.len() / m.max(1), m],
                len: points.len(),
            });
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in row {}",
                i / m
            )));
        }
        Ok(PointCloud {
            points,
            m,
            intrinsic_dim: None,
            params: None,
            labels: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let t = Tensor::from_rows(rows)?;
        let m = t.cols();
        PointCloud::new(t.into_data(), m)
    }

    pub fn with_intrinsic_dim(mut self, d: usize) -> Self {
        self.intrinsic_dim = Some(d);
        self
    }

    /// Attaches ground-truth intrinsic coordinates, `intrinsic_dim` per row.
    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        let d = self
            .intrinsic_dim
            .ok_or_else(|| Error::invalid("parameters need an intrinsic dimension"))?;
        if params.len() != self.n() * d {
            return Err(Error::DimensionMismatch {
                expected: self.n() * d,
                actual: params.len(),
            });
        }
        self.params = Some(params);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn intrinsic_dim(&self) -> Option<usize> {
        self.intrinsic_dim
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.m)
    }

    pub fn params(&self) -> Option<&[f64]> {
        self.params.as_deref()
    }

    /// Ground-truth parameters of row `i`.
    pub fn param(&self, i: usize) -> Option<&[f64]> {
        let d = self.intrinsic_dim?;
        self.params.as_ref().map(|p| &p[i * d..(i + 1) * d])
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// New cloud made of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<PointCloud> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange {
                what: "points",
                index: bad,
                len: self.n(),
            });
        }
        let mut points = Vec::with_capacity(indices.len() * self.m);
        indices
            .iter()
            .for_each(|&i| points.extend_from_slice(self.row(i)));
        let mut out = PointCloud::new(points, self.m)?;
        out.intrinsic_dim = self.intrinsic_dim;
        if let (Some(p), Some(d)) = (&self.params, self.intrinsic_dim) {
            out.params = Some(
                indices
                    .iter()
                    .flat_map(|&i| p[i * d..(i + 1) * d].to_vec())
                    .collect(),
            );
        }
        if let Some(l) = &self.labels {
            out.labels = Some(indices.iter().map(|&i| l[i]).collect());
        }
        Ok(out)
    }

    /// Shuffles with `seed` and returns `(train, test)` where `train` holds
    /// `round(train_fraction * n)` rows (at least one).
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(PointCloud, PointCloud)> {
        if !(0.0..1.0).contains(&train_fraction) || self.n() < 2 {
            return Err(Error::invalid(format!(
                "cannot split {} rows with train fraction {train_fraction}",
                self.n()
            )));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = ((train_fraction * self.n() as f64).round() as usize).clamp(1, self.n() - 1);
        Ok((self.subset(&idx[..k])?, self.subset(&idx[k..])?))
    }

    /// The points as a `[n, m]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n(), self.m, self.points.clone()).expect("validated shape")
    }

    /// Writes CSV with header `x0..x{m-1}[,p0..p{d-1}][,label]`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.m).map(|i| format!("x{i}")).collect();
        let d = self.intrinsic_dim.unwrap_or(0);
        if self.params.is_some() {
            header.extend((0..d).map(|i| format!("p{i}")));
        }
        if self.labels.is_some() {
            header.push("label".into());
        }
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|x| format!("{x:?}")).collect();
            if let Some(p) = self.param(i) {
                rec.extend(p.iter().map(|x| format!("{x:?}")));
            }
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads the format produced by [`PointCloud::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<PointCloud> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let xs: Vec<usize> = column_indices(&header, 'x');
        let ps: Vec<usize> = column_indices(&header, 'p');
        let label = header.iter().position(|h| h == "label");
        if xs.is_empty() {
            return Err(Error::invalid("CSV has no x0.. columns"));
        }
        let (mut points, mut params, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| {
                    Error::invalid(format!("CSV row {}: column {}: {e}", line + 1, header[i]))
                })
            };
            for &i in &xs {
                points.push(num(i)?);
            }
            for &i in &ps {
                params.push(num(i)?);
            }
            if let Some(i) = label {
                labels.push(num(i)? as u32);
            }
        }
        let mut cloud = PointCloud::new(points, xs.len())?;
        if !ps.is_empty() {
            cloud = cloud.with_intrinsic_dim(ps.len()).with_params(params)?;
        }
        if label.is_some() {
            cloud = cloud.with_labels(labels)?;
        }
        Ok(cloud)
    }

    pub fn load_csv(path: &Path) -> Result<PointCloud> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        PointCloud::read_csv(std::io::BufReader::new(f))
    }
}

/// Positions of columns named `{prefix}0`, `{prefix}1`, ... in order.
fn column_indices(header: &[String], prefix: char) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0.. {
        let name = format!("{prefix}{k}");
        match header.iter().position(|h| *h == name) {
            Some(i) => out.push(i),
            None => break,
        }
    }
    out
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("CSV: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_params_and_labels() {
        let c = PointCloud::from_rows(&[[0.1, 0.2], [1.0 / 3.0, -4.0]])
            .unwrap()
            .with_intrinsic_dim(1)
            .with_params(vec![0.5, 0.25])
            .unwrap()
            .with_labels(vec![3, 7])
            .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,p0,label\n"), "{text}");
        assert_eq!(PointCloud::read_csv(&buf[..]).unwrap(), c);
    }

    #[test]
    fn rejects_non_finite_rows() {
        assert!(PointCloud::new(vec![0.0, f64::NAN], 2).is_err());
        assert!(PointCloud::new(vec![0.0, 1.0, 2.0], 2).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let c = PointCloud::new((0..20).map(f64::from).collect(), 1).unwrap();
        let (a, b) = c.split(0.9, 4).unwrap();
        assert_eq!((a.n(), b.n()), (18, 2));
        let mut all: Vec<f64> = a.points().iter().chain(b.points()).cloned().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, c.points());
    }
}
