//! Regression instances and the sample covariance they induce.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A regression instance `y = x θ + w`: `x` is `n × p`, `y` has length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::Input(format!("design must be non-empty, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::Input(format!(
                "response has {} entries but design has {n} rows",
                y.len()
            )));
        }
        if let Some(((r, c), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite design entry at row {r}, column {c}")));
        }
        if let Some((r, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite response at row {r}")));
        }
        Ok(Dataset { x, y })
    }

    /// Loads `y, x_1, ..., x_p` rows from a CSV file.
    pub fn from_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::Input(format!(
                            "{}: record {}: cannot parse {field:?} as a number",
                            path.display(),
                            line + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Builds a dataset from rows laid out as `[y, x_1, ..., x_p]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Input("no data rows".into()));
        }
        let width = rows[0].len();
        if width < 2 {
            return Err(Error::Input("need a response column and at least one covariate".into()));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Input(format!(
                "row {} has {} fields, expected {width}",
                i + 1,
                row.len()
            )));
        }
        let y = Array1::from_iter(rows.iter().map(|r| r[0]));
        let x = Array2::from_shape_fn((n, width - 1), |(i, j)| rows[i][j + 1]);
        Dataset::new(x, y)
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn scale(&self) -> ProblemScale {
        ProblemScale::new(self.n(), self.p())
    }

    /// Same design, different response. Used to replay noise draws on a fixed `X`.
    pub fn with_response(&self, y: Array1<f64>) -> Result<Self> {
        Dataset::new(self.x.clone(), y)
    }

    /// Divides every column by its sample standard deviation.
    ///
    /// Returns the rescaled dataset and the per-column divisors, so that a
    /// coefficient `b` fitted on the rescaled data maps back to `b / s_j`.
    /// Constant columns are left untouched (divisor 1).
    pub fn standardized(&self) -> (Dataset, Vec<f64>) {
        let n = self.n() as f64;
        let scales: Vec<f64> = self
            .x
            .axis_iter(Axis(1))
            .map(|col| {
                if self.n() < 2 {
                    return 1.0;
                }
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut x = self.x.clone();
        for (mut col, s) in x.axis_iter_mut(Axis(1)).zip(&scales) {
            col.mapv_inplace(|v| v / s);
        }
        (
            Dataset {
                x,
                y: self.y.clone(),
            },
            scales,
        )
    }
}

/// `Σ̂ = XᵀX / n`, stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    sigma: Array2<f64>,
}

impl SampleCovariance {
    /// Wraps an explicit symmetric matrix (used for hand-built instances).
    pub fn from_matrix(sigma: Array2<f64>) -> Result<Self> {
        let (r, c) = sigma.dim();
        if r != c || r == 0 {
            return Err(Error::Input(format!("covariance must be square and non-empty, got {r}x{c}")));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("covariance has non-finite entries".into()));
        }
        for i in 0..r {
            for j in 0..i {
                let (a, b) = (sigma[[i, j]], sigma[[j, i]]);
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::Input(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut s = SampleCovariance { sigma };
        s.symmetrize();
        Ok(s)
    }

    fn symmetrize(&mut self) {
        let p = self.sigma.nrows();
        for i in 0..p {
            for j in 0..i {
                let avg = 0.5 * (self.sigma[[i, j]] + self.sigma[[j, i]]);
                self.sigma[[i, j]] = avg;
                self.sigma[[j, i]] = avg;
            }
        }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.sigma.view()
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn diag(&self) -> Array1<f64> {
        self.sigma.diag().to_owned()
    }

    /// `vᵀ Σ̂ v`.
    pub fn quadratic_form(&self, v: ArrayView1<'_, f64>) -> f64 {
        v.dot(&self.sigma.dot(&v))
    }
}

pub fn sample_covariance(data: &Dataset) -> Result<SampleCovariance> {
    let x = data.x();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("design has non-finite entries".into()));
    }
    let n = data.n() as f64;
    let mut sigma = x.t().dot(&x);
    sigma /= n;
    let mut s = SampleCovariance { sigma };
    s.symmetrize();
    Ok(s)
}

/// Problem dimensions together with the recurring `sqrt(log p / n)` scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemScale {
    pub n: usize,
    pub p: usize,
    pub log_ratio: f64,
}

impl ProblemScale {
    pub fn new(n: usize, p: usize) -> Self {
        let log_ratio = if n == 0 || p == 0 {
            0.0
        } else {
            ((p as f64).ln() / n as f64).sqrt()
        };
        ProblemScale { n, p, log_ratio }
    }

    /// `2 sqrt(log p / n)`, the default decorrelation radius.
    pub fn default_mu(&self) -> f64 {
        2.0 * self.log_ratio
    }

    /// `sqrt(2 log p / n)`, the universal penalty level.
    pub fn universal_lambda(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.log_ratio
    }
}
