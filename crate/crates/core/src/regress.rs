//! Ordinary least squares via Householder QR with column pivoting.
//!
//! Columns whose residual norm after projection falls below
//! [`RANK_TOL`] times their own norm are treated as dependent; the fit is
//! then redone with a small ridge penalty on the non-intercept coefficients
//! and the model is flagged with `condition_warning`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector, Target};

/// Relative threshold for declaring a column numerically dependent.
pub const RANK_TOL: f64 = 1e-9;
/// Ridge damping used when the design matrix is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows
            .first()
            .map(Vec::len)
            .ok_or(Error::EmptyInput("matrix"))?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::SchemaMismatch("ragged matrix rows".into()));
        }
        let cols = (0..n)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Ok(Matrix {
            rows: rows.len(),
            cols,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }
}

/// Solution of a least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Numerical rank of the undamped design.
    pub rank: usize,
    pub ridge: bool,
}

struct Qr {
    /// Reflected columns; the upper triangle holds R in pivoted order.
    cols: Vec<Vec<f64>>,
    perm: Vec<usize>,
    rank: usize,
    qty: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn householder_qr(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> Qr {
    let m = y.len();
    let n = cols.len();
    let original: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;

    for k in 0..n.min(m) {
        // pivot: largest remaining column norm
        let (best, best_norm) = (k..n)
            .map(|j| (j, dot(&cols[j][k..], &cols[j][k..]).sqrt()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        cols.swap(k, best);
        perm.swap(k, best);

        let scale = original[perm[k]];
        if scale == 0.0 || best_norm <= RANK_TOL * scale {
            break;
        }
        rank += 1;

        let x0 = cols[k][k];
        let alpha = if x0 > 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv > 0.0 {
            for j in (k + 1)..n {
                let s = 2.0 * dot(&v, &cols[j][k..]) / vv;
                for (c, vi) in cols[j][k..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            let s = 2.0 * dot(&v, &y[k..]) / vv;
            for (c, vi) in y[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        cols[k][k] = alpha;
        for c in cols[k][(k + 1)..].iter_mut() {
            *c = 0.0;
        }
    }
    Qr {
        cols,
        perm,
        rank,
        qty: y,
    }
}

fn back_substitute(qr: &Qr) -> Vec<f64> {
    let n = qr.cols.len();
    let r = qr.rank;
    let mut z = vec![0.0; r];
    for i in (0..r).rev() {
        let mut s = qr.qty[i];
        for (j, zj) in z.iter().enumerate().skip(i + 1) {
            s -= qr.cols[j][i] * zj;
        }
        z[i] = s / qr.cols[i][i];
    }
    let mut beta = vec![0.0; n];
    for (i, zi) in z.into_iter().enumerate() {
        beta[qr.perm[i]] = zi;
    }
    beta
}

/// Minimizes ‖Xβ − y‖². When X is rank deficient the problem is re-solved
/// with ridge damping on every column except those listed in `undamped`.
pub fn least_squares(x: &Matrix, y: &[f64], undamped: &[usize]) -> Result<LeastSquares> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    let n = x.ncols();
    let qr = householder_qr(x.cols.clone(), y.to_vec());
    if qr.rank == n {
        return Ok(LeastSquares {
            coefficients: back_substitute(&qr),
            rank: n,
            ridge: false,
        });
    }

    let rank = qr.rank;
    let damped: Vec<usize> = (0..n).filter(|j| !undamped.contains(j)).collect();
    let extra = damped.len();
    let root = RIDGE_LAMBDA.sqrt();
    let cols: Vec<Vec<f64>> = x
        .cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut col = c.clone();
            col.extend(damped.iter().map(|&d| if d == j { root } else { 0.0 }));
            col
        })
        .collect();
    let mut yy = y.to_vec();
    yy.extend(std::iter::repeat_n(0.0, extra));
    let qr = householder_qr(cols, yy);
    Ok(LeastSquares {
        coefficients: back_substitute(&qr),
        rank,
        ridge: true,
    })
}

/// A fitted linear model with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub target: Target,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub train_row_count: usize,
    pub phi1: f64,
    pub phi2: f64,
    #[serde(default)]
    pub condition_warning: bool,
}

/// Fits an OLS model with intercept to `(features, target value)` rows.
pub fn fit_ols(rows: &[(FeatureVector, f64)], cfg: &FeatureConfig) -> Result<LinearModel> {
    let (first, _) = rows.first().ok_or(Error::EmptyInput("training rows"))?;
    if rows.len() < 2 {
        return Err(Error::EmptyInput("at least two training rows"));
    }
    let names = first.names();
    if let Some((fv, _)) = rows.iter().find(|(fv, _)| fv.names() != names) {
        return Err(Error::SchemaMismatch(format!(
            "expected {:?}, found {:?}",
            names.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
            fv.names().iter().map(|f| f.as_str()).collect::<Vec<_>>()
        )));
    }
    let design: Vec<Vec<f64>> = rows.iter().map(|(fv, _)| fv.design_row()).collect();
    let y: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let x = Matrix::from_rows(&design)?;
    let sol = least_squares(&x, &y, &[0])?;
    if sol.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain {
            quantity: "coefficient",
            value: f64::NAN,
        });
    }
    if sol.ridge {
        log::warn!(
            "rank-deficient design ({} of {} columns); refit with ridge {RIDGE_LAMBDA}",
            sol.rank,
            x.ncols()
        );
    }
    Ok(LinearModel {
        target: cfg.target,
        feature_names: names.iter().map(|f| f.as_str().to_string()).collect(),
        intercept: sol.coefficients[0],
        coefficients: sol.coefficients[1..].to_vec(),
        train_row_count: rows.len(),
        phi1: cfg.phi1,
        phi2: cfg.phi2,
        condition_warning: sol.ridge,
    })
}

impl LinearModel {
    /// Intercept plus the dot product with `x`, matched by feature name.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        let aligned = x.len() == self.feature_names.len()
            && x.names()
                .iter()
                .zip(&self.feature_names)
                .all(|(f, n)| f.as_str() == n);
        let mut acc = self.intercept;
        if aligned {
            for (c, v) in self.coefficients.iter().zip(x.values()) {
                acc += c * v;
            }
        } else {
            for (c, name) in self.coefficients.iter().zip(&self.feature_names) {
                let v = x
                    .get_by_name(name)
                    .ok_or_else(|| Error::MissingFeature(name.clone()))?;
                acc += c * v;
            }
        }
        Ok(acc)
    }

    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LinearModel = serde_json::from_str(&text)?;
        if model.coefficients.len() != model.feature_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "{}: {} coefficients for {} features",
                path.display(),
                model.coefficients.len(),
                model.feature_names.len()
            )));
        }
        Ok(model)
    }
}

/// Clamps a humidity prediction to the physical range; temperatures pass through.
pub fn clamp_for_report(target: Target, value: f64) -> f64 {
    match target {
        Target::Humidity => value.clamp(0.0, 100.0),
        Target::Temperature => value,
    }
}
