//! Ordinary least squares through a Householder QR factorization, with
//! per-coefficient t-tests and the global F-test.

use serde::{Deserialize, Serialize};

use super::{f_sf, student_t_sf_two_sided, StatsError};
use crate::Scalar;

/// Name of the all-ones column every design starts with.
pub const INTERCEPT: &str = "intercept";

/// Column-major regression design with a leading intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix<T> {
    column_names: Vec<String>,
    row_ids: Vec<String>,
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> DesignMatrix<T> {
    /// Builds a design from explanatory columns; the intercept is prepended.
    pub fn with_intercept(
        row_ids: Vec<String>,
        columns: Vec<(String, Vec<T>)>,
    ) -> Result<Self, StatsError> {
        let n = row_ids.len();
        let mut names = vec![INTERCEPT.to_string()];
        let mut data = vec![vec![T::one(); n]];
        for (name, col) in columns {
            if col.len() != n {
                return Err(StatsError::LengthMismatch {
                    left: col.len(),
                    right: n,
                });
            }
            if names.contains(&name) {
                return Err(StatsError::InvalidDesign(format!(
                    "duplicate column `{name}`"
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(format!("column `{name}`")));
            }
            names.push(name);
            data.push(col);
        }
        Ok(Self {
            column_names: names,
            row_ids,
            columns: data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[T]> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Explanatory columns (everything but the intercept).
    pub fn regressors(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.column_names
            .iter()
            .zip(&self.columns)
            .skip(1)
            .map(|(n, c)| (n.as_str(), c.as_slice()))
    }

    /// Keeps only the rows whose index is listed, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            column_names: self.column_names.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Drops the named explanatory columns.
    pub fn without_columns(&self, drop: &[String]) -> Self {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| j == 0 || !drop.contains(&self.column_names[j]))
            .collect();
        Self {
            column_names: keep.iter().map(|&j| self.column_names[j].clone()).collect(),
            row_ids: self.row_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
        }
    }

    /// Z-scores every explanatory column (population standard deviation).
    /// Constant columns are left unchanged.
    pub fn standardized(&self) -> Self {
        let mut out = self.clone();
        let n = T::from_count(self.n_rows().max(1));
        for col in out.columns.iter_mut().skip(1) {
            let mean = col.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = col
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / n;
            if var > T::zero() {
                let sd = var.sqrt();
                for v in col.iter_mut() {
                    *v = (*v - mean) / sd;
                }
            }
        }
        out
    }

    /// X·β for a coefficient vector in column order.
    pub fn predict(&self, beta: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_rows()];
        for (col, &b) in self.columns.iter().zip(beta) {
            for (o, &x) in out.iter_mut().zip(col) {
                *o = *o + x * b;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T> {
    pub column_names: Vec<String>,
    pub coefficients: Vec<T>,
    pub std_errors: Vec<T>,
    pub t_stats: Vec<T>,
    pub p_values: Vec<T>,
    pub residuals: Vec<T>,
    pub r_squared: T,
    /// Global F-test against "all non-intercept coefficients are zero";
    /// absent for an intercept-only design.
    pub f_statistic: Option<T>,
    pub f_p_value: Option<T>,
    pub dof_residual: usize,
}

impl<T: Scalar> RegressionFit<T> {
    pub fn coefficient(&self, name: &str) -> Option<(T, T)> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .map(|j| (self.coefficients[j], self.p_values[j]))
    }
}

/// Fits `y ≈ Xγ` by least squares.
///
/// Rank deficiency is reported when a diagonal entry of the triangular
/// factor falls below `1e-10` times the largest one; the error names the
/// offending columns.
pub fn fit_ols<T: Scalar>(
    design: &DesignMatrix<T>,
    y: &[T],
) -> Result<RegressionFit<T>, StatsError> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(StatsError::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    if n <= p {
        return Err(StatsError::Underdetermined { rows: n, cols: p });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("response".into()));
    }

    let mut a: Vec<Vec<T>> = design.columns.clone();
    let mut qty: Vec<T> = y.to_vec();
    let mut diag = vec![T::zero(); p];
    for k in 0..p {
        let norm = a[k][k..].iter().fold(T::zero(), |acc, &v| acc.hypot(v));
        if norm == T::zero() {
            continue;
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        let reflect = |col: &mut [T]| {
            let s = v
                .iter()
                .zip(col.iter())
                .fold(T::zero(), |acc, (&vi, &ci)| acc + vi * ci);
            let f = two * s / vnorm2;
            for (c, &vi) in col.iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut qty[k..]);
        a[k][k] = alpha;
    }

    let max_diag = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = T::lit(1e-10) * max_diag;
    let deficient: Vec<String> = (0..p)
        .filter(|&j| !(diag[j].abs() > tol))
        .map(|j| design.column_names[j].clone())
        .collect();
    if !deficient.is_empty() {
        return Err(StatsError::RankDeficient(deficient));
    }

    // R is upper triangular: r(i, j) = a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    let mut coefficients = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s = s - r(i, j) * coefficients[j];
        }
        coefficients[i] = s / r(i, i);
    }

    // R^{-1}, column by column; diag((X'X)^{-1}) = row norms of R^{-1}.
    let mut rinv = vec![vec![T::zero(); p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { T::one() } else { T::zero() };
            for j in i + 1..=c {
                s = s - r(i, j) * rinv[j][c];
            }
            rinv[i][c] = s / r(i, i);
        }
    }

    let fitted = design.predict(&coefficients);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&yi, &fi)| yi - fi).collect();
    let rss = residuals.iter().fold(T::zero(), |acc, &e| acc + e * e);
    let dof_residual = n - p;
    let s2 = rss / T::from_count(dof_residual);

    let mut std_errors = Vec::with_capacity(p);
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for (j, &g) in coefficients.iter().enumerate() {
        let v = rinv[j].iter().fold(T::zero(), |acc, &x| acc + x * x);
        let se = (s2 * v).sqrt();
        let t = if se > T::zero() {
            g / se
        } else if g == T::zero() {
            T::zero()
        } else {
            g.signum() * T::infinity()
        };
        std_errors.push(se);
        t_stats.push(t);
        p_values.push(student_t_sf_two_sided(t, dof_residual)?);
    }

    let mean_y = y.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_count(n);
    let tss = y
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - mean_y) * (v - mean_y));
    let r_squared = if tss > T::zero() {
        T::one() - rss / tss
    } else {
        T::one()
    };

    let (f_statistic, f_p_value) = if p > 1 {
        let d1 = p - 1;
        let explained = (tss - rss).max(T::zero());
        let f = if rss > T::zero() {
            (explained / T::from_count(d1)) / s2
        } else if explained > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        (Some(f), Some(f_sf(f, d1, dof_residual)?))
    } else {
        (None, None)
    };

    Ok(RegressionFit {
        column_names: design.column_names.clone(),
        coefficients,
        std_errors,
        t_stats,
        p_values,
        residuals,
        r_squared,
        f_statistic,
        f_p_value,
        dof_residual,
    })
}
