//! Least squares via Householder QR with a ridge fallback for rank-deficient designs.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ridge penalty applied to the slope columns when the design is rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Relative pivot size below which a column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares fit with an intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit<T> {
    pub intercept: T,
    pub slopes: Vec<T>,
    /// Standard errors for the slopes (intercept excluded).
    pub std_errors: Vec<T>,
    /// Two-sided t-test p-values for the slopes; NaN when degrees of freedom run out.
    pub p_values: Vec<f64>,
    pub rss: T,
    pub n: usize,
    /// Whether the ridge fallback was used.
    pub ridge: bool,
}

impl<T: Scalar> OlsFit<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.intercept
            + self
                .slopes
                .iter()
                .zip(x)
                .map(|(&b, &v)| b * v)
                .sum::<T>()
    }
}

/// Column-major design matrix with a leading intercept column.
struct Design<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Design<T> {
    fn with_intercept(x: &[&[T]], width: usize, ridge_rows: Option<T>) -> Self {
        let n = x.len();
        let cols = width + 1;
        let extra = if ridge_rows.is_some() { width } else { 0 };
        let rows = n + extra;
        let mut data = vec![T::zero(); rows * cols];
        for (i, row) in x.iter().enumerate() {
            data[i] = T::one();
            for (j, &v) in row.iter().enumerate() {
                data[(j + 1) * rows + i] = v;
            }
        }
        if let Some(s) = ridge_rows {
            for j in 0..width {
                data[(j + 1) * rows + n + j] = s;
            }
        }
        Design { rows, cols, data }
    }

    #[inline]
    fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

/// In-place Householder QR. Returns the R diagonal; R's strict upper part is left in
/// the design, and `rhs` is overwritten with Qᵀ·rhs.
fn householder(design: &mut Design<f64>, rhs: &mut [f64]) -> Vec<f64> {
    let (m, p) = (design.rows, design.cols);
    let mut diag = vec![0.0; p];
    let mut v = vec![0.0; m];
    for k in 0..p {
        let col = &design.data[k * m..(k + 1) * m];
        let norm = col[k..].iter().map(|&a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        v[k..].copy_from_slice(&col[k..]);
        v[k] -= alpha;
        let vnorm2 = v[k..].iter().map(|&a| a * a).sum::<f64>();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let two = 2.0;
        for j in (k + 1)..p {
            let cj = &mut design.data[j * m..(j + 1) * m];
            let s: f64 = v[k..].iter().zip(&cj[k..]).map(|(&a, &b)| a * b).sum();
            let f = two * s / vnorm2;
            for (c, &a) in cj[k..].iter_mut().zip(&v[k..]) {
                *c -= f * a;
            }
        }
        let s: f64 = v[k..].iter().zip(&rhs[k..]).map(|(&a, &b)| a * b).sum();
        let f = two * s / vnorm2;
        for (c, &a) in rhs[k..].iter_mut().zip(&v[k..]) {
            *c -= f * a;
        }
    }
    diag
}

fn rank_deficient<T: Scalar>(diag: &[T]) -> bool {
    let max = diag.iter().fold(T::zero(), |m, &d| m.max(d.abs()));
    if max == T::zero() {
        return false;
    }
    let tol = max * T::lit(RANK_TOL);
    // The intercept column can never be dependent on its own; only slope pivots matter,
    // but a zero pivot anywhere means the triangular solve is singular.
    diag.iter().any(|&d| d.abs() <= tol)
}

/// Fits `y ~ 1 + x` by least squares.
///
/// Rows of `x` must share the same width. Rank-deficient designs are refit with a
/// ridge penalty of [`RIDGE_FALLBACK`] on the slopes.
pub fn ols<T: Scalar>(x: &[&[T]], y: &[T]) -> Result<OlsFit<T>> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but response has {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("empty design".into()));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidInput("ragged design rows".into()));
    }
    let n = x.len();

    // Degenerate response: no variation to explain.
    let y_mean = y.iter().copied().sum::<T>() / T::count(n);
    let tss: T = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum();
    let scale = y.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let noise = T::lit(64.0) * T::epsilon() * scale;
    if tss <= noise * noise * T::count(n) {
        return Ok(OlsFit {
            intercept: y_mean,
            slopes: vec![T::zero(); width],
            std_errors: vec![T::zero(); width],
            p_values: vec![1.0; width],
            rss: tss,
            n,
            ridge: false,
        });
    }

    let x64: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect();
    let x64_refs: Vec<&[f64]> = x64.iter().map(|r| r.as_slice()).collect();
    let y64: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();

    let mut fit = solve(&x64_refs, &y64, width, None);
    let mut ridge = false;
    if fit.is_none() {
        fit = solve(&x64_refs, &y64, width, Some(RIDGE_FALLBACK.sqrt()));
        ridge = true;
    }
    let (beta, rinv_diag, rss) =
        fit.ok_or_else(|| Error::InvalidInput("least squares system is singular".into()))?;

    let p = width + 1;
    let df = n as f64 - p as f64;
    let sigma2 = if df > 0.0 { rss / df } else { f64::NAN };
    let t_dist = if df > 0.0 {
        StudentsT::new(0.0, 1.0, df).ok()
    } else {
        None
    };
    let mut std_errors = Vec::with_capacity(width);
    let mut p_values = Vec::with_capacity(width);
    for j in 1..p {
        let se = (sigma2 * rinv_diag[j]).sqrt();
        std_errors.push(T::lit(if se.is_finite() { se } else { 0.0 }));
        let pv = match &t_dist {
            None => f64::NAN,
            Some(t) => {
                let b = beta[j];
                if se > 0.0 {
                    2.0 * (1.0 - t.cdf((b / se).abs()))
                } else if b == 0.0 {
                    1.0
                } else {
                    // exact fit with a nonzero coefficient
                    0.0
                }
            }
        };
        p_values.push(pv);
    }

    Ok(OlsFit {
        intercept: T::lit(beta[0]),
        slopes: beta[1..].iter().map(|&b| T::lit(b)).collect(),
        std_errors,
        p_values,
        rss: T::lit(rss),
        n,
        ridge,
    })
}

// Design and solve run in f64 regardless of the caller's scalar type.
/// Returns (beta, diag((RᵀR)⁻¹), rss) or `None` if the design is rank deficient.
fn solve(
    x: &[&[f64]],
    y: &[f64],
    width: usize,
    ridge: Option<f64>,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    if ridge.is_none() && x.len() < width + 1 {
        return None;
    }
    let mut design = Design::with_intercept(x, width, ridge);
    let mut rhs = y.to_vec();
    rhs.resize(design.rows, 0.0);
    let diag = householder(&mut design, &mut rhs);
    if rank_deficient(&diag) {
        return None;
    }
    let p = design.cols;
    let r = |i: usize, j: usize| -> f64 {
        if i == j {
            diag[i]
        } else {
            design.col(j)[i]
        }
    };
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..p {
            s -= r(i, j) * beta[j];
        }
        beta[i] = s / diag[i];
    }
    // R⁻¹ by back substitution, column by column.
    let mut rinv = vec![0.0; p * p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for j in (i + 1)..=c {
                s -= r(i, j) * rinv[j * p + c];
            }
            rinv[i * p + c] = s / diag[i];
        }
    }
    let rinv_diag = (0..p)
        .map(|i| (0..p).map(|c| rinv[i * p + c].powi(2)).sum())
        .collect();
    // Residuals of the data rows only; ridge rows are not observations.
    let rss = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let pred = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            (yi - pred).powi(2)
        })
        .sum();
    Some((beta, rinv_diag, rss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_plane() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let fit = ols(&refs, &y).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-10);
        assert!((fit.slopes[0] - 2.0).abs() < 1e-10);
        assert!((fit.slopes[1] + 0.5).abs() < 1e-10);
        assert!(!fit.ridge);
        assert!(fit.p_values.iter().all(|&p| p < 0.05));
    }

    #[test]
    fn duplicate_columns_fall_back_to_ridge() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let fit = ols(&refs, &y).unwrap();
        assert!(fit.ridge);
        // split evenly across the duplicated columns
        assert!((fit.slopes[0] + fit.slopes[1] - 2.0).abs() < 1e-4);
        assert!((fit.slopes[0] - fit.slopes[1]).abs() < 1e-6);
    }

    #[test]
    fn constant_response_gives_zero_slopes() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32, (i * i) as f32]).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = ols(&refs, &[0.0f32; 10]).unwrap();
        assert_eq!(fit.intercept, 0.0);
        assert!(fit.slopes.iter().all(|&s| s == 0.0));
        assert!(fit.p_values.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn fewer_rows_than_columns_uses_ridge() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64, (i * i) as f64, 1.0 - i as f64, 2.0]).collect();
        let x: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = ols(&x, &[0.1, 0.5, 0.2]).unwrap();
        assert!(fit.ridge);
        assert!(fit.p_values.iter().all(|p| p.is_nan()));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let rows = [vec![1.0f64]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(ols(&refs, &[1.0, 2.0]).is_err());
    }
}
