//! Ordinary least squares by the normal equations.
//!
//! Columns are scaled to unit RMS before forming `XᵀX`, which keeps cubic
//! regressors on a comparable footing with the intercept. The Cholesky
//! factorisation reports rank deficiency as [`Error::SingularDesign`]; a
//! merely ill-conditioned system is retried with a tiny ridge term.

use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
// Relative pivot below which a column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-12;
const ILL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub residual_variance: f64,
    pub n: usize,
}

/// Row-major design matrix with `p` columns.
pub fn ols(design: &[f64], p: usize, y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    assert_eq!(design.len(), n * p, "design must be n x p");
    if n < p {
        return Err(Error::InsufficientData { needed: p, got: n });
    }

    let mut scale = vec![0.0; p];
    for row in design.chunks_exact(p) {
        for (s, v) in scale.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            return Err(Error::SingularDesign);
        }
    }

    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    let mut scaled = vec![0.0; p];
    for (row, &yi) in design.chunks_exact(p).zip(y) {
        for (k, (v, s)) in row.iter().zip(&scale).enumerate() {
            scaled[k] = v / s;
        }
        for a in 0..p {
            xty[a] += scaled[a] * yi;
            for b in 0..=a {
                xtx[a * p + b] += scaled[a] * scaled[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[b * p + a] = xtx[a * p + b];
        }
    }

    let chol = match cholesky(&xtx, p)? {
        Factor::Good(l) => l,
        Factor::Ill(_) => {
            let mut ridged = xtx.clone();
            let max_diag = (0..p).map(|i| xtx[i * p + i]).fold(0.0, f64::max);
            for i in 0..p {
                ridged[i * p + i] += RIDGE * max_diag;
            }
            match cholesky(&ridged, p)? {
                Factor::Good(l) | Factor::Ill(l) => l,
            }
        }
    };

    let beta_scaled = chol_solve(&chol, p, &xty);
    let coefficients: Vec<f64> = beta_scaled.iter().zip(&scale).map(|(b, s)| b / s).collect();

    let mut rss = 0.0;
    for (row, &yi) in design.chunks_exact(p).zip(y) {
        let fit: f64 = row.iter().zip(&coefficients).map(|(x, b)| x * b).sum();
        rss += (yi - fit).powi(2);
    }
    let dof = n.saturating_sub(p).max(1);
    let residual_variance = rss / dof as f64;

    // diag((XᵀX)⁻¹) in the original units via unit-vector solves.
    let standard_errors = (0..p)
        .map(|k| {
            let mut e = vec![0.0; p];
            e[k] = 1.0;
            let col = chol_solve(&chol, p, &e);
            (residual_variance * col[k]).max(0.0).sqrt() / scale[k]
        })
        .collect();

    Ok(OlsFit { coefficients, standard_errors, residual_variance, n })
}

enum Factor {
    Good(Vec<f64>),
    Ill(Vec<f64>),
}

fn cholesky(a: &[f64], p: usize) -> Result<Factor> {
    let mut l = vec![0.0; p * p];
    let mut ill = false;
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        let rel = d / a[j * p + j].max(f64::MIN_POSITIVE);
        if !(rel > RANK_TOL) {
            return Err(Error::SingularDesign);
        }
        if rel < ILL_TOL {
            ill = true;
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    Ok(if ill { Factor::Ill(l) } else { Factor::Good(l) })
}

fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; p];
    for i in 0..p {
        let s: f64 = (0..i).map(|k| l[i * p + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|k| l[k * p + i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i * p + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_line_is_recovered() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 0.1 + 0.4 * x).collect();
        let fit = ols(&design, 2, &y).unwrap();
        assert!((fit.coefficients[0] - 0.1).abs() < 1e-12);
        assert!((fit.coefficients[1] - 0.4).abs() < 1e-12);
        assert!(fit.residual_variance < 1e-25);
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x, x * x * x]).collect();
        let y: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 2.0 - x + ((i * 13) % 7) as f64 * 0.1).collect();
        let fit = ols(&design, 3, &y).unwrap();
        for k in 0..3 {
            let g: f64 = design
                .chunks_exact(3)
                .zip(&y)
                .map(|(row, yi)| {
                    let r = yi - row.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>();
                    r * row[k]
                })
                .sum();
            assert!(g.abs() < 1e-8, "column {k}: {g}");
        }
    }

    #[test]
    fn constant_zero_column_is_singular() {
        let design: Vec<f64> = (0..10).flat_map(|_| [1.0, 0.0]).collect();
        let y = vec![1.0; 10];
        assert!(matches!(ols(&design, 2, &y), Err(Error::SingularDesign)));
    }

    #[test]
    fn collinear_columns_are_singular() {
        let design: Vec<f64> = (0..10).flat_map(|i| [1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(ols(&design, 3, &y), Err(Error::SingularDesign)));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(ols(&[1.0, 2.0], 2, &[1.0]), Err(Error::InsufficientData { .. })));
    }
}
