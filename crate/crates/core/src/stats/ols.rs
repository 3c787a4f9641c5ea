use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check_len, StatsError};

/// Simple linear regression `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
    /// Two-sided t-test of a zero slope; NaN with fewer than three points.
    pub slope_p_value: f64,
    pub n: usize,
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit, StatsError> {
    check_len(x.len(), y.len())?;
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 0.0 };
    let (slope_std_error, slope_p_value) = if n > 2 {
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let p = if se > 0.0 {
            let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive dof");
            2.0 * t.sf((slope / se).abs())
        } else if slope == 0.0 {
            1.0
        } else {
            0.0
        };
        (se, p)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        slope_std_error,
        slope_p_value,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_response_and_predictor() {
        let f = ols_fit(&[1.0, 2.0, 3.0], &[4.0; 3]).unwrap();
        assert_eq!((f.slope, f.r_squared), (0.0, 0.0));
        assert_eq!(ols_fit(&[1.0; 3], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn matches_normal_equations() {
        let x = [0.3, 1.7, 2.2, 4.1, 5.0];
        let y = [1.0, 2.9, 2.4, 6.3, 5.1];
        let design = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let yv = DVector::from_column_slice(&y);
        let beta = (design.transpose() * &design)
            .try_inverse()
            .unwrap()
            * design.transpose()
            * yv;
        let f = ols_fit(&x, &y).unwrap();
        assert!((f.intercept - beta[0]).abs() < 1e-12);
        assert!((f.slope - beta[1]).abs() < 1e-12);
    }
}
