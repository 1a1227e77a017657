//! Statistical tests used to relate domain shift to classification
//! performance: D'Agostino–Pearson normality, Spearman rank correlation and
//! OLS with per-coefficient t-tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const MIN_NORMALITY_SAMPLES: usize = 20;

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "cosine similarity needs equal dimensions ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector is undefined"));
    }
    Ok(dot / (nu * nv))
}

/// Out-of-domain score minus in-domain score.
pub fn performance_variation(in_score: f64, out_score: f64) -> f64 {
    out_score - in_score
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub skew_z: f64,
    pub kurtosis_z: f64,
    /// K² = skew_z² + kurtosis_z², χ² with 2 degrees of freedom under H0.
    pub statistic: f64,
    pub p_value: f64,
}

/// D'Agostino–Pearson omnibus test. Requires at least 20 samples and
/// non-zero variance.
pub fn normality_test(samples: &[f64]) -> Result<NormalityResult> {
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::invalid(format!(
            "normality test needs at least {MIN_NORMALITY_SAMPLES} samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("normality test samples must be finite"));
    }
    let (m2, m3, m4) = central_moments(samples);
    if m2 <= 0.0 {
        return Err(Error::invalid("normality test is undefined for constant samples"));
    }
    let n = n as f64;

    // skewness z-score
    let b1 = m3 / m2.powf(1.5);
    let mut y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    let skew_z = delta * (y / alpha + ((y / alpha).powi(2) + 1.0).sqrt()).ln();

    // kurtosis z-score
    let b2 = m4 / (m2 * m2);
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return Err(Error::Numerical("kurtosis transform is singular".into()));
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let kurtosis_z = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let statistic = skew_z * skew_z + kurtosis_z * kurtosis_z;
    Ok(NormalityResult {
        skew_z,
        kurtosis_z,
        statistic,
        p_value: (-statistic / 2.0).exp(),
    })
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
}

/// Spearman rank correlation with average-rank ties; two-sided p-value from
/// the t approximation with n − 2 degrees of freedom.
pub fn spearman_test(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman test needs equal-length inputs"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("spearman test needs at least 3 observations"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let constant = |r: &[f64]| r.iter().all(|v| *v == r[0]);
    if constant(&rx) || constant(&ry) {
        return Err(Error::invalid("spearman correlation is undefined for a constant sequence"));
    }
    let rho = pearson(&rx, &ry).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        two_sided_t(rho * (df / ((1.0 + rho) * (1.0 - rho))).sqrt(), df)
    };
    Ok(SpearmanResult { rho, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept first, then one coefficient per regressor column.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub df_resid: usize,
}

/// Ordinary least squares with an intercept; `columns` holds one regressor
/// per entry. Two-tailed t-test per coefficient with n − k − 1 df.
pub fn regression_ttest(columns: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let k = columns.len();
    if k == 0 {
        return Err(Error::invalid("regression needs at least one regressor"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("regressor columns must match the response length"));
    }
    if n < 3 || n <= k + 1 {
        return Err(Error::invalid(format!(
            "regression with {k} regressors needs more than {} observations, got {n}",
            k + 1
        )));
    }
    for (j, c) in columns.iter().enumerate() {
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::invalid(format!("regressor column {j} is constant")));
        }
    }
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("design matrix is rank deficient"))?;
    // Guard against near-singular designs that invert to garbage.
    let cond_check = &xtx * &xtx_inv - DMatrix::<f64>::identity(k + 1, k + 1);
    if cond_check.amax() > 1e-6 {
        return Err(Error::invalid("design matrix is rank deficient"));
    }
    let beta = &xtx_inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let df = n - k - 1;
    let rss = resid.dot(&resid);
    let sigma2 = rss / df as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();

    let mut std_errors = Vec::with_capacity(k + 1);
    let mut t_values = Vec::with_capacity(k + 1);
    let mut p_values = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let se = (sigma2 * xtx_inv[(j, j)]).sqrt();
        let t = beta[j] / se;
        std_errors.push(se);
        t_values.push(t);
        p_values.push(if se == 0.0 { 0.0 } else { two_sided_t(t, df as f64) });
    }
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_values,
        p_values,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        df_resid: df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values below were produced with scipy.stats / statsmodels on
    // the same inputs.

    #[test]
    fn normaltest_matches_reference() {
        let x: Vec<f64> = (0..50u64)
            .map(|i| ((i * 37) % 101) as f64 / 10.0 + ((i * i) % 7) as f64 / 3.0)
            .collect();
        let r = normality_test(&x).unwrap();
        assert_relative_eq!(r.skew_z, -0.02803795491779148, max_relative = 1e-9);
        assert_relative_eq!(r.kurtosis_z, -2.7293587740010365, max_relative = 1e-9);
        assert_relative_eq!(r.statistic, 7.450185444132413, max_relative = 1e-9);
        assert_relative_eq!(r.p_value, 0.02411086471397421, max_relative = 1e-9);

        let e: Vec<f64> = (0..30).map(|i| (i as f64).powf(1.5) % 5.0 + 0.1 * i as f64).collect();
        assert_relative_eq!(normality_test(&e).unwrap().p_value, 0.9208153578040272, max_relative = 1e-8);
    }

    #[test]
    fn normaltest_edge_cases() {
        assert!(normality_test(&[1.0; 19]).unwrap_err().to_string().contains("20"));
        assert!(normality_test(&[2.5; 40]).is_err());
    }

    #[test]
    fn spearman_matches_reference() {
        let a = [3., 1., 4., 1., 5., 9., 2., 6., 5., 3., 5., 8., 9., 7., 9.];
        let b = [2., 7., 1., 8., 2., 8., 1., 8., 2., 8., 4., 5., 9., 0., 4.];
        let r = spearman_test(&a, &b).unwrap();
        assert_relative_eq!(r.rho, 0.17916174391114706, max_relative = 1e-12);
        assert_relative_eq!(r.p_value, 0.5228912570529161, max_relative = 1e-9);
    }

    #[test]
    fn spearman_monotone_cases() {
        let r = spearman_test(&[1., 2., 3.], &[1., 4., 9.]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(spearman_test(&[1., 2., 3.], &[3., 2., 1.]).unwrap().rho, -1.0);
        assert!(spearman_test(&[1., 1., 1.], &[1., 2., 3.]).is_err());
        assert!(spearman_test(&[1., 2.], &[1., 2.]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn ols_matches_reference() {
        let x1: Vec<f64> = (0..20u64).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let x2: Vec<f64> = (0..20u64).map(|i| ((i * i * 3) % 13) as f64 / 10.0).collect();
        let y: Vec<f64> = (0..20)
            .map(|i| 0.5 + 1.5 * x1[i] - 0.7 * x2[i] + (((i * 5) % 9) as f64 - 4.0) / 20.0)
            .collect();
        let fit = regression_ttest(&[x1, x2], &y).unwrap();
        let want = [0.5331934513642657, 1.5563071552817473, -0.8167247135937126];
        let want_p = [5.06436849037916e-07, 2.7611729199512116e-12, 8.499548826368246e-10];
        let want_se = [0.06827977054114728, 0.08921824404504654, 0.06731443509878549];
        for j in 0..3 {
            assert_relative_eq!(fit.coefficients[j], want[j], max_relative = 1e-9);
            assert_relative_eq!(fit.std_errors[j], want_se[j], max_relative = 1e-9);
            assert_relative_eq!(fit.p_values[j], want_p[j], max_relative = 1e-6);
        }
        assert_eq!(fit.df_resid, 17);
    }

    #[test]
    fn ols_rejects_degenerate_designs() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert!(regression_ttest(&[x.clone(), x.iter().map(|v| 2.0 * v).collect()], &[1., 2., 3., 5.]).is_err());
        assert!(regression_ttest(&[vec![1.0; 4]], &[1., 2., 3., 4.]).is_err());
        assert!(regression_ttest(&[vec![1.0, 2.0]], &[1., 2.]).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert_relative_eq!(cosine_similarity(&[0.2, 0.5, 0.3], &[0.2, 0.5, 0.3]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn performance_variation_examples() {
        assert_relative_eq!(performance_variation(0.676, 0.591), -0.085, epsilon = 1e-12);
        assert_eq!(performance_variation(0.4, 0.4), 0.0);
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_transform(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 5..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(spearman_test(&x, &y).is_ok());
            let base = spearman_test(&x, &y).unwrap();
            let xt: Vec<f64> = x.iter().map(|v| (v / 50.0).exp() + v * v * v).collect();
            let yt: Vec<f64> = y.iter().map(|v| -(3.0 * v + 1.0)).collect();
            let moved = spearman_test(&xt, &yt).unwrap();
            prop_assert!((moved.rho + base.rho).abs() < 1e-12);
            prop_assert!((moved.p_value - base.p_value).abs() < 1e-9);
        }
    }
}
