//! Small hypothesis-test helpers on top of `statrs`.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Upper tail probability of a chi-squared statistic.
pub fn chi2_sf(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    d.sf(statistic)
}

/// Two-sided normal p-value of a z-score.
pub fn normal_two_sided(z: f64) -> f64 {
    let d = Normal::standard();
    2.0 * d.sf(z.abs())
}

/// Pearson goodness-of-fit test of observed counts against probabilities.
///
/// Cells are pooled from the top down until every expected count is at
/// least 5. Returns `(statistic, df, p_value)`.
pub fn chi2_goodness_of_fit(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let total: u64 = observed.iter().sum();
    let mut obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    while exp.len() > 2 && *exp.last().unwrap() < 5.0 {
        let (o, e) = (obs.pop().unwrap(), exp.pop().unwrap());
        *obs.last_mut().unwrap() += o;
        *exp.last_mut().unwrap() += e;
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = obs.len() - 1;
    (stat, df, chi2_sf(stat, df))
}

/// Pearson test of independence for a contingency table given as rows.
/// Rows and columns with zero totals are dropped. Returns
/// `(statistic, df, p_value)`.
pub fn chi2_independence(table: &[Vec<u64>]) -> (f64, usize, f64) {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    let cols: Vec<usize> = (0..ncol)
        .filter(|&c| rows.iter().map(|r| r[c]).sum::<u64>() > 0)
        .collect();
    let total: f64 = rows.iter().map(|r| r.iter().sum::<u64>() as f64).sum();
    let mut stat = 0.0;
    for r in &rows {
        let rt = r.iter().sum::<u64>() as f64;
        for &c in &cols {
            let ct = rows.iter().map(|x| x[c]).sum::<u64>() as f64;
            let e = rt * ct / total;
            let o = r[c] as f64;
            stat += (o - e) * (o - e) / e;
        }
    }
    let df = rows.len().saturating_sub(1) * cols.len().saturating_sub(1);
    (stat, df, chi2_sf(stat, df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_values() {
        // chi2 with 1 df at 3.841459 has tail 0.05.
        assert_abs_diff_eq!(chi2_sf(3.841_458_820_694_124, 1), 0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(normal_two_sided(1.959_963_984_540_054), 0.05, epsilon = 1e-9);
    }

    #[test]
    fn perfect_fit_has_p_one() {
        let (stat, df, p) = chi2_goodness_of_fit(&[50, 30, 20], &[0.5, 0.3, 0.2]);
        assert_eq!(stat, 0.0);
        assert_eq!(df, 2);
        assert_abs_diff_eq!(p, 1.0);
    }

    #[test]
    fn sparse_cells_are_pooled() {
        let (_, df, _) = chi2_goodness_of_fit(&[90, 9, 1, 0], &[0.9, 0.09, 0.009, 0.001]);
        assert_eq!(df, 1);
    }

    #[test]
    fn independent_table() {
        let (stat, df, _) = chi2_independence(&[vec![10, 20], vec![20, 40]]);
        assert_abs_diff_eq!(stat, 0.0, epsilon = 1e-12);
        assert_eq!(df, 1);
    }
}
