//! Scalar helpers: stable `ln cosh`, series remainders of the `tanh`
//! expansions, and order-fixed summation.

/// `ln(cosh x)` without overflow for large `|x|`.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `x - tanh x`, accurate for small `x`.
pub fn x_minus_tanh(x: f64) -> f64 {
    if x.abs() < 0.05 {
        let x2 = x * x;
        // Taylor coefficients of x - tanh x.
        let c = [
            1.0 / 3.0,
            -2.0 / 15.0,
            17.0 / 315.0,
            -62.0 / 2835.0,
            1382.0 / 155_925.0,
            -21_844.0 / 6_081_075.0,
        ];
        let mut acc = 0.0;
        for ci in c.iter().rev() {
            acc = acc * x2 + ci;
        }
        acc * x2 * x
    } else {
        x - x.tanh()
    }
}

/// `x^2 - tanh^2 x`, accurate for small `x`.
pub fn x2_minus_tanh2(x: f64) -> f64 {
    x_minus_tanh(x) * (x + x.tanh())
}

/// Remainder of the even series `sum_{j even, j > k_max} tanh^j(x) / j`.
///
/// The full even series (from `j = 2`) sums to `ln cosh x`.
pub fn even_tail(x: f64, k_max: usize) -> f64 {
    let t = x.tanh();
    let u = t * t;
    let first = if k_max % 2 == 0 { k_max + 2 } else { k_max + 1 };
    if u <= 0.9 {
        series_tail(u.sqrt(), first, 2)
    } else {
        let mut head = 0.0;
        let mut p = u;
        let mut j = 2;
        while j < first {
            head += p / j as f64;
            p *= u;
            j += 2;
        }
        (ln_cosh(x) - head).max(0.0)
    }
}

/// Remainder of the odd series `sum_{j odd, j > k_max} |tanh x|^j / j`.
///
/// The full odd series (from `j = 1`) sums to `|x|`.
pub fn odd_tail(x: f64, k_max: usize) -> f64 {
    let t = x.tanh().abs();
    let first = if k_max % 2 == 1 { k_max + 2 } else { k_max + 1 };
    if t * t <= 0.9 {
        series_tail(t, first, 2)
    } else {
        let mut head = 0.0;
        let mut p = t;
        let mut j = 1;
        while j < first {
            head += p / j as f64;
            p *= t * t;
            j += 2;
        }
        (x.abs() - head).max(0.0)
    }
}

/// `sum_{m >= 0} t^(first + step m) / (first + step m)` for `0 <= t < 1`.
fn series_tail(t: f64, first: usize, step: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let mut p = t.powi(first as i32);
    let ratio = t.powi(step as i32);
    let mut j = first;
    let mut acc = 0.0;
    while p > 0.0 {
        let term = p / j as f64;
        acc += term;
        if term < 1e-18 * acc {
            break;
        }
        p *= ratio;
        j += step;
    }
    acc
}

/// Pairwise (cascade) summation with a fixed recursion shape, so the result
/// depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and unbiased sample variance with fixed-order pairwise reductions.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = pairwise_sum(values) / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&sq) / (m - 1) as f64)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
