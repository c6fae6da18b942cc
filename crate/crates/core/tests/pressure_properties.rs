use glasslab::pressure::{
    gibbs_expectation, multi_overlap_moment, naive_random_pressure, overlap_square_moments, random_pressure,
    DisorderSample, SpinProduct,
};
use proptest::prelude::*;

fn instance(max_n: usize) -> impl Strategy<Value = DisorderSample> {
    (1..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(-2.0..2.0f64, n * n), -1.5..1.5f64)
            .prop_map(move |(j, h)| DisorderSample::dense(n, h, j))
    })
}

fn dense_j(s: &DisorderSample) -> Vec<f64> {
    s.coupling_values()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gray_code_matches_naive(s in instance(9)) {
        let a = random_pressure(&s).unwrap();
        let b = naive_random_pressure(&s).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn lipschitz_in_couplings(s in instance(7), dj in prop::collection::vec(-3.0..3.0f64, 49)) {
        let n = s.n;
        let j = dense_j(&s);
        let j2: Vec<f64> = j.iter().zip(&dj).map(|(a, d)| a + d).collect();
        let moved = DisorderSample::dense(n, s.h, j2);
        let diff = (random_pressure(&moved).unwrap() - random_pressure(&s).unwrap()).abs();
        let bound = dj[..n * n].iter().map(|d| d.abs()).sum::<f64>() / n as f64;
        prop_assert!(diff <= bound + 1e-9);
    }

    #[test]
    fn diagonal_shift_is_additive(s in instance(7), c in -2.0..2.0f64) {
        let n = s.n;
        let mut j = dense_j(&s);
        for i in 0..n {
            j[i * n + i] += c;
        }
        let shifted = random_pressure(&DisorderSample::dense(n, s.h, j)).unwrap();
        prop_assert!((shifted - random_pressure(&s).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn site_permutation_invariance(s in instance(7), seed in any::<u64>()) {
        let n = s.n;
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by a splitmix sequence.
        let mut x = seed;
        for i in (1..n).rev() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (x >> 33) as usize % (i + 1));
        }
        let j = dense_j(&s);
        let mut jp = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                jp[perm[a] * n + perm[b]] = j[a * n + b];
            }
        }
        let p = random_pressure(&DisorderSample::dense(n, s.h, jp)).unwrap();
        prop_assert!((p - random_pressure(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn field_reversal_invariance(s in instance(8)) {
        let flipped = DisorderSample::dense(s.n, -s.h, dense_j(&s));
        prop_assert!((random_pressure(&flipped).unwrap() - random_pressure(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn only_symmetric_part_matters(s in instance(7)) {
        let n = s.n;
        let j = dense_j(&s);
        let mut t = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                t[a * n + b] = j[b * n + a];
            }
        }
        let p = random_pressure(&DisorderSample::dense(n, s.h, t)).unwrap();
        prop_assert!((p - random_pressure(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn edge_and_dense_forms_agree(s in instance(6)) {
        let n = s.n;
        let j = dense_j(&s);
        let edges: Vec<(usize, usize, f64)> = (0..n * n).map(|c| (c / n, c % n, j[c])).collect();
        let e = DisorderSample::edges(n, s.h, edges);
        prop_assert!((random_pressure(&e).unwrap() - random_pressure(&s).unwrap()).abs() < 1e-12);
    }
}

/// Gibbs weights by direct enumeration; bit `i` of a mask set means
/// `sigma_i = -1`.
fn brute_weights(s: &DisorderSample) -> Vec<f64> {
    let n = s.n;
    let scores: Vec<f64> = (0..1u32 << n)
        .map(|mask| {
            let sigma: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            s.score(&sigma)
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|x| (x - max).exp()).sum();
    scores.iter().map(|x| (x - max).exp() / z).collect()
}

fn spin(mask: usize, i: usize) -> f64 {
    if mask >> i & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `<R_n^p>` by nested enumeration over all `(2^N)^n` replica configurations.
fn nested_overlap_moment(s: &DisorderSample, n: usize, p: i32) -> f64 {
    let w = brute_weights(s);
    let size = w.len();
    let total = size.pow(n as u32);
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut masks = Vec::with_capacity(n);
        let mut weight = 1.0;
        for _ in 0..n {
            let m = rest % size;
            rest /= size;
            weight *= w[m];
            masks.push(m);
        }
        let r: f64 = (0..s.n)
            .map(|i| masks.iter().map(|&m| spin(m, i)).product::<f64>())
            .sum::<f64>()
            / s.n as f64;
        acc += weight * r.powi(p);
    }
    acc
}

#[test]
fn multi_overlaps_match_nested_enumeration() {
    let cases = [
        DisorderSample::dense(2, 0.3, vec![0.4, -0.7, 0.2, 0.1]),
        DisorderSample::dense(3, -0.2, vec![0.5, 0.3, -0.8, 0.0, 0.2, 0.6, -0.4, 0.9, 0.1]),
        DisorderSample::edges(3, 0.7, vec![(0, 1, 1.1), (1, 2, -0.6), (2, 2, 0.3)]),
    ];
    for s in &cases {
        for n in 1..=3 {
            for p in 0..=4 {
                let fast = multi_overlap_moment(s, n, p as usize).unwrap();
                let slow = nested_overlap_moment(s, n, p);
                assert!((fast - slow).abs() < 1e-12, "n={n} p={p}: {fast} vs {slow}");
            }
            let sq = overlap_square_moments(s, &[n]).unwrap()[0];
            assert!((sq - nested_overlap_moment(s, n, 2)).abs() < 1e-12);
        }
    }
}

#[test]
fn replica_products_match_nested_enumeration() {
    let s = DisorderSample::dense(3, 0.4, vec![0.2, -0.5, 0.7, 0.1, -0.3, 0.6, 0.0, 0.8, -0.2]);
    let w = brute_weights(&s);
    let obs = SpinProduct {
        replicas: vec![vec![0, 1], vec![2], vec![0, 2]],
    };
    let mut slow = 0.0;
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..8 {
                let v = spin(a, 0) * spin(a, 1) * spin(b, 2) * spin(c, 0) * spin(c, 2);
                slow += w[a] * w[b] * w[c] * v;
            }
        }
    }
    let fast = gibbs_expectation(&s, &obs).unwrap();
    assert!((fast.value - slow).abs() < 1e-13);
    let ln_z = random_pressure(&s).unwrap() * 3.0;
    assert!((fast.normalizer - 3.0 * ln_z).abs() < 1e-12);
}

#[test]
fn free_spins_have_trivial_overlaps() {
    // Without couplings or field every spin is a fair coin.
    let s = DisorderSample::dense(4, 0.0, vec![0.0; 16]);
    assert!((multi_overlap_moment(&s, 2, 2).unwrap() - 0.25).abs() < 1e-14);
    assert!(multi_overlap_moment(&s, 3, 3).unwrap().abs() < 1e-14);
}
