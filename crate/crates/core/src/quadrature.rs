//! Fixed-order Gaussian quadrature rules and a small expectation engine
//! configuration shared by the coupling-law and Lévy modules.

use std::sync::{Arc, OnceLock};

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
    ///
    /// Roots are bracketed on a grid finer than the smallest node spacing and
    /// polished by Newton steps on the Hermite functions `H_j(z) exp(-z^2/2)`,
    /// which stay in floating-point range for a few hundred nodes.
    pub fn gauss_hermite(n: usize) -> Rule {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let nf = n as f64;
        let reach = (2.0 * nf + 1.0).sqrt() + 1.0;
        let step = 0.05 * std::f64::consts::PI / (2.0 * nf + 1.0).sqrt();
        let mut positive = Vec::with_capacity(n / 2);
        let mut lo = step * 0.5;
        let mut f_lo = hermite_function(n, lo).0;
        while lo < reach && positive.len() < n / 2 {
            let hi = lo + step;
            let f_hi = hermite_function(n, hi).0;
            if f_lo == 0.0 || f_lo.signum() != f_hi.signum() {
                positive.push(polish_hermite_root(n, lo, hi));
            }
            lo = hi;
            f_lo = f_hi;
        }
        assert_eq!(positive.len(), n / 2, "Gauss-Hermite root bracketing failed");
        let mut nodes = Vec::with_capacity(n);
        nodes.extend(positive.iter().rev().map(|z| -z));
        if n % 2 == 1 {
            nodes.push(0.0);
        }
        nodes.extend(positive.iter().copied());
        let weights = nodes
            .iter()
            .map(|&z| {
                let (_, d) = hermite_function(n, z);
                (std::f64::consts::LN_2 - z * z - 2.0 * d.abs().ln()).exp()
            })
            .collect();
        Rule { nodes, weights }
    }

    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> Rule {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Normalized Hermite function of degree `n` at `z`, together with the
/// derivative of the orthonormal polynomial times the same factor
/// `exp(-z^2/2)`. The recurrence runs on a rescaled pair so that neither
/// the Gaussian factor nor the polynomial leaves floating-point range.
fn hermite_function(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    const BIG: f64 = 1e150;
    let mut log_scale = -0.5 * z * z;
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        if p1.abs() > BIG {
            p1 /= BIG;
            p2 /= BIG;
            log_scale += BIG.ln();
        }
    }
    let scale = log_scale.exp();
    (p1 * scale, (2.0 * n as f64).sqrt() * p2 * scale)
}

fn polish_hermite_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = hermite_function(n, lo).0;
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, d) = hermite_function(n, z);
        if p == 0.0 {
            return z;
        }
        if p.signum() == f_lo.signum() {
            lo = z;
        } else {
            hi = z;
        }
        // d is the polynomial derivative; the weight factor's own derivative
        // vanishes at a root, so p / d is the Newton step there.
        let next = z - p / d;
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if (next - z).abs() <= 1e-16 * z.abs().max(1.0) {
            return next;
        }
        z = next;
    }
    z
}

/// Integrates `f` over `[a, b]` with a composite Gauss–Legendre rule whose
/// panels are no wider than `panel_width`. `f` accumulates into `acc` with
/// the given weight so that vector-valued integrands share one pass.
pub fn composite_legendre<F>(rule: &Rule, a: f64, b: f64, panel_width: f64, mut f: F)
where
    F: FnMut(f64, f64),
{
    if b <= a {
        return;
    }
    let panels = ((b - a) / panel_width).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            f(mid + half * x, half * w);
        }
    }
}

/// Composite Simpson weights for `n` equally spaced nodes on `[0, 1]`.
/// `n` must be odd and at least 3.
pub fn simpson_weights(n: usize) -> Option<Vec<f64>> {
    if n < 3 || n % 2 == 0 {
        return None;
    }
    let h = 1.0 / (n - 1) as f64;
    Some(
        (0..n)
            .map(|i| {
                let c = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect(),
    )
}

/// Quadrature settings for expectations under coupling laws.
#[derive(Debug, Clone)]
pub struct QuadConfig {
    pub hermite: Arc<Rule>,
    /// Lower-order Hermite rule used only for the error estimate.
    pub hermite_check: Arc<Rule>,
    pub legendre: Arc<Rule>,
    pub legendre_check: Arc<Rule>,
    /// Panel width for composite Legendre integration.
    pub panel_width: f64,
    /// Gaussians with standard deviation above this use composite Legendre
    /// instead of Gauss–Hermite. The poles of `tanh` at `i pi/2` slow the
    /// Hermite rule down badly for wide Gaussians.
    pub hermite_max_sd: f64,
    /// Half-width of the truncated Gaussian support, in standard deviations.
    pub gaussian_cutoff_sd: f64,
    /// Maximum tolerated difference between the main and the check rule.
    pub tolerance: f64,
    /// Poisson sums stop once the remaining probability mass is below this.
    pub poisson_tail: f64,
}

impl QuadConfig {
    pub fn new(hermite_nodes: usize, legendre_nodes: usize) -> QuadConfig {
        QuadConfig {
            hermite: Arc::new(Rule::gauss_hermite(hermite_nodes)),
            hermite_check: Arc::new(Rule::gauss_hermite((hermite_nodes * 2 / 3).max(2))),
            legendre: Arc::new(Rule::gauss_legendre(legendre_nodes)),
            legendre_check: Arc::new(Rule::gauss_legendre((legendre_nodes * 2 / 3).max(2))),
            panel_width: 0.5,
            hermite_max_sd: 0.5,
            gaussian_cutoff_sd: 10.0,
            tolerance: 1e-10,
            poisson_tail: 1e-14,
        }
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        static DEFAULT: OnceLock<QuadConfig> = OnceLock::new();
        DEFAULT.get_or_init(|| QuadConfig::new(200, 24)).clone()
    }
}
