//! Coupling laws: moments, the `a_k` functionals, the seminorm distance
//! built from them, and sampling.
//!
//! `a_0(F) = E[ln cosh J]` and `a_k(F) = E[tanh^k J] / k` for `k >= 1`,
//! where `J ~ F`.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::{even_tail, ln_cosh, odd_tail};
use crate::quadrature::{composite_legendre, QuadConfig};

/// One-dimensional distribution of a single coupling constant.
///
/// Serializes as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CouplingLaw {
    PointMass { value: f64 },
    /// `+b` or `-b` with probability one half each.
    Rademacher { b: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// Uniform on `[-a, a]`.
    Uniform { a: f64 },
    /// Law of `X / sqrt(n)` for `X ~ base`; its c.d.f. is `F(sqrt(n) x)`.
    Scaled { base: Box<CouplingLaw>, n: usize },
    /// `sum_k pmf[k] * base^{*k}`, the law of a sum of a random number of
    /// independent `base` draws.
    ConvolutionMixture { pmf: Vec<f64>, base: Box<CouplingLaw> },
    /// Sum of a Poisson(`rate`) number of independent `jump` draws.
    CompoundPoisson { rate: f64, jump: Box<CouplingLaw> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl MomentPair {
    fn new(mu1: f64, mu2: f64) -> MomentPair {
        MomentPair {
            mu1,
            mu2,
            sigma2: (mu2 - mu1 * mu1).max(0.0),
        }
    }
}

/// Output of [`seminorm_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormDistance {
    /// `sum_{k=0}^{k_max} |a_k(A) - a_k(B)|`.
    pub truncated: f64,
    /// Upper bound on `sum_{k > k_max} |a_k(A) - a_k(B)|`.
    pub tail: f64,
}

impl SeminormDistance {
    pub fn total(&self) -> f64 {
        self.truncated + self.tail
    }
}

impl CouplingLaw {
    pub fn point_mass(value: f64) -> CouplingLaw {
        CouplingLaw::PointMass { value }
    }

    pub fn rademacher(b: f64) -> CouplingLaw {
        CouplingLaw::Rademacher { b }
    }

    pub fn gaussian(mean: f64, variance: f64) -> CouplingLaw {
        CouplingLaw::Gaussian { mean, variance }
    }

    pub fn uniform(a: f64) -> CouplingLaw {
        CouplingLaw::Uniform { a }
    }

    pub fn scaled(base: CouplingLaw, n: usize) -> CouplingLaw {
        CouplingLaw::Scaled {
            base: Box::new(base),
            n,
        }
    }

    pub fn convolution_mixture(pmf: Vec<f64>, base: CouplingLaw) -> Result<CouplingLaw> {
        let law = CouplingLaw::ConvolutionMixture {
            pmf,
            base: Box::new(base),
        };
        law.validate()?;
        Ok(law)
    }

    pub fn compound_poisson(rate: f64, jump: CouplingLaw) -> CouplingLaw {
        CouplingLaw::CompoundPoisson {
            rate,
            jump: Box::new(jump),
        }
    }

    /// Checks parameter ranges recursively. Deserialized laws should be
    /// validated before use.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite, got {x}")))
            }
        };
        match self {
            CouplingLaw::PointMass { value } => finite("point mass", *value),
            CouplingLaw::Rademacher { b } => finite("rademacher b", *b),
            CouplingLaw::Gaussian { mean, variance } => {
                finite("gaussian mean", *mean)?;
                finite("gaussian variance", *variance)?;
                if *variance < 0.0 {
                    return Err(Error::invalid("gaussian variance must be nonnegative"));
                }
                Ok(())
            }
            CouplingLaw::Uniform { a } => {
                finite("uniform a", *a)?;
                if *a < 0.0 {
                    return Err(Error::invalid("uniform half-width must be nonnegative"));
                }
                Ok(())
            }
            CouplingLaw::Scaled { base, n } => {
                if *n == 0 {
                    return Err(Error::invalid("scaled law needs n >= 1"));
                }
                base.validate()
            }
            CouplingLaw::ConvolutionMixture { pmf, base } => {
                if pmf.is_empty() {
                    return Err(Error::invalid("mixture pmf is empty"));
                }
                if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::invalid("mixture pmf entries must be nonnegative"));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "mixture pmf sums to {total}, not 1 within 1e-12"
                    )));
                }
                base.validate()
            }
            CouplingLaw::CompoundPoisson { rate, jump } => {
                finite("compound poisson rate", *rate)?;
                if *rate < 0.0 {
                    return Err(Error::invalid("compound poisson rate must be nonnegative"));
                }
                jump.validate()
            }
        }
    }

    /// True when the law is symmetric about zero by construction.
    pub fn is_symmetric(&self) -> bool {
        match self {
            CouplingLaw::PointMass { value } => *value == 0.0,
            CouplingLaw::Rademacher { .. } | CouplingLaw::Uniform { .. } => true,
            CouplingLaw::Gaussian { mean, .. } => *mean == 0.0,
            CouplingLaw::Scaled { base, .. } => base.is_symmetric(),
            CouplingLaw::ConvolutionMixture { pmf, base } => {
                base.is_symmetric() || pmf.iter().skip(1).all(|p| *p == 0.0)
            }
            CouplingLaw::CompoundPoisson { rate, jump } => *rate == 0.0 || jump.is_symmetric(),
        }
    }

    /// First and second moments in closed form.
    pub fn moments(&self) -> Result<MomentPair> {
        Ok(match self {
            CouplingLaw::PointMass { value } => MomentPair::new(*value, value * value),
            CouplingLaw::Rademacher { b } => MomentPair::new(0.0, b * b),
            CouplingLaw::Gaussian { mean, variance } => {
                MomentPair::new(*mean, variance + mean * mean)
            }
            CouplingLaw::Uniform { a } => MomentPair::new(0.0, a * a / 3.0),
            CouplingLaw::Scaled { base, n } => {
                let m = base.moments()?;
                let nf = *n as f64;
                MomentPair::new(m.mu1 / nf.sqrt(), m.mu2 / nf)
            }
            CouplingLaw::ConvolutionMixture { pmf, base } => {
                let m = base.moments()?;
                let var = m.mu2 - m.mu1 * m.mu1;
                let mut mu1 = 0.0;
                let mut mu2 = 0.0;
                for (k, p) in pmf.iter().enumerate() {
                    let kf = k as f64;
                    mu1 += p * kf * m.mu1;
                    mu2 += p * (kf * var + (kf * m.mu1).powi(2));
                }
                MomentPair::new(mu1, mu2)
            }
            CouplingLaw::CompoundPoisson { rate, jump } => {
                let m = jump.moments()?;
                MomentPair::new(rate * m.mu1, rate * m.mu2 + (rate * m.mu1).powi(2))
            }
        })
    }

    /// Draws one coupling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CouplingLaw::PointMass { value } => *value,
            CouplingLaw::Rademacher { b } => {
                if rng.random::<bool>() {
                    *b
                } else {
                    -*b
                }
            }
            CouplingLaw::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            CouplingLaw::Uniform { a } => {
                let u: f64 = rng.random();
                *a * (2.0 * u - 1.0)
            }
            CouplingLaw::Scaled { base, n } => base.sample(rng) / (*n as f64).sqrt(),
            CouplingLaw::ConvolutionMixture { pmf, base } => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut k = pmf.len() - 1;
                for (i, p) in pmf.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        k = i;
                        break;
                    }
                }
                (0..k).map(|_| base.sample(rng)).sum()
            }
            CouplingLaw::CompoundPoisson { rate, jump } => {
                let k = sample_poisson(*rate, rng);
                (0..k).map(|_| jump.sample(rng)).sum()
            }
        }
    }

    /// `E[f(J)]` for a vector-valued `f` of dimension `dim`, with an error
    /// estimate from a lower-order rule.
    pub fn expect_vec(
        &self,
        dim: usize,
        f: &dyn Fn(f64, &mut [f64]),
        quad: &QuadConfig,
    ) -> Result<Vec<f64>> {
        let mut main = vec![0.0; dim];
        let mut check = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        self.accumulate(1.0, 1.0, f, quad, false, &mut main, &mut tmp)?;
        self.accumulate(1.0, 1.0, f, quad, true, &mut check, &mut tmp)?;
        let estimate = main
            .iter()
            .zip(&check)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(estimate <= quad.tolerance) {
            return Err(Error::QuadratureFailure {
                estimate,
                tolerance: quad.tolerance,
            });
        }
        Ok(main)
    }

    /// `E[f(J)]` for scalar `f`.
    pub fn expect(&self, f: &dyn Fn(f64) -> f64, quad: &QuadConfig) -> Result<f64> {
        let v = self.expect_vec(1, &|x, out: &mut [f64]| out[0] = f(x), quad)?;
        Ok(v[0])
    }

    /// Adds `weight * E[f(scale * J)]` to `acc`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        scale: f64,
        weight: f64,
        f: &dyn Fn(f64, &mut [f64]),
        quad: &QuadConfig,
        check: bool,
        acc: &mut [f64],
        tmp: &mut [f64],
    ) -> Result<()> {
        match self {
            CouplingLaw::PointMass { value } => add_point(f, scale * value, weight, acc, tmp),
            CouplingLaw::Rademacher { b } => {
                add_point(f, scale * b, 0.5 * weight, acc, tmp);
                add_point(f, -scale * b, 0.5 * weight, acc, tmp);
            }
            CouplingLaw::Gaussian { mean, variance } => gaussian_accumulate(
                scale * mean,
                scale.abs() * variance.sqrt(),
                weight,
                f,
                quad,
                check,
                acc,
                tmp,
            ),
            CouplingLaw::Uniform { a } => {
                let half = (scale * a).abs();
                if half == 0.0 {
                    add_point(f, 0.0, weight, acc, tmp);
                } else {
                    let rule = if check { &quad.legendre_check } else { &quad.legendre };
                    let density = weight / (2.0 * half);
                    composite_legendre(rule, -half, half, quad.panel_width, |x, w| {
                        add_point(f, x, w * density, acc, tmp)
                    });
                }
            }
            CouplingLaw::Scaled { base, n } => {
                base.accumulate(scale / (*n as f64).sqrt(), weight, f, quad, check, acc, tmp)?
            }
            CouplingLaw::ConvolutionMixture { pmf, base } => {
                for (k, p) in pmf.iter().enumerate() {
                    if *p > 0.0 {
                        base.accumulate_sum(k, scale, weight * p, f, quad, check, acc, tmp)?;
                    }
                }
            }
            CouplingLaw::CompoundPoisson { rate, jump } => {
                for (k, p) in poisson_weights(*rate, quad.poisson_tail) {
                    jump.accumulate_sum(k, scale, weight * p, f, quad, check, acc, tmp)?;
                }
            }
        }
        Ok(())
    }

    /// Adds `weight * E[f(scale * (J_1 + ... + J_k))]` for i.i.d. copies.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_sum(
        &self,
        k: usize,
        scale: f64,
        weight: f64,
        f: &dyn Fn(f64, &mut [f64]),
        quad: &QuadConfig,
        check: bool,
        acc: &mut [f64],
        tmp: &mut [f64],
    ) -> Result<()> {
        if k == 0 {
            add_point(f, 0.0, weight, acc, tmp);
            return Ok(());
        }
        if k == 1 {
            return self.accumulate(scale, weight, f, quad, check, acc, tmp);
        }
        let kf = k as f64;
        match self {
            CouplingLaw::PointMass { value } => add_point(f, scale * kf * value, weight, acc, tmp),
            CouplingLaw::Rademacher { b } => {
                let ln_half_k = -kf * std::f64::consts::LN_2;
                for j in 0..=k {
                    let p = (ln_binomial(k as u64, j as u64) + ln_half_k).exp();
                    let x = scale * b * (2.0 * j as f64 - kf);
                    add_point(f, x, weight * p, acc, tmp);
                }
            }
            CouplingLaw::Gaussian { mean, variance } => gaussian_accumulate(
                scale * kf * mean,
                scale.abs() * (kf * variance).sqrt(),
                weight,
                f,
                quad,
                check,
                acc,
                tmp,
            ),
            CouplingLaw::Scaled { base, n } => base.accumulate_sum(
                k,
                scale / (*n as f64).sqrt(),
                weight,
                f,
                quad,
                check,
                acc,
                tmp,
            )?,
            other => {
                return Err(Error::UnsupportedLaw(format!(
                    "no quadrature path for {k}-fold convolution of {}",
                    other.kind_name()
                )))
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CouplingLaw::PointMass { .. } => "point_mass",
            CouplingLaw::Rademacher { .. } => "rademacher",
            CouplingLaw::Gaussian { .. } => "gaussian",
            CouplingLaw::Uniform { .. } => "uniform",
            CouplingLaw::Scaled { .. } => "scaled",
            CouplingLaw::ConvolutionMixture { .. } => "convolution_mixture",
            CouplingLaw::CompoundPoisson { .. } => "compound_poisson",
        }
    }
}

fn add_point(f: &dyn Fn(f64, &mut [f64]), x: f64, weight: f64, acc: &mut [f64], tmp: &mut [f64]) {
    f(x, tmp);
    for (a, t) in acc.iter_mut().zip(tmp.iter()) {
        *a += weight * t;
    }
}

#[allow(clippy::too_many_arguments)]
fn gaussian_accumulate(
    mean: f64,
    sd: f64,
    weight: f64,
    f: &dyn Fn(f64, &mut [f64]),
    quad: &QuadConfig,
    check: bool,
    acc: &mut [f64],
    tmp: &mut [f64],
) {
    if sd == 0.0 {
        add_point(f, mean, weight, acc, tmp);
    } else if sd <= quad.hermite_max_sd {
        let rule = if check { &quad.hermite_check } else { &quad.hermite };
        let norm = weight / std::f64::consts::PI.sqrt();
        let s = std::f64::consts::SQRT_2 * sd;
        for (z, w) in rule.nodes.iter().zip(&rule.weights) {
            add_point(f, mean + s * z, w * norm, acc, tmp);
        }
    } else {
        let rule = if check { &quad.legendre_check } else { &quad.legendre };
        let c = quad.gaussian_cutoff_sd * sd;
        let norm = weight / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let width = quad.panel_width.min(sd);
        composite_legendre(rule, mean - c, mean + c, width, |x, w| {
            let z = (x - mean) / sd;
            add_point(f, x, w * norm * (-0.5 * z * z).exp(), acc, tmp)
        });
    }
}

/// Poisson probabilities `(k, P(K = k))` until the remaining mass is below
/// `tail`.
pub(crate) fn poisson_weights(rate: f64, tail: f64) -> Vec<(usize, f64)> {
    if rate == 0.0 {
        return vec![(0, 1.0)];
    }
    let mut out = Vec::new();
    let mut cum = 0.0;
    let ln_rate = rate.ln();
    let mut k = 0usize;
    loop {
        let p = (-rate + k as f64 * ln_rate - ln_gamma(k as f64 + 1.0)).exp();
        cum += p;
        if p > 0.0 {
            out.push((k, p));
        }
        if (1.0 - cum) < tail && k as f64 >= rate {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    out
}

/// Poisson draw; sequential inversion for small means.
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    if rate < 30.0 {
        let u: f64 = rng.random();
        let mut p = (-rate).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf && k < 1000 {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
        }
        k
    } else {
        let d = Poisson::new(rate).expect("finite positive rate");
        d.sample(rng) as u64
    }
}

/// `a_0, ..., a_{k_max}` in one quadrature pass.
pub fn a_coefficients(law: &CouplingLaw, k_max: usize, quad: &QuadConfig) -> Result<Vec<f64>> {
    law.expect_vec(k_max + 1, &|x, out: &mut [f64]| phi_vector(x, out), quad)
}

/// `a_k(law)`.
pub fn a_coefficient(law: &CouplingLaw, k: usize, quad: &QuadConfig) -> Result<f64> {
    Ok(a_coefficients(law, k, quad)?[k])
}

/// Fills `out[0] = ln cosh x` and `out[k] = tanh^k(x) / k`.
fn phi_vector(x: f64, out: &mut [f64]) {
    out[0] = ln_cosh(x);
    let t = x.tanh();
    let mut p = 1.0;
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        p *= t;
        *o = p / k as f64;
    }
}

/// `a_k` coefficients together with the even and odd series remainders past
/// `k_max`, as expectations under `law`.
fn coefficients_with_tails(
    law: &CouplingLaw,
    k_max: usize,
    quad: &QuadConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let dim = k_max + 3;
    let v = law.expect_vec(
        dim,
        &|x, out: &mut [f64]| {
            phi_vector(x, &mut out[..=k_max]);
            out[k_max + 1] = even_tail(x, k_max);
            out[k_max + 2] = odd_tail(x, k_max);
        },
        quad,
    )?;
    let even = v[k_max + 1];
    let odd = v[k_max + 2];
    Ok((v[..=k_max].to_vec(), even, odd))
}

/// Distance between two laws in the `sum_k |a_k|` seminorm, split into the
/// computed part up to `k_max` and a bound on the rest.
///
/// The even remainder of each law comes from
/// `sum_{k>=2} tanh^{2k}(x)/(2k) = ln cosh x - tanh^2(x)/2`, the odd one
/// from `sum_{k>=1} |tanh x|^{2k+1}/(2k+1) = |x| - |tanh x|`. Odd terms are
/// skipped when both laws are symmetric, since then every odd `a_k` is zero.
pub fn seminorm_distance(
    a: &CouplingLaw,
    b: &CouplingLaw,
    k_max: usize,
    quad: &QuadConfig,
) -> Result<SeminormDistance> {
    if k_max < 2 {
        return Err(Error::invalid("seminorm distance needs k_max >= 2"));
    }
    let (ca, even_a, odd_a) = coefficients_with_tails(a, k_max, quad)?;
    let (cb, even_b, odd_b) = coefficients_with_tails(b, k_max, quad)?;
    let both_symmetric = a.is_symmetric() && b.is_symmetric();
    let truncated = ca
        .iter()
        .zip(&cb)
        .enumerate()
        .filter(|(k, _)| !(both_symmetric && k % 2 == 1))
        .map(|(_, (x, y))| (x - y).abs())
        .sum();
    let mut tail = if a == b { 0.0 } else { even_a + even_b };
    if !both_symmetric && a != b {
        tail += odd_a + odd_b;
    }
    Ok(SeminormDistance { truncated, tail })
}
