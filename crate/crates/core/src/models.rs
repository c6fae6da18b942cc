//! Named spin-glass models as disorder generators.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_poisson, CouplingLaw};
use crate::error::{Error, Result};
use crate::pressure::DisorderSample;
use crate::seeds::SeedPlan;
use crate::stats::{chi2_goodness_of_fit, chi2_independence, normal_two_sided};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    pub h: f64,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `N^2` independent couplings, diagonal included.
    DenseIid { law: CouplingLaw },
    /// A random or fixed number of edges with uniform endpoints.
    EdgeProcess { count: EdgeCount, weight_law: CouplingLaw },
    /// Coupling vector `beta * V * radius / sqrt(2N)` with `V` uniform on the
    /// unit sphere in `N^2` dimensions.
    SphericalSk { beta: f64, radius: Radius },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeCount {
    Poisson { mean: f64 },
    Fixed { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    /// `chi` with `N^2` degrees of freedom.
    Chi,
    /// Exactly `N`, the root mean square of the `chi` radius.
    Fixed,
}

/// Variance of the Gaussian jumps in the Viana–Bray models. Dense
/// Poissonized couplings default to `beta^2 / 2`, edge models to `beta^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpVariance {
    #[default]
    HalfBetaSquared,
    BetaSquared,
}

impl JumpVariance {
    pub fn variance(self, beta: f64) -> f64 {
        match self {
            JumpVariance::HalfBetaSquared => beta * beta / 2.0,
            JumpVariance::BetaSquared => beta * beta,
        }
    }
}

impl ModelSpec {
    /// One disorder realization. Each ingredient reads its own stream of
    /// `seeds`, so two edge models driven by the same plan share endpoints
    /// and weights edge by edge, and two spherical models share the sphere
    /// point.
    pub fn draw(&self, seeds: &SeedPlan, index: u64) -> Result<DisorderSample> {
        let n = self.n;
        match &self.generator {
            Generator::DenseIid { law } => {
                let mut rng = seeds.child("couplings").rng(index);
                let j = (0..n * n).map(|_| law.sample(&mut rng)).collect();
                Ok(DisorderSample::dense(n, self.h, j))
            }
            Generator::EdgeProcess { count, weight_law } => {
                let k = match count {
                    EdgeCount::Poisson { mean } => {
                        sample_poisson(*mean, &mut seeds.child("count").rng(index)) as usize
                    }
                    EdgeCount::Fixed { count } => *count,
                };
                let mut rng = seeds.child("edges").rng(index);
                let edges = (0..k)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        let j = rng.random_range(0..n);
                        (i, j, weight_law.sample(&mut rng))
                    })
                    .collect();
                Ok(DisorderSample::edges(n, self.h, edges))
            }
            Generator::SphericalSk { beta, radius } => {
                let mut rng = seeds.child("sphere").rng(index);
                let g: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                let r = match radius {
                    Radius::Chi => norm,
                    Radius::Fixed => n as f64,
                };
                let scale = beta * r / (norm * (2.0 * n as f64).sqrt());
                Ok(DisorderSample::dense(n, self.h, g.iter().map(|x| x * scale).collect()))
            }
        }
    }

    /// The per-entry coupling law, for dense i.i.d. models.
    pub fn dense_law(&self) -> Option<&CouplingLaw> {
        match &self.generator {
            Generator::DenseIid { law } => Some(law),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("model size must be at least 1"));
        }
        if !self.h.is_finite() {
            return Err(Error::invalid("external field must be finite"));
        }
        match &self.generator {
            Generator::DenseIid { law } => law.validate(),
            Generator::EdgeProcess { count, weight_law } => {
                if let EdgeCount::Poisson { mean } = count {
                    if !(mean.is_finite() && *mean >= 0.0) {
                        return Err(Error::invalid("edge count mean must be nonnegative"));
                    }
                }
                weight_law.validate()
            }
            Generator::SphericalSk { beta, .. } => {
                if !beta.is_finite() {
                    return Err(Error::invalid("beta must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Whether two models can be driven by one seed plan in a meaningful way.
    pub fn check_common_randomness(&self, other: &ModelSpec) -> Result<()> {
        if self == other {
            return Ok(());
        }
        if self.n != other.n {
            return Err(Error::IncompatibleCoupling(format!(
                "sizes differ ({} vs {})",
                self.n, other.n
            )));
        }
        match (&self.generator, &other.generator) {
            (
                Generator::EdgeProcess { weight_law: a, .. },
                Generator::EdgeProcess { weight_law: b, .. },
            ) if a == b => Ok(()),
            (Generator::SphericalSk { beta: a, .. }, Generator::SphericalSk { beta: b, .. })
                if a == b =>
            {
                Ok(())
            }
            _ => Err(Error::IncompatibleCoupling(format!(
                "{} and {} have no shared underlying randomness",
                self.name, other.name
            ))),
        }
    }
}

fn dense(name: &str, n: usize, h: f64, law: CouplingLaw) -> ModelSpec {
    ModelSpec {
        name: name.to_string(),
        n,
        h,
        generator: Generator::DenseIid { law },
    }
}

/// Sherrington–Kirkpatrick: Gaussian couplings of variance `beta^2 / (2N)`.
pub fn sk(beta: f64, n: usize, h: f64) -> ModelSpec {
    dense("sk", n, h, CouplingLaw::gaussian(0.0, beta * beta / (2.0 * n as f64)))
}

/// Couplings `X / sqrt(N)` with `X ~ base`, which must have mean zero.
pub fn universal_sk(base: CouplingLaw, n: usize, h: f64) -> Result<ModelSpec> {
    base.validate()?;
    let m = base.moments()?;
    if m.mu1.abs() > 1e-10 {
        return Err(Error::MomentMismatch(format!(
            "base law has mean {}, expected 0",
            m.mu1
        )));
    }
    Ok(dense("universal_sk", n, h, CouplingLaw::scaled(base, n)))
}

/// Dense Viana–Bray couplings: each entry is a compound Poisson sum with
/// rate `alpha / N` and Gaussian jumps.
pub fn vb_poissonized(alpha: f64, beta: f64, n: usize, h: f64, jumps: JumpVariance) -> ModelSpec {
    let law = CouplingLaw::compound_poisson(
        alpha / n as f64,
        CouplingLaw::gaussian(0.0, jumps.variance(beta)),
    );
    dense("vb_poissonized", n, h, law)
}

/// Dense Viana–Bray couplings with a Bernoulli(`alpha / N`) number of jumps.
pub fn vb_bernoulli(alpha: f64, beta: f64, n: usize, h: f64) -> Result<ModelSpec> {
    let p = alpha / n as f64;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("alpha / N = {p} is not a probability")));
    }
    let law = CouplingLaw::convolution_mixture(
        vec![1.0 - p, p],
        CouplingLaw::gaussian(0.0, JumpVariance::HalfBetaSquared.variance(beta)),
    )?;
    Ok(dense("vb_bernoulli", n, h, law))
}

fn edge_model(name: &str, count: EdgeCount, beta: f64, n: usize, h: f64, jumps: JumpVariance) -> ModelSpec {
    ModelSpec {
        name: name.to_string(),
        n,
        h,
        generator: Generator::EdgeProcess {
            count,
            weight_law: CouplingLaw::gaussian(0.0, jumps.variance(beta)),
        },
    }
}

/// Viana–Bray edge process with a Poisson(`alpha N`) number of edges.
pub fn vb_edge_grand(alpha: f64, beta: f64, n: usize, h: f64, jumps: JumpVariance) -> ModelSpec {
    let mean = alpha * n as f64;
    edge_model("vb_edge_grand", EdgeCount::Poisson { mean }, beta, n, h, jumps)
}

/// Viana–Bray edge process with exactly `floor(alpha N)` edges.
pub fn vb_edge_canonical(alpha: f64, beta: f64, n: usize, h: f64, jumps: JumpVariance) -> ModelSpec {
    let count = (alpha * n as f64).floor() as usize;
    edge_model("vb_edge_canonical", EdgeCount::Fixed { count }, beta, n, h, jumps)
}

/// SK couplings written as a uniform direction times a `chi` radius, and
/// the same direction at fixed radius.
pub fn sk_spherical_pair(beta: f64, n: usize, h: f64) -> (ModelSpec, ModelSpec) {
    let make = |name: &str, radius| ModelSpec {
        name: name.to_string(),
        n,
        h,
        generator: Generator::SphericalSk { beta, radius },
    };
    (make("sk_spherical_grand", Radius::Chi), make("sk_spherical_canonical", Radius::Fixed))
}

/// Model name plus JSON parameters, as accepted by the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Sk { beta: f64, n: usize, #[serde(default)] h: f64 },
    UniversalSk { base: CouplingLaw, n: usize, #[serde(default)] h: f64 },
    VbPoissonized {
        alpha: f64,
        beta: f64,
        n: usize,
        #[serde(default)]
        h: f64,
        #[serde(default)]
        jumps: JumpVariance,
    },
    VbBernoulli { alpha: f64, beta: f64, n: usize, #[serde(default)] h: f64 },
    VbEdgeGrand {
        alpha: f64,
        beta: f64,
        n: usize,
        #[serde(default)]
        h: f64,
        #[serde(default = "beta_squared")]
        jumps: JumpVariance,
    },
    VbEdgeCanonical {
        alpha: f64,
        beta: f64,
        n: usize,
        #[serde(default)]
        h: f64,
        #[serde(default = "beta_squared")]
        jumps: JumpVariance,
    },
    SkSphericalGrand { beta: f64, n: usize, #[serde(default)] h: f64 },
    SkSphericalCanonical { beta: f64, n: usize, #[serde(default)] h: f64 },
    /// Any dense i.i.d. law, given directly.
    Dense { law: CouplingLaw, n: usize, #[serde(default)] h: f64 },
}

fn beta_squared() -> JumpVariance {
    JumpVariance::BetaSquared
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let spec = match self.clone() {
            ModelConfig::Sk { beta, n, h } => sk(beta, n, h),
            ModelConfig::UniversalSk { base, n, h } => universal_sk(base, n, h)?,
            ModelConfig::VbPoissonized { alpha, beta, n, h, jumps } => vb_poissonized(alpha, beta, n, h, jumps),
            ModelConfig::VbBernoulli { alpha, beta, n, h } => vb_bernoulli(alpha, beta, n, h)?,
            ModelConfig::VbEdgeGrand { alpha, beta, n, h, jumps } => vb_edge_grand(alpha, beta, n, h, jumps),
            ModelConfig::VbEdgeCanonical { alpha, beta, n, h, jumps } => {
                vb_edge_canonical(alpha, beta, n, h, jumps)
            }
            ModelConfig::SkSphericalGrand { beta, n, h } => sk_spherical_pair(beta, n, h).0,
            ModelConfig::SkSphericalCanonical { beta, n, h } => sk_spherical_pair(beta, n, h).1,
            ModelConfig::Dense { law, n, h } => dense("dense", n, h, law),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One empirical moment-generating-function check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfCheck {
    pub target: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThinningReport {
    pub samples: usize,
    /// Goodness of fit of each cell count against Poisson(`alpha / N`).
    pub cell_p_values: Vec<f64>,
    /// Independence of the counts in cells `(0,0)` and `(0,1)`.
    pub independence_p_value: f64,
    pub mgf: Vec<MgfCheck>,
}

impl ThinningReport {
    pub fn passes(&self, significance: f64) -> bool {
        self.cell_p_values.iter().all(|p| *p > significance)
            && self.independence_p_value > significance
            && self.mgf.iter().all(|m| m.p_value > significance)
    }

    pub fn min_p_value(&self) -> f64 {
        self.cell_p_values
            .iter()
            .chain(std::iter::once(&self.independence_p_value))
            .chain(self.mgf.iter().map(|m| &m.p_value))
            .cloned()
            .fold(1.0, f64::min)
    }
}

/// Fixed `lambda` vectors for the MGF checks, flattened row-major.
pub fn thinning_lambdas(n: usize) -> Vec<Vec<f64>> {
    let cells = n * n;
    vec![
        vec![0.2; cells],
        (0..cells).map(|c| if c % 2 == 0 { 0.3 } else { -0.3 }).collect(),
        (0..cells).map(|c| 0.4 * c as f64 / cells as f64 - 0.1).collect(),
    ]
}

/// Closed-form joint MGF of independent Poisson(`alpha / N`) cell counts.
pub fn thinning_mgf(alpha: f64, n: usize, lambda: &[f64]) -> f64 {
    let rate = alpha / n as f64;
    lambda.iter().map(|l| rate * (l.exp() - 1.0)).sum::<f64>().exp()
}

/// Splits a Poisson(`alpha N`) number of uniform edges into per-cell counts
/// and checks that the counts behave as independent Poisson(`alpha / N`)
/// variables.
pub fn thinning_equivalence_test(alpha: f64, n: usize, samples: usize, seeds: &SeedPlan) -> Result<ThinningReport> {
    if samples < 10_000 {
        return Err(Error::invalid("thinning test needs at least 10^4 samples"));
    }
    if !(alpha > 0.0) || n == 0 {
        return Err(Error::invalid("thinning test needs alpha > 0 and N >= 1"));
    }
    let cells = n * n;
    let model = vb_edge_grand(alpha, 1.0, n, 0.0, JumpVariance::BetaSquared);
    let counts: Vec<Vec<u32>> = (0..samples as u64)
        .map(|s| {
            let sample = model.draw(seeds, s)?;
            let mut c = vec![0u32; cells];
            if let crate::pressure::Couplings::Edges { edges } = &sample.couplings {
                for &(i, j, _) in edges {
                    c[i * n + j] += 1;
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;

    const BINS: usize = 6;
    let rate = alpha / n as f64;
    let mut probs = vec![0.0; BINS];
    let mut p = (-rate).exp();
    for (k, slot) in probs.iter_mut().enumerate().take(BINS - 1) {
        if k > 0 {
            p *= rate / k as f64;
        }
        *slot = p;
    }
    probs[BINS - 1] = 1.0 - probs[..BINS - 1].iter().sum::<f64>();

    let cell_p_values = (0..cells)
        .map(|c| {
            let mut hist = vec![0u64; BINS];
            for row in &counts {
                hist[(row[c] as usize).min(BINS - 1)] += 1;
            }
            chi2_goodness_of_fit(&hist, &probs).2
        })
        .collect();

    const CATS: usize = 3;
    let mut table = vec![vec![0u64; CATS]; CATS];
    let second = 1.min(cells - 1);
    for row in &counts {
        table[(row[0] as usize).min(CATS - 1)][(row[second] as usize).min(CATS - 1)] += 1;
    }
    let independence_p_value = if cells > 1 { chi2_independence(&table).2 } else { 1.0 };

    let mgf = thinning_lambdas(n)
        .iter()
        .map(|lambda| {
            let values: Vec<f64> = counts
                .iter()
                .map(|row| row.iter().zip(lambda).map(|(k, l)| *k as f64 * l).sum::<f64>().exp())
                .collect();
            let (estimate, var) = crate::numeric::mean_and_variance(&values);
            let stderr = (var / samples as f64).sqrt();
            let target = thinning_mgf(alpha, n, lambda);
            MgfCheck {
                target,
                estimate,
                stderr,
                p_value: normal_two_sided((estimate - target) / stderr),
            }
        })
        .collect();

    Ok(ThinningReport {
        samples,
        cell_p_values,
        independence_p_value,
        mgf,
    })
}
