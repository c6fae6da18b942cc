//! Lévy–Khinchine layer: symmetric infinitely divisible coupling laws given
//! by a Gaussian weight `v` and a jump measure `Λ` on `(0, ∞)`.
//!
//! Jump densities are discretized once into quadrature atoms, so every
//! downstream operation works on a finite atom list. A second, coarser
//! discretization is kept to estimate the quadrature error.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_poisson, CouplingLaw};
use crate::error::{Error, Result};
use crate::models::{sk, ModelConfig, ModelSpec};
use crate::numeric::{even_tail, ln_cosh, mean_and_variance, pairwise_sum};
use crate::pressure::{overlap_square_moments, random_pressure, DisorderSample};
use crate::quadrature::{simpson_weights, Rule};
use crate::seeds::SeedPlan;
use crate::disorder_mc::{difference_estimate, Pairing, PressureEstimate};

/// Largest number of atoms a density may be discretized into.
pub const MAX_DENSITY_NODES: usize = 512;
const DEFAULT_DENSITY_NODES: usize = 256;
const QUAD_TOLERANCE: f64 = 1e-10;
/// Step of the central-difference fallback for second derivatives.
pub const FD_STEP: f64 = 1e-5;
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    /// Only `"half_gaussian"` is known: `2 exp(-y^2/beta^2) / sqrt(pi beta^2)` on `(0, ∞)`.
    pub name: String,
    pub beta: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Multiplier of the density, so `weight = alpha` gives `alpha Λ*_beta`.
    #[serde(default = "one")]
    pub weight: f64,
}

fn default_nodes() -> usize {
    DEFAULT_DENSITY_NODES
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyPairSpec {
    v: f64,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<DensitySpec>,
}

/// Lévy–Khinchine pair `(Λ, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyPairSpec", into = "LevyPairSpec")]
pub struct LevyPair {
    v: f64,
    atoms: Vec<(f64, f64)>,
    density: Option<DensitySpec>,
    /// Explicit atoms followed by the density atoms.
    jumps: Vec<(f64, f64)>,
    /// Same with the coarser check discretization; `None` without density.
    check_jumps: Option<Vec<(f64, f64)>>,
    cumulative: Vec<f64>,
}

impl TryFrom<LevyPairSpec> for LevyPair {
    type Error = Error;

    fn try_from(spec: LevyPairSpec) -> Result<LevyPair> {
        LevyPair::new(spec.v, spec.atoms, spec.density)
    }
}

impl From<LevyPair> for LevyPairSpec {
    fn from(p: LevyPair) -> LevyPairSpec {
        LevyPairSpec {
            v: p.v,
            atoms: p.atoms,
            density: p.density,
        }
    }
}

/// Mass and second-moment error of a discretized density, relative to the
/// exact values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscretizationError {
    pub mass: f64,
    pub second_moment: f64,
}

fn hermite_rule(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("rule cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(Rule::gauss_hermite(n)))
        .clone()
}

/// Atoms of `weight · Λ*_beta` from the positive half of a symmetric
/// Gauss–Hermite rule with `2 nodes` points. Exact for even polynomials.
fn half_gaussian_atoms(beta: f64, nodes: usize, weight: f64) -> Vec<(f64, f64)> {
    let rule = hermite_rule(2 * nodes);
    let c = 2.0 / std::f64::consts::PI.sqrt() * weight;
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .filter(|(z, _)| **z > 0.0)
        .map(|(z, w)| (beta * z, c * w))
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

fn density_atoms(d: &DensitySpec, nodes: usize) -> Vec<(f64, f64)> {
    half_gaussian_atoms(d.beta, nodes, d.weight)
}

impl LevyPair {
    pub fn new(v: f64, atoms: Vec<(f64, f64)>, density: Option<DensitySpec>) -> Result<LevyPair> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("Gaussian weight must be finite and >= 0, got {v}")));
        }
        for &(y, w) in &atoms {
            if !(y > 0.0 && y.is_finite() && w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("atom ({y}, {w}) needs y > 0 and w >= 0")));
            }
        }
        let (mut jumps, mut check_jumps) = (atoms.clone(), None);
        if let Some(d) = &density {
            if d.name != "half_gaussian" {
                return Err(Error::invalid(format!("unknown density {:?}", d.name)));
            }
            if !(d.beta > 0.0 && d.beta.is_finite() && d.weight >= 0.0 && d.weight.is_finite()) {
                return Err(Error::invalid("half_gaussian needs beta > 0 and weight >= 0"));
            }
            if d.nodes < 3 || d.nodes > MAX_DENSITY_NODES {
                return Err(Error::invalid(format!(
                    "density nodes must lie in 3..={MAX_DENSITY_NODES}, got {}",
                    d.nodes
                )));
            }
            let mut check = atoms.clone();
            check.extend(density_atoms(d, d.nodes * 2 / 3));
            check_jumps = Some(check);
            jumps.extend(density_atoms(d, d.nodes));
        }
        Ok(LevyPair::assemble(v, atoms, density, jumps, check_jumps))
    }

    fn assemble(
        v: f64,
        atoms: Vec<(f64, f64)>,
        density: Option<DensitySpec>,
        jumps: Vec<(f64, f64)>,
        check_jumps: Option<Vec<(f64, f64)>>,
    ) -> LevyPair {
        let mut acc = 0.0;
        let cumulative = jumps
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        LevyPair {
            v,
            atoms,
            density,
            jumps,
            check_jumps,
            cumulative,
        }
    }

    /// Pure Gaussian pair `(0, v)`.
    pub fn gaussian(v: f64) -> Result<LevyPair> {
        LevyPair::new(v, Vec::new(), None)
    }

    /// Single atom `w δ_y` with Gaussian weight `v`.
    pub fn atom(y: f64, w: f64, v: f64) -> Result<LevyPair> {
        LevyPair::new(v, vec![(y, w)], None)
    }

    /// `weight · Λ*_beta`: jumps are `N(0, beta^2/2)` at total rate `weight`.
    pub fn half_gaussian(beta: f64, weight: f64) -> Result<LevyPair> {
        LevyPair::new(
            0.0,
            Vec::new(),
            Some(DensitySpec {
                name: "half_gaussian".into(),
                beta,
                nodes: DEFAULT_DENSITY_NODES,
                weight,
            }),
        )
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Discretized jump atoms `(y, w)`.
    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn total_rate(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn discretization_error(&self) -> Option<DiscretizationError> {
        let d = self.density.as_ref()?;
        let atoms = density_atoms(d, d.nodes);
        let mass: f64 = atoms.iter().map(|(_, w)| w).sum();
        let m2: f64 = atoms.iter().map(|(y, w)| w * y * y).sum();
        let exact_m2 = d.weight * d.beta * d.beta / 2.0;
        let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a - b).abs() / b };
        Some(DiscretizationError {
            mass: rel(mass, d.weight),
            second_moment: rel(m2, exact_m2),
        })
    }

    /// `t (Λ, v)`.
    pub fn scaled(&self, t: f64) -> Result<LevyPair> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("scale must be finite and >= 0, got {t}")));
        }
        let scale = |a: &[(f64, f64)]| a.iter().map(|&(y, w)| (y, w * t)).collect::<Vec<_>>();
        let density = self.density.clone().map(|mut d| {
            d.weight *= t;
            d
        });
        Ok(LevyPair::assemble(
            self.v * t,
            scale(&self.atoms),
            density,
            scale(&self.jumps),
            self.check_jumps.as_deref().map(scale),
        ))
    }

    /// `(Λ₁ + Λ₂, v₁ + v₂)`. If both carry a density, the second one is
    /// folded into the explicit atoms in its discretized form.
    pub fn plus(&self, other: &LevyPair) -> LevyPair {
        let mut atoms = self.atoms.clone();
        atoms.extend(&other.atoms);
        let density = match (&self.density, &other.density) {
            (Some(d), Some(_)) => {
                atoms.extend(other.jumps[other.atoms.len()..].iter().copied());
                Some(d.clone())
            }
            (Some(d), None) | (None, Some(d)) => Some(d.clone()),
            (None, None) => None,
        };
        let mut jumps = self.jumps.clone();
        jumps.extend(&other.jumps);
        let check_jumps = match (&self.check_jumps, &other.check_jumps) {
            (None, None) => None,
            (a, b) => {
                let mut c = a.clone().unwrap_or_else(|| self.jumps.clone());
                c.extend(b.clone().unwrap_or_else(|| other.jumps.clone()));
                Some(c)
            }
        };
        LevyPair::assemble(self.v + other.v, atoms, density, jumps, check_jumps)
    }

    /// `∫ g dΛ` on the main discretization, checked against the coarse one.
    pub fn integrate(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        let main = integrate_atoms(&self.jumps, g);
        if let Some(check) = &self.check_jumps {
            let c = integrate_atoms(check, g);
            let tol = QUAD_TOLERANCE * (1.0 + main.abs());
            if (main - c).abs() > tol || !main.is_finite() {
                return Err(Error::QuadratureFailure {
                    estimate: (main - c).abs(),
                    tolerance: tol,
                });
            }
        }
        Ok(main)
    }

    /// The coupling law `F_{(Λ,v)}` when it is expressible as a
    /// [`CouplingLaw`]: a pure Gaussian, a single atom, or a single density.
    pub fn coupling_law(&self) -> Result<CouplingLaw> {
        let has_jumps = self.total_rate() > 0.0;
        match (self.v > 0.0, has_jumps, self.atoms.len(), &self.density) {
            (_, false, _, _) => Ok(CouplingLaw::gaussian(0.0, self.v)),
            (false, true, 1, None) => {
                let (y, w) = self.atoms[0];
                Ok(CouplingLaw::compound_poisson(w, CouplingLaw::rademacher(y)))
            }
            (false, true, 0, Some(d)) => Ok(CouplingLaw::compound_poisson(
                d.weight,
                CouplingLaw::gaussian(0.0, d.beta * d.beta / 2.0),
            )),
            _ => Err(Error::UnsupportedLaw(
                "only Gaussian, single-atom or single-density pairs map to a coupling law".into(),
            )),
        }
    }
}

fn integrate_atoms(atoms: &[(f64, f64)], g: &dyn Fn(f64) -> f64) -> f64 {
    let terms: Vec<f64> = atoms
        .iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|&(y, w)| w * g(y))
        .collect();
    pairwise_sum(&terms)
}

/// Characteristic exponent `Ψ(k) = v k^2/2 + ∫ (1 - cos ky) Λ(dy)`.
pub fn psi(pair: &LevyPair, k: f64) -> Result<f64> {
    let jumps = pair.integrate(&|y| 2.0 * (0.5 * k * y).sin().powi(2))?;
    Ok(0.5 * pair.v * k * k + jumps)
}

/// `a*_index` for an even index.
pub fn a_star(pair: &LevyPair, index: usize) -> Result<f64> {
    if index % 2 == 1 {
        return Err(Error::invalid(format!("a* is defined for even indices only, got {index}")));
    }
    match index {
        0 => Ok(0.5 * pair.v + pair.integrate(&ln_cosh)?),
        2 => Ok(0.5 * pair.v + 0.5 * pair.integrate(&|y| y.tanh().powi(2))?),
        _ => {
            let p = index as i32;
            Ok(pair.integrate(&|y| y.tanh().powi(p))? / index as f64)
        }
    }
}

/// `a*_0, a*_2, ..., a*_{2 k_max}`.
pub fn a_star_all(pair: &LevyPair, k_max: usize) -> Result<Vec<f64>> {
    (0..=k_max).map(|k| a_star(pair, 2 * k)).collect()
}

/// One draw from `F_{(tΛ, tv)}`.
pub fn sample_levy<R: Rng + ?Sized>(pair: &LevyPair, t: f64, rng: &mut R) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut x = 0.0;
    if pair.v > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        x += (t * pair.v).sqrt() * z;
    }
    let total = pair.total_rate();
    if total > 0.0 {
        let count = sample_poisson(t * total, rng);
        for _ in 0..count {
            let u: f64 = rng.random::<f64>() * total;
            let idx = pair.cumulative.partition_point(|&c| c <= u).min(pair.jumps.len() - 1);
            let y = pair.jumps[idx].0;
            x += if rng.random::<bool>() { y } else { -y };
        }
    }
    x
}

/// A test function for the generator.
pub trait TestFunction: Sync {
    fn value(&self, x: f64) -> f64;

    /// Central difference with step [`FD_STEP`]. The truncation error is
    /// about `1e-11 |f''''|`, but cancellation adds roughly `1e-6 |f|`, so
    /// callers that need more must override this.
    fn second_derivative(&self, x: f64) -> f64 {
        let h = FD_STEP;
        (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
    }

    /// `½f(x+y) - f(x) + ½f(x-y)`.
    fn jump_term(&self, x: f64, y: f64) -> f64 {
        0.5 * self.value(x + y) - self.value(x) + 0.5 * self.value(x - y)
    }
}

/// `f = ln cosh` with closed-form derivative and jump term.
#[derive(Debug, Clone, Copy)]
pub struct LnCosh;

impl TestFunction for LnCosh {
    fn value(&self, x: f64) -> f64 {
        ln_cosh(x)
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let c = x.cosh();
        1.0 / (c * c)
    }

    fn jump_term(&self, x: f64, y: f64) -> f64 {
        // cosh(x+y) cosh(x-y) = cosh^2 x + sinh^2 y
        if y.abs() < 20.0 && x.abs() < 300.0 {
            0.5 * (y.sinh() / x.cosh()).powi(2).ln_1p()
        } else {
            0.5 * (ln_cosh(x + y) + ln_cosh(x - y)) - ln_cosh(x)
        }
    }
}

/// `f(x) = slope x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub slope: f64,
    pub intercept: f64,
}

impl TestFunction for Linear {
    fn value(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn second_derivative(&self, _x: f64) -> f64 {
        0.0
    }

    fn jump_term(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
}

/// Any closure, with the finite-difference second derivative.
pub struct FnTest<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> TestFunction for FnTest<F> {
    fn value(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// `G f(x) = (v/2) f''(x) + ∫ (½f(x+y) - f(x) + ½f(x-y)) Λ(dy)`.
pub fn generator_apply(pair: &LevyPair, f: &dyn TestFunction, x: f64) -> Result<f64> {
    let jumps = pair.integrate(&|y| f.jump_term(x, y))?;
    Ok(diffusion_term(pair, f, x) + jumps)
}

fn diffusion_term(pair: &LevyPair, f: &dyn TestFunction, x: f64) -> f64 {
    if pair.v == 0.0 {
        0.0
    } else {
        0.5 * pair.v * f.second_derivative(x)
    }
}

/// Generator on the main discretization only, for inner Monte Carlo loops.
fn generator_fast(pair: &LevyPair, f: &dyn TestFunction, x: f64) -> f64 {
    diffusion_term(pair, f, x) + integrate_atoms(&pair.jumps, &|y| f.jump_term(x, y))
}

/// `m` values of `draw`, computed in fixed chunks with one stream per chunk.
fn mc_values<F>(m: usize, seeds: &SeedPlan, draw: F) -> Vec<f64>
where
    F: Fn(&mut crate::seeds::Rng) -> f64 + Sync,
{
    let chunks = m.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds.rng(c as u64);
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_and_variance(values);
    (mean, (var / values.len() as f64).sqrt())
}

/// `t Λ₂ + (1-t) Λ₁` paired with `t v₂ + (1-t) v₁`.
pub fn mixture(pair1: &LevyPair, pair2: &LevyPair, t: f64) -> Result<LevyPair> {
    Ok(pair1.scaled(1.0 - t)?.plus(&pair2.scaled(t)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub residual: f64,
    pub combined_stderr: f64,
    /// Deterministic bound on terms dropped from the right side.
    pub truncation_bound: f64,
}

impl ResidualReport {
    fn new(lhs: (f64, f64), rhs: (f64, f64), truncation_bound: f64) -> ResidualReport {
        ResidualReport {
            lhs: lhs.0,
            lhs_stderr: lhs.1,
            rhs: rhs.0,
            rhs_stderr: rhs.1,
            residual: lhs.0 - rhs.0,
            combined_stderr: lhs.1.hypot(rhs.1),
            truncation_bound,
        }
    }

    /// `|residual| <= sigmas · combined stderr`.
    pub fn passes(&self, sigmas: f64) -> bool {
        self.residual.abs() <= sigmas * self.combined_stderr
    }
}

fn check_nodes(t_nodes: usize) -> Result<Vec<f64>> {
    simpson_weights(t_nodes)
        .ok_or_else(|| Error::invalid(format!("Simpson needs an odd node count >= 3, got {t_nodes}")))
}

/// Checks `E₂f - E₁f = ∫₀¹ E_t[(G₂ - G₁) f] dt` by Monte Carlo on both sides.
pub fn interpolation_identity_check(
    pair1: &LevyPair,
    pair2: &LevyPair,
    f: &dyn TestFunction,
    t_nodes: usize,
    m: usize,
    seeds: &SeedPlan,
) -> Result<ResidualReport> {
    let weights = check_nodes(t_nodes)?;
    if m < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    a_star(pair1, 0)?;
    a_star(pair2, 0)?;
    // Validate the generator quadrature once before the unchecked inner loop.
    for x in [-3.0, -1.0, 0.0, 0.5, 2.0] {
        generator_apply(pair1, f, x)?;
        generator_apply(pair2, f, x)?;
    }
    let e1 = mc_values(m, &seeds.child("lhs1"), |rng| f.value(sample_levy(pair1, 1.0, rng)));
    let e2 = mc_values(m, &seeds.child("lhs2"), |rng| f.value(sample_levy(pair2, 1.0, rng)));
    let (m1, s1) = mean_stderr(&e1);
    let (m2, s2) = mean_stderr(&e2);
    let mut rhs = 0.0;
    let mut rhs_var = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let t = i as f64 / (t_nodes - 1) as f64;
        let mix = mixture(pair1, pair2, t)?;
        let vals = mc_values(m, &seeds.child("rhs").child_index(i as u64), |rng| {
            let x = sample_levy(&mix, 1.0, rng);
            generator_fast(pair2, f, x) - generator_fast(pair1, f, x)
        });
        let (mean, se) = mean_stderr(&vals);
        rhs += w * mean;
        rhs_var += w * w * se * se;
    }
    Ok(ResidualReport::new((m2 - m1, s1.hypot(s2)), (rhs, rhs_var.sqrt()), 0.0))
}

/// `|Λ₂ - Λ₁|` on the merged atom sets; atoms at equal positions cancel.
fn abs_difference(j1: &[(f64, f64)], j2: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, f64)> = j2
        .iter()
        .copied()
        .chain(j1.iter().map(|&(y, w)| (y, -w)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (y, w) in all {
        match out.last_mut() {
            Some(last) if last.0 == y => last.1 += w,
            _ => out.push((y, w)),
        }
    }
    out.into_iter()
        .map(|(y, w)| (y, w.abs()))
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarSeminorm {
    /// `sum_{k <= k_max} |a*_{2k}(2) - a*_{2k}(1)|`.
    pub truncated: f64,
    /// Bound on the remaining terms.
    pub tail: f64,
}

impl StarSeminorm {
    pub fn total(&self) -> f64 {
        self.truncated + self.tail
    }
}

/// `sum_k |a*_{2k}(2) - a*_{2k}(1)|`, truncated at `k_max` plus a rigorous
/// tail `∫ even_tail(y, 2 k_max) |Λ₂ - Λ₁|(dy)`.
pub fn star_seminorm_bound(pair1: &LevyPair, pair2: &LevyPair, k_max: usize) -> Result<StarSeminorm> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let a1 = a_star_all(pair1, k_max)?;
    let a2 = a_star_all(pair2, k_max)?;
    let truncated = a1.iter().zip(&a2).map(|(x, y)| (x - y).abs()).sum();
    Ok(StarSeminorm {
        truncated,
        tail: star_tail(pair1, pair2, k_max)?,
    })
}

fn star_tail(pair1: &LevyPair, pair2: &LevyPair, k_max: usize) -> Result<f64> {
    let g = |y: f64| even_tail(y, 2 * k_max);
    let main = integrate_atoms(&abs_difference(&pair1.jumps, &pair2.jumps), &g);
    if pair1.check_jumps.is_some() || pair2.check_jumps.is_some() {
        let c1 = pair1.check_jumps.as_deref().unwrap_or(&pair1.jumps);
        let c2 = pair2.check_jumps.as_deref().unwrap_or(&pair2.jumps);
        let check = integrate_atoms(&abs_difference(c1, c2), &g);
        let tol = QUAD_TOLERANCE * (1.0 + main.abs());
        if (main - check).abs() > tol {
            return Err(Error::QuadratureFailure {
                estimate: (main - check).abs(),
                tolerance: tol,
            });
        }
    }
    Ok(main)
}

/// Dense VB model whose couplings are compound Poisson with rate `alpha/N`
/// and `N(0, beta^2/(2 alpha))` jumps, so its second moment matches SK(β).
pub fn connectivity_vb_model(alpha: f64, beta: f64, n: usize) -> Result<ModelSpec> {
    ModelConfig::Dense {
        law: CouplingLaw::compound_poisson(
            alpha / n as f64,
            CouplingLaw::gaussian(0.0, beta * beta / (2.0 * alpha)),
        ),
        n,
        h: 0.0,
    }
    .build()
}

/// Lévy pairs `(SK, VB)` of the infinite-connectivity comparison.
pub fn connectivity_pairs(alpha: f64, beta: f64) -> Result<(LevyPair, LevyPair)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid("alpha and beta must be positive"));
    }
    let sk_pair = LevyPair::gaussian(beta * beta / 2.0)?;
    let vb_pair = LevyPair::half_gaussian(beta / alpha.sqrt(), alpha)?;
    Ok((sk_pair, vb_pair))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityRow {
    pub alpha: f64,
    pub gap: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl ConnectivityRow {
    pub fn passes(&self) -> bool {
        self.gap <= self.bound + 3.0 * self.stderr
    }
}

/// MC gap between the VB and SK quenched pressures at each `alpha`, next to
/// the uniform-in-N bound from the Lévy pairs.
pub fn connectivity_sweep(
    beta: f64,
    alphas: &[f64],
    n: usize,
    m: usize,
    k_max: usize,
    seeds: &SeedPlan,
) -> Result<Vec<ConnectivityRow>> {
    let sk_model = sk(beta, n, 0.0);
    alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let (p1, p2) = connectivity_pairs(alpha, beta)?;
            let bound = star_seminorm_bound(&p1, &p2, k_max)?.total();
            let vb = connectivity_vb_model(alpha, beta, n)?;
            let est = difference_estimate(&vb, &sk_model, Pairing::Independent, m, &seeds.child_index(i as u64))?;
            Ok(ConnectivityRow {
                alpha,
                gap: est.mean.abs(),
                stderr: est.stderr,
                bound,
            })
        })
        .collect()
}

fn levy_sample(pair: &LevyPair, n: usize, h: f64, rng: &mut crate::seeds::Rng) -> DisorderSample {
    let t = 1.0 / n as f64;
    let j = (0..n * n).map(|_| sample_levy(pair, t, rng)).collect();
    DisorderSample::dense(n, h, j)
}

/// Random pressures with i.i.d. couplings `F_{(Λ/N, v/N)}`.
pub fn levy_pressure(pair: &LevyPair, n: usize, h: f64, m: usize, seeds: &SeedPlan) -> Result<PressureEstimate> {
    let values: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|i| random_pressure(&levy_sample(pair, n, h, &mut seeds.rng(i))))
        .collect::<Result<_>>()?;
    Ok(PressureEstimate::from_values(values))
}

/// Largest system size for the overlap-expansion check.
pub const PROP_C_N_MAX: usize = 3;

/// Residual of `p*(2) - p*(1) = Δa*_0 - sum_k Δa*_{2k} ∫₀¹ E_t<R_{2k}^2> dt`,
/// summed for `k = 1..=k_max`.
#[allow(clippy::too_many_arguments)]
pub fn prop_c_residual(
    pair1: &LevyPair,
    pair2: &LevyPair,
    n: usize,
    h: f64,
    k_max: usize,
    t_nodes: usize,
    m: usize,
    seeds: &SeedPlan,
) -> Result<ResidualReport> {
    if n > PROP_C_N_MAX {
        return Err(Error::SizeExceeded { n, limit: PROP_C_N_MAX });
    }
    if n == 0 || k_max < 1 || m < 2 {
        return Err(Error::invalid("need N >= 1, k_max >= 1 and at least two realizations"));
    }
    let weights = check_nodes(t_nodes)?;
    let a1 = a_star_all(pair1, k_max)?;
    let a2 = a_star_all(pair2, k_max)?;
    let delta: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| y - x).collect();
    let p1 = levy_pressure(pair1, n, h, m, &seeds.child("lhs1"))?;
    let p2 = levy_pressure(pair2, n, h, m, &seeds.child("lhs2"))?;
    let ns: Vec<usize> = (1..=k_max).map(|k| 2 * k).collect();
    let mut rhs = delta[0];
    let mut rhs_var = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let t = i as f64 / (t_nodes - 1) as f64;
        let mix = mixture(pair1, pair2, t)?;
        let plan = seeds.child("rhs").child_index(i as u64);
        let vals: Vec<f64> = (0..m as u64)
            .into_par_iter()
            .map(|r| {
                let sample = levy_sample(&mix, n, h, &mut plan.rng(r));
                let moments = overlap_square_moments(&sample, &ns)?;
                Ok(moments.iter().zip(&delta[1..]).map(|(r2, d)| d * r2).sum())
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_stderr(&vals);
        rhs -= w * mean;
        rhs_var += w * w * se * se;
    }
    Ok(ResidualReport::new(
        (p2.mean - p1.mean, p1.stderr.hypot(p2.stderr)),
        (rhs, rhs_var.sqrt()),
        star_tail(pair1, pair2, k_max)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::a_coefficient;
    use crate::quadrature::QuadConfig;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> crate::seeds::Rng {
        SeedPlan::new(seed).rng(0)
    }

    #[test]
    fn psi_examples() {
        assert_abs_diff_eq!(psi(&LevyPair::gaussian(1.0).unwrap(), 2.0).unwrap(), 2.0);
        let p = LevyPair::atom(std::f64::consts::PI, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(psi(&p, 1.0).unwrap(), 2.0, epsilon = 1e-15);
        let hg = LevyPair::half_gaussian(0.8, 2.0).unwrap();
        for pair in [&p, &hg] {
            assert_eq!(psi(pair, 0.0).unwrap(), 0.0);
            for k in [0.3, 1.0, 2.5] {
                let a = psi(pair, k).unwrap();
                assert!(a >= 0.0);
                assert_abs_diff_eq!(a, psi(pair, -k).unwrap(), epsilon = 1e-15);
            }
        }
        // Λ*_beta has Ψ(k) = weight (1 - exp(-k^2 beta^2 / 4)).
        let k: f64 = 1.3;
        assert_abs_diff_eq!(psi(&hg, k).unwrap(), 2.0 * (1.0 - (-k * k * 0.64 / 4.0).exp()), epsilon = 1e-12);
    }

    #[test]
    fn a_star_examples() {
        let beta: f64 = 0.9;
        let g = LevyPair::gaussian(beta * beta).unwrap();
        assert_abs_diff_eq!(a_star(&g, 0).unwrap(), beta * beta / 2.0);
        assert_abs_diff_eq!(a_star(&g, 2).unwrap(), beta * beta / 2.0);
        assert_eq!(a_star(&g, 4).unwrap(), 0.0);
        assert!(matches!(a_star(&g, 3), Err(Error::InvalidParameter(_))));
        let (y, w, v) = (1.2, 0.7, 0.3);
        let p = LevyPair::atom(y, w, v).unwrap();
        assert_abs_diff_eq!(a_star(&p, 0).unwrap(), v / 2.0 + w * ln_cosh(y), epsilon = 1e-15);
        assert_abs_diff_eq!(a_star(&p, 6).unwrap(), w * y.tanh().powi(6) / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn a_star_of_half_gaussian_matches_coupling_law() {
        let quad = QuadConfig::default();
        let (alpha, beta, n) = (1.5, 1.0, 4usize);
        let rate = alpha / n as f64;
        let pair = LevyPair::half_gaussian(beta, rate).unwrap();
        let jump = CouplingLaw::gaussian(0.0, beta * beta / 2.0);
        assert_abs_diff_eq!(
            a_star(&pair, 0).unwrap(),
            rate * a_coefficient(&jump, 0, &quad).unwrap(),
            epsilon = 1e-8
        );
        for k in 2..=20 {
            let lhs = a_star(&pair, 2 * k).unwrap();
            let rhs = rate * a_coefficient(&jump, 2 * k, &quad).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
        }
    }

    #[test]
    fn vb_entry_law_matches_levy_construction() {
        let quad = QuadConfig::default();
        let (alpha, beta, n) = (2.0, 1.0, 5usize);
        let model = crate::models::vb_poissonized(alpha, beta, n, 0.0, crate::models::JumpVariance::HalfBetaSquared);
        let law = model.dense_law().unwrap().clone();
        let levy_law = LevyPair::half_gaussian(beta, 1.0)
            .unwrap()
            .scaled(alpha / n as f64)
            .unwrap()
            .coupling_law()
            .unwrap();
        for k in 1..=20 {
            let a = a_coefficient(&law, 2 * k, &quad).unwrap();
            let b = a_coefficient(&levy_law, 2 * k, &quad).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn discretization_is_exact_on_low_moments() {
        let p = LevyPair::half_gaussian(1.3, 0.4).unwrap();
        let e = p.discretization_error().unwrap();
        assert!(e.mass < 1e-12 && e.second_moment < 1e-12, "{e:?}");
        assert!(p.jumps().len() <= MAX_DENSITY_NODES);
        assert!(LevyPair::new(0.0, vec![], Some(DensitySpec {
            name: "half_gaussian".into(),
            beta: 1.0,
            nodes: 513,
            weight: 1.0,
        }))
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"v":0.5,"atoms":[[1.0,2.0]],"density":{"name":"half_gaussian","beta":1.0,"nodes":32}}"#;
        let p: LevyPair = serde_json::from_str(text).unwrap();
        assert_eq!(p.jumps().len(), 33);
        let back: LevyPair = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
        assert!(serde_json::from_str::<LevyPair>(r#"{"v":-1}"#).is_err());
        assert!(serde_json::from_str::<LevyPair>(r#"{"v":1,"atoms":[[0.0,1.0]]}"#).is_err());
    }

    #[test]
    fn scaling_and_sums() {
        let p = LevyPair::atom(1.0, 2.0, 0.5).unwrap();
        let q = p.scaled(0.25).unwrap();
        assert_abs_diff_eq!(psi(&q, 0.7).unwrap(), 0.25 * psi(&p, 0.7).unwrap(), epsilon = 1e-15);
        let hg = LevyPair::half_gaussian(0.5, 1.0).unwrap();
        let s = p.plus(&hg);
        assert_abs_diff_eq!(
            psi(&s, 1.1).unwrap(),
            psi(&p, 1.1).unwrap() + psi(&hg, 1.1).unwrap(),
            epsilon = 1e-14
        );
        let twice = hg.plus(&hg);
        assert_abs_diff_eq!(a_star(&twice, 0).unwrap(), 2.0 * a_star(&hg, 0).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn sample_at_zero_time_is_zero() {
        let p = LevyPair::atom(1.0, 3.0, 2.0).unwrap();
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_levy(&p, 0.0, &mut r), 0.0);
        }
    }

    /// Empirical characteristic function with its standard error.
    fn empirical_cf(xs: &[f64], k: f64) -> (f64, f64) {
        let c: Vec<f64> = xs.iter().map(|x| (k * x).cos()).collect();
        mean_stderr(&c)
    }

    #[test]
    fn single_atom_characteristic_function() {
        let (lambda, t) = (1.7, 0.6);
        let p = LevyPair::atom(1.0, lambda, 0.0).unwrap();
        let xs = mc_values(1_000_000, &SeedPlan::new(7), |r| sample_levy(&p, t, r));
        for k in [0.5, 1.0, 2.0, 3.0] {
            let (cf, se) = empirical_cf(&xs, k);
            let exact = (-t * lambda * (1.0 - f64::cos(k))).exp();
            assert!((cf - exact).abs() < 4.0 * se, "k={k}: {cf} vs {exact} (se {se})");
        }
    }

    #[test]
    fn pure_gaussian_sampling() {
        let p = LevyPair::gaussian(2.0).unwrap();
        let xs = mc_values(200_000, &SeedPlan::new(8), |r| sample_levy(&p, 0.5, r));
        let (mean, var) = mean_and_variance(&xs);
        assert!(mean.abs() < 4.0 * (1.0 / 200_000f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn convolution_additivity() {
        let p1 = LevyPair::atom(0.8, 1.2, 0.3).unwrap();
        let p2 = LevyPair::half_gaussian(1.1, 0.9).unwrap();
        let sum = p1.plus(&p2);
        let m = 1_000_000;
        let a = mc_values(m, &SeedPlan::new(9).child("a"), |r| sample_levy(&p1, 1.0, r) + sample_levy(&p2, 1.0, r));
        let b = mc_values(m, &SeedPlan::new(9).child("b"), |r| sample_levy(&sum, 1.0, r));
        for k in [0.3, 0.7, 1.0, 1.8, 3.0] {
            let (ca, sa) = empirical_cf(&a, k);
            let (cb, sb) = empirical_cf(&b, k);
            assert!((ca - cb).abs() < 4.0 * sa.hypot(sb), "k={k}");
            assert!((cb - (-psi(&sum, k).unwrap()).exp()).abs() < 4.0 * sb, "k={k}");
        }
    }

    #[test]
    fn first_moment_bound() {
        for pair in [
            LevyPair::atom(1.5, 2.0, 0.5).unwrap(),
            LevyPair::half_gaussian(2.0, 3.0).unwrap(),
        ] {
            let xs = mc_values(200_000, &SeedPlan::new(10), |r| sample_levy(&pair, 1.0, r).abs());
            let (mean, se) = mean_stderr(&xs);
            let bound = (1.0 + a_star(&pair, 0).unwrap()) * std::f64::consts::E;
            assert!(mean <= bound + 3.0 * se);
        }
    }

    #[test]
    fn generator_examples() {
        let c = FnTest(|_x: f64| 3.0);
        let p = LevyPair::atom(1.0, 2.0, 0.7).unwrap();
        assert_abs_diff_eq!(generator_apply(&p, &c, 0.4).unwrap(), 0.0, epsilon = 1e-9);
        let v = 1.3;
        let g = LevyPair::gaussian(v).unwrap();
        for x in [-2.0, 0.0, 0.5, 3.0] {
            assert_abs_diff_eq!(
                generator_apply(&g, &LnCosh, x).unwrap(),
                v / (2.0 * f64::cosh(x).powi(2)),
                epsilon = 1e-15
            );
            let (y, w) = (0.9, 1.7);
            let a = LevyPair::atom(y, w, 0.0).unwrap();
            let closed = 0.5 * w * (1.0 + y.sinh().powi(2) / x.cosh().powi(2)).ln();
            assert_abs_diff_eq!(generator_apply(&a, &LnCosh, x).unwrap(), closed, epsilon = 1e-14);
            let fd = FnTest(ln_cosh);
            assert_abs_diff_eq!(
                generator_apply(&a, &fd, x).unwrap(),
                closed,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                generator_apply(&g, &fd, x).unwrap(),
                v / (2.0 * f64::cosh(x).powi(2)),
                epsilon = 1e-5
            );
        }
    }

    #[test]
    fn generator_of_ln_cosh_is_below_a0() {
        let pairs = [
            LevyPair::atom(2.0, 1.5, 0.4).unwrap(),
            LevyPair::half_gaussian(1.0, 2.0).unwrap().plus(&LevyPair::gaussian(0.5).unwrap()),
        ];
        for p in &pairs {
            let a0 = a_star(p, 0).unwrap();
            for i in -40..=40 {
                let x = i as f64 * 0.25;
                assert!(generator_apply(p, &LnCosh, x).unwrap() <= a0 + 1e-14);
            }
        }
    }

    #[test]
    fn identity_check_trivial_cases() {
        let p = LevyPair::atom(1.0, 1.0, 0.5).unwrap();
        let r = interpolation_identity_check(&p, &p, &LnCosh, 5, 2000, &SeedPlan::new(11)).unwrap();
        assert_eq!(r.rhs, 0.0);
        let lin = Linear { slope: 2.0, intercept: 1.0 };
        let q = LevyPair::gaussian(1.0).unwrap();
        let r = interpolation_identity_check(&q, &p, &lin, 5, 20_000, &SeedPlan::new(11)).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.passes(3.0), "{r:?}");
        assert!(interpolation_identity_check(&q, &p, &lin, 4, 100, &SeedPlan::new(11)).is_err());
    }

    #[test]
    fn star_seminorm_examples() {
        let p = LevyPair::half_gaussian(1.0, 2.0).unwrap();
        let s = star_seminorm_bound(&p, &p, 20).unwrap();
        assert_eq!(s.total(), 0.0);
        let a = LevyPair::atom(1.3, 0.6, 0.2).unwrap();
        let b = LevyPair::atom(1.3, 0.6, 0.9).unwrap();
        let s = star_seminorm_bound(&a, &b, 10).unwrap();
        assert_abs_diff_eq!(s.total(), 0.7, epsilon = 1e-15);
        assert_eq!(s.tail, 0.0);
    }

    #[test]
    fn star_tail_dominates_true_remainder() {
        let p1 = LevyPair::atom(2.0, 1.0, 0.0).unwrap();
        let p2 = LevyPair::half_gaussian(1.5, 1.0).unwrap();
        let k_max = 5;
        let s = star_seminorm_bound(&p1, &p2, k_max).unwrap();
        let far = star_seminorm_bound(&p1, &p2, 200).unwrap();
        let remainder = far.truncated - s.truncated;
        assert!(s.tail >= remainder - 1e-12 && far.tail < 1e-3, "{s:?} {far:?}");
    }

    #[test]
    fn connectivity_bound_decreases() {
        let beta = 1.0;
        let bounds: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0, 1000.0]
            .iter()
            .map(|&alpha| {
                let (a, b) = connectivity_pairs(alpha, beta).unwrap();
                star_seminorm_bound(&a, &b, 60).unwrap().total()
            })
            .collect();
        for w in bounds.windows(2) {
            assert!(w[1] < w[0], "{bounds:?}");
        }
        assert!(bounds[5] <= 1e-2 * bounds[0], "{bounds:?}");
    }

    #[test]
    fn prop_c_equal_pairs_and_limits() {
        let p = LevyPair::atom(1.0, 0.25, 0.0).unwrap();
        let r = prop_c_residual(&p, &p, 2, 0.0, 4, 3, 200, &SeedPlan::new(12)).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.truncation_bound, 0.0);
        assert!(matches!(
            prop_c_residual(&p, &p, 4, 0.0, 4, 3, 200, &SeedPlan::new(12)),
            Err(Error::SizeExceeded { n: 4, limit: 3 })
        ));
    }
}
