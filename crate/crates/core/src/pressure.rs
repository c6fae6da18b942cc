//! Exact random pressure `(1/N) ln Z` of one disorder realization.
//!
//! The score of a configuration is
//! `-H(sigma) = sum_{i,j} J(i,j) sigma_i sigma_j + h sum_i sigma_i`,
//! with the diagonal included and `(i,j)`, `(j,i)` treated as separate
//! couplings. Configurations are encoded as bit masks: bit `i` set means
//! `sigma_i = -1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default size limit for [`random_pressure`].
pub const DEFAULT_N_MAX: usize = 24;
/// Size limit for Gibbs averages, which store all `2^N` weights.
pub const GIBBS_N_MAX: usize = 20;

const RESYNC_INTERVAL: u64 = 4096;

/// Coupling constants of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Couplings {
    /// Row-major `N x N` matrix.
    Dense { j: Vec<f64> },
    /// Edge list `(i, j, J)`; repeated pairs add up.
    Edges { edges: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSample {
    pub n: usize,
    pub h: f64,
    #[serde(flatten)]
    pub couplings: Couplings,
}

impl DisorderSample {
    pub fn dense(n: usize, h: f64, j: Vec<f64>) -> DisorderSample {
        DisorderSample {
            n,
            h,
            couplings: Couplings::Dense { j },
        }
    }

    pub fn edges(n: usize, h: f64, edges: Vec<(usize, usize, f64)>) -> DisorderSample {
        DisorderSample {
            n,
            h,
            couplings: Couplings::Edges { edges },
        }
    }

    /// All couplings zero.
    pub fn free(n: usize, h: f64) -> DisorderSample {
        DisorderSample::dense(n, h, vec![0.0; n * n])
    }

    /// `-H(sigma)` evaluated directly from the definition.
    pub fn score(&self, sigma: &[f64]) -> f64 {
        let mut s = self.h * sigma.iter().sum::<f64>();
        match &self.couplings {
            Couplings::Dense { j } => {
                for a in 0..self.n {
                    for b in 0..self.n {
                        s += j[a * self.n + b] * sigma[a] * sigma[b];
                    }
                }
            }
            Couplings::Edges { edges } => {
                for &(a, b, w) in edges {
                    s += w * sigma[a] * sigma[b];
                }
            }
        }
        s
    }

    /// The coupling values in storage order.
    pub fn coupling_values(&self) -> Vec<f64> {
        match &self.couplings {
            Couplings::Dense { j } => j.clone(),
            Couplings::Edges { edges } => edges.iter().map(|e| e.2).collect(),
        }
    }

    fn validate(&self, n_max: usize) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("system size must be at least 1"));
        }
        if self.n > n_max {
            return Err(Error::SizeExceeded {
                n: self.n,
                limit: n_max,
            });
        }
        if !self.h.is_finite() {
            return Err(Error::invalid(format!("external field {} is not finite", self.h)));
        }
        match &self.couplings {
            Couplings::Dense { j } => {
                if j.len() != self.n * self.n {
                    return Err(Error::invalid(format!(
                        "dense coupling matrix has {} entries, expected {}",
                        j.len(),
                        self.n * self.n
                    )));
                }
                if let Some((position, &value)) = j.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::NonFiniteCoupling { position, value });
                }
            }
            Couplings::Edges { edges } => {
                for (position, &(a, b, value)) in edges.iter().enumerate() {
                    if a >= self.n || b >= self.n {
                        return Err(Error::invalid(format!(
                            "edge {position} has site outside 0..{}",
                            self.n
                        )));
                    }
                    if !value.is_finite() {
                        return Err(Error::NonFiniteCoupling { position, value });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symmetrized form: a constant from the diagonal plus `K(i,j)` for `i != j`,
/// stored as adjacency lists with both directions present.
struct Compiled {
    n: usize,
    h: f64,
    constant: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Compiled {
    fn new(sample: &DisorderSample) -> Compiled {
        let n = sample.n;
        let mut constant = 0.0;
        let mut neighbors = vec![Vec::new(); n];
        match &sample.couplings {
            Couplings::Dense { j } => {
                for a in 0..n {
                    constant += j[a * n + a];
                    for b in 0..n {
                        if a != b {
                            let k = j[a * n + b] + j[b * n + a];
                            if k != 0.0 {
                                neighbors[a].push((b, k));
                            }
                        }
                    }
                }
            }
            Couplings::Edges { edges } => {
                let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
                for &(a, b, w) in edges {
                    if a == b {
                        constant += w;
                    } else {
                        pairs.push((a.min(b), a.max(b), w));
                    }
                }
                pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
                let mut merged: Vec<(usize, usize, f64)> = Vec::new();
                for (a, b, w) in pairs {
                    match merged.last_mut() {
                        Some(last) if last.0 == a && last.1 == b => last.2 += w,
                        _ => merged.push((a, b, w)),
                    }
                }
                for (a, b, w) in merged {
                    neighbors[a].push((b, w));
                    neighbors[b].push((a, w));
                }
            }
        }
        Compiled {
            n,
            h: sample.h,
            constant,
            neighbors,
        }
    }

    fn resync(&self, sigma: &[f64], fields: &mut [f64]) -> f64 {
        let mut score = self.constant;
        for (a, nb) in self.neighbors.iter().enumerate() {
            let mut f = 0.0;
            for &(b, k) in nb {
                f += k * sigma[b];
            }
            fields[a] = f;
            score += self.h * sigma[a] + 0.5 * f * sigma[a];
        }
        score
    }

    /// Calls `visit(mask, score)` for all `2^N` configurations in Gray-code
    /// order, updating the score from local fields at each flip.
    fn for_each<F: FnMut(u32, f64)>(&self, mut visit: F) {
        let n = self.n;
        let mut sigma = vec![1.0; n];
        let mut fields = vec![0.0; n];
        let mut score = self.resync(&sigma, &mut fields);
        let mut mask = 0u32;
        visit(mask, score);
        for step in 1..(1u64 << n) {
            let k = step.trailing_zeros() as usize;
            let new = -sigma[k];
            score += 2.0 * new * (fields[k] + self.h);
            sigma[k] = new;
            for &(b, w) in &self.neighbors[k] {
                fields[b] += 2.0 * new * w;
            }
            mask ^= 1 << k;
            if step % RESYNC_INTERVAL == 0 {
                score = self.resync(&sigma, &mut fields);
            }
            visit(mask, score);
        }
    }
}

/// Streaming `ln sum exp(x)` with a running maximum and Kahan-compensated
/// accumulation in the shifted domain.
#[derive(Debug, Clone)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
    comp: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> LogSumExp {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }

    pub(crate) fn add(&mut self, x: f64) {
        if x > self.max {
            let scale = (self.max - x).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = x;
            self.kahan(1.0);
        } else {
            self.kahan((x - self.max).exp());
        }
    }

    fn kahan(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// `(1/N) ln Z` by Gray-code enumeration, with `N <= 24`.
pub fn random_pressure(sample: &DisorderSample) -> Result<f64> {
    random_pressure_with_limit(sample, DEFAULT_N_MAX)
}

pub fn random_pressure_with_limit(sample: &DisorderSample, n_max: usize) -> Result<f64> {
    sample.validate(n_max)?;
    let compiled = Compiled::new(sample);
    let mut acc = LogSumExp::new();
    compiled.for_each(|_, score| acc.add(score));
    Ok(acc.value() / sample.n as f64)
}

/// Reference implementation: every configuration scored from scratch.
pub fn naive_random_pressure(sample: &DisorderSample) -> Result<f64> {
    sample.validate(DEFAULT_N_MAX)?;
    let n = sample.n;
    let scores: Vec<f64> = (0..1u32 << n)
        .map(|mask| {
            let sigma: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            sample.score(&sigma)
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    Ok((max + sum.ln()) / n as f64)
}

/// Normalized Gibbs weights indexed by configuration mask, and `ln Z`.
pub fn gibbs_weights(sample: &DisorderSample) -> Result<(Vec<f64>, f64)> {
    sample.validate(GIBBS_N_MAX)?;
    let compiled = Compiled::new(sample);
    let mut scores = vec![0.0; 1 << sample.n];
    let mut acc = LogSumExp::new();
    compiled.for_each(|mask, score| {
        scores[mask as usize] = score;
        acc.add(score);
    });
    let ln_z = acc.value();
    for s in scores.iter_mut() {
        *s = (*s - ln_z).exp();
    }
    Ok((scores, ln_z))
}

/// `<sigma_S>` for every subset `S` (indexed by mask), through a
/// Walsh–Hadamard transform of the Gibbs weights.
pub fn subset_correlations(sample: &DisorderSample) -> Result<Vec<f64>> {
    let (mut w, _) = gibbs_weights(sample)?;
    walsh_hadamard(&mut w);
    Ok(w)
}

fn walsh_hadamard(v: &mut [f64]) {
    let mut len = 1;
    while len < v.len() {
        for block in v.chunks_mut(2 * len) {
            let (lo, hi) = block.split_at_mut(len);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        len *= 2;
    }
}

/// Product of spins across independent replicas sharing one disorder
/// realization: replica `a` contributes `prod_{i in replicas[a]} sigma_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinProduct {
    pub replicas: Vec<Vec<usize>>,
}

impl SpinProduct {
    pub fn single(sites: Vec<usize>) -> SpinProduct {
        SpinProduct {
            replicas: vec![sites],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsExpectation {
    pub value: f64,
    /// Logarithm of the replicated partition function, `n ln Z`.
    pub normalizer: f64,
}

/// Exact Gibbs average of a spin product over `n` replicas.
///
/// Replicas are independent under the product Gibbs measure, so the average
/// factorizes into single-replica averages, each an exact ratio over all
/// `2^N` configurations.
pub fn gibbs_expectation(sample: &DisorderSample, observable: &SpinProduct) -> Result<GibbsExpectation> {
    if observable.replicas.is_empty() {
        return Err(Error::invalid("observable needs at least one replica"));
    }
    let (w, ln_z) = gibbs_weights(sample)?;
    let mut value = 1.0;
    for sites in &observable.replicas {
        let mut mask = 0u32;
        for &i in sites {
            if i >= sample.n {
                return Err(Error::invalid(format!("site {i} outside 0..{}", sample.n)));
            }
            mask ^= 1 << i;
        }
        let mut acc = 0.0;
        for (x, wx) in w.iter().enumerate() {
            if (x as u32 & mask).count_ones() % 2 == 0 {
                acc += wx;
            } else {
                acc -= wx;
            }
        }
        value *= acc;
    }
    Ok(GibbsExpectation {
        value,
        normalizer: observable.replicas.len() as f64 * ln_z,
    })
}

/// `<R_n^power>` for the multi-overlap `R_n = (1/N) sum_i sigma_i^1 ... sigma_i^n`.
///
/// Expanding the power gives `N^-power sum_{i_1..i_p} <sigma_S>^n` where `S`
/// is the set of indices appearing an odd number of times. The distribution
/// of `S` under uniform index tuples is a random walk on the hypercube.
pub fn multi_overlap_moment(sample: &DisorderSample, n: usize, power: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("replica count must be at least 1"));
    }
    if power > 64 {
        return Err(Error::invalid("overlap power above 64 is not supported"));
    }
    let corr = subset_correlations(sample)?;
    if power == 0 {
        return Ok(1.0);
    }
    let size = corr.len();
    let nf = sample.n as f64;
    let mut walk = vec![0.0; size];
    walk[0] = 1.0;
    let mut next = vec![0.0; size];
    for _ in 0..power {
        for (s, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..sample.n {
                acc += walk[s ^ (1 << i)];
            }
            *out = acc / nf;
        }
        std::mem::swap(&mut walk, &mut next);
    }
    Ok(walk
        .iter()
        .zip(&corr)
        .filter(|(p, _)| **p != 0.0)
        .map(|(p, c)| p * c.powi(n as i32))
        .sum())
}

/// `<R_n^2> = N^-2 sum_{i,j} <sigma_i sigma_j>^n` for each `n` in `ns`.
pub fn overlap_square_moments(sample: &DisorderSample, ns: &[usize]) -> Result<Vec<f64>> {
    let corr = subset_correlations(sample)?;
    let n = sample.n;
    let mut out = vec![0.0; ns.len()];
    for a in 0..n {
        for b in 0..n {
            let c = if a == b { 1.0 } else { corr[(1 << a) | (1 << b)] };
            for (o, &k) in out.iter_mut().zip(ns) {
                *o += c.powi(k as i32);
            }
        }
    }
    let norm = (n * n) as f64;
    Ok(out.into_iter().map(|v| v / norm).collect())
}
