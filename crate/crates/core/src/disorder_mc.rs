//! Quenched pressures as Monte Carlo averages over disorder realizations.
//!
//! Realizations run in parallel on the current rayon pool. Each one draws
//! from its own counter-addressed stream and the results are reduced in
//! index order, so the output does not depend on the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::numeric::mean_and_variance;
use crate::pressure::random_pressure;
use crate::seeds::SeedPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub realizations: usize,
    pub sample_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl PressureEstimate {
    pub fn from_values(values: Vec<f64>) -> PressureEstimate {
        let m = values.len();
        let (mean, sample_variance) = mean_and_variance(&values);
        PressureEstimate {
            mean,
            stderr: (sample_variance / m as f64).sqrt(),
            realizations: m,
            sample_variance,
            values: Some(values),
        }
    }

    pub fn without_values(mut self) -> PressureEstimate {
        self.values = None;
        self
    }

    /// One JSON object per realization: `{"index": i, "value": v}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Some(values) = &self.values {
            for (index, value) in values.iter().enumerate() {
                let line = serde_json::json!({ "index": index, "value": value });
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid("need at least two realizations"));
    }
    Ok(())
}

/// Random pressures of realizations `0..m` of `model`, in index order.
pub fn pressure_values(model: &ModelSpec, m: usize, seeds: &SeedPlan) -> Result<Vec<f64>> {
    model.validate()?;
    (0..m as u64)
        .into_par_iter()
        .map(|i| random_pressure(&model.draw(seeds, i)?))
        .collect()
}

/// Mean of `m` independent random pressures.
pub fn quenched_pressure(model: &ModelSpec, m: usize, seeds: &SeedPlan) -> Result<PressureEstimate> {
    check_m(m)?;
    Ok(PressureEstimate::from_values(pressure_values(model, m, seeds)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceCheck {
    pub sample_variance: f64,
    /// Variance of a single coupling, which bounds the variance of the
    /// random pressure for dense i.i.d. models.
    pub bound: f64,
    pub estimate: PressureEstimate,
}

/// Sample variance of the random pressure next to the single-coupling
/// variance bound.
pub fn variance_check(model: &ModelSpec, m: usize, seeds: &SeedPlan) -> Result<VarianceCheck> {
    let law = model.dense_law().ok_or_else(|| {
        Error::UnsupportedModel(format!(
            "variance bound applies to dense i.i.d. models, not {}",
            model.name
        ))
    })?;
    let bound = law.moments()?.sigma2;
    let estimate = quenched_pressure(model, m, seeds)?;
    Ok(VarianceCheck {
        sample_variance: estimate.sample_variance,
        bound,
        estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    Independent,
    /// Common random numbers: both models read the same streams.
    Crn,
}

/// Estimate of `p(a) - p(b)` from per-realization differences.
pub fn difference_estimate(
    a: &ModelSpec,
    b: &ModelSpec,
    pairing: Pairing,
    m: usize,
    seeds: &SeedPlan,
) -> Result<PressureEstimate> {
    check_m(m)?;
    let (plan_a, plan_b) = match pairing {
        Pairing::Independent => (seeds.child("a"), seeds.child("b")),
        Pairing::Crn => {
            a.check_common_randomness(b)?;
            (*seeds, *seeds)
        }
    };
    if a == b && pairing == Pairing::Crn {
        return Ok(PressureEstimate::from_values(vec![0.0; m]));
    }
    let va = pressure_values(a, m, &plan_a)?;
    let vb = pressure_values(b, m, &plan_b)?;
    Ok(PressureEstimate::from_values(
        va.iter().zip(&vb).map(|(x, y)| x - y).collect(),
    ))
}
