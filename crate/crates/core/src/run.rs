//! Execution of an [`ExperimentConfig`] into result rows.

use serde_json::json;

use crate::bounds::{canonical_sk_bound, canonical_vb_bound, delta_n, prop_a_bound, prop_b_bound, CrnModelPair};
use crate::config::{BoundCommand, Command, ExperimentConfig, SweepCommand};
use crate::disorder_mc::{difference_estimate, quenched_pressure, variance_check, Pairing};
use crate::error::{Error, Result};
use crate::levy::connectivity_sweep;
use crate::models::{sk_spherical_pair, thinning_equivalence_test, vb_edge_canonical, vb_edge_grand, JumpVariance};
use crate::quadrature::QuadConfig;
use crate::report::{stamp, Row};
use crate::seeds::SeedPlan;

/// Rows of one run plus human-readable progress lines.
pub struct Execution {
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl Execution {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(Row::passed)
    }
}

/// Runs `config` on the current rayon pool. Only configuration problems are
/// returned as errors; failures of individual computations become rows with
/// verdict `error`.
pub fn execute(config: &ExperimentConfig) -> Result<Execution> {
    config.validate()?;
    let seeds = SeedPlan::new(config.master_seed);
    let mut notes = Vec::new();
    let mut rows = match &config.command {
        Command::Pressure { model, m } => {
            let params = json!({"model": model, "m": m});
            let one = || -> Result<Row> {
                let est = quenched_pressure(&model.build()?, *m, &seeds)?;
                Ok(Row::new("pressure", params.clone()).estimate(est.mean, est.stderr))
            };
            vec![one().unwrap_or_else(|e| Row::error("pressure", params.clone(), &e))]
        }
        Command::Bound(b) => vec![bound_row(b, &seeds)],
        Command::Sweep(s) => sweep_rows(s, &seeds),
        Command::Verify { criteria } => {
            let outcomes = crate::verify::run_suite(config.master_seed, criteria);
            notes.extend(outcomes.iter().map(|o| o.summary()));
            outcomes.into_iter().flat_map(|o| o.rows).collect()
        }
        Command::Thinning { alpha, n, samples, significance } => {
            thinning_rows(*alpha, *n, *samples, *significance, &seeds)
        }
    };
    stamp(&mut rows, config.master_seed, &config.config_hash());
    Ok(Execution { rows, notes })
}

fn bound_row(b: &BoundCommand, seeds: &SeedPlan) -> Row {
    let params = serde_json::to_value(b).expect("command serializes");
    let name = match b {
        BoundCommand::PropA { .. } => "bound_prop_a",
        BoundCommand::PropB { .. } => "bound_prop_b",
        BoundCommand::CanonicalVb { .. } => "bound_canonical_vb",
        BoundCommand::CanonicalSk { .. } => "bound_canonical_sk",
        BoundCommand::Variance { .. } => "bound_variance",
    };
    let row = || -> Result<Row> {
        let base = Row::new(name, params.clone());
        Ok(match b {
            BoundCommand::PropA { a, b, m, k_max } => {
                let (a, b) = (a.build()?, b.build()?);
                let (la, lb) = match (a.dense_law(), b.dense_law()) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(Error::UnsupportedModel("prop_a needs two dense i.i.d. models".into())),
                };
                if a.n != b.n {
                    return Err(Error::invalid("prop_a needs models of the same size"));
                }
                let bound = prop_a_bound(la, lb, a.n, *k_max, &QuadConfig::default())?;
                let est = difference_estimate(&a, &b, Pairing::Independent, *m, seeds)?;
                base.estimate(est.mean, est.stderr)
                    .bounded(bound, est.mean.abs() <= bound + 3.0 * est.stderr)
            }
            BoundCommand::PropB { a, b, m } => {
                let pair = CrnModelPair::new(a.build()?, b.build()?)?;
                let bound = prop_b_bound(&pair, *m, seeds)?;
                let est = difference_estimate(&pair.a, &pair.b, Pairing::Crn, *m, seeds)?;
                let se = est.stderr.hypot(bound.stderr);
                base.estimate(est.mean, est.stderr)
                    .bounded(bound.mean, est.mean.abs() <= bound.mean + 3.0 * se)
            }
            BoundCommand::CanonicalVb { alpha, beta, n, m } => {
                let bound = canonical_vb_bound(*alpha, *beta, *n)?;
                let grand = vb_edge_grand(*alpha, *beta, *n, 0.0, JumpVariance::BetaSquared);
                let canonical = vb_edge_canonical(*alpha, *beta, *n, 0.0, JumpVariance::BetaSquared);
                let est = difference_estimate(&grand, &canonical, Pairing::Crn, *m, seeds)?;
                base.estimate(est.mean, est.stderr)
                    .bounded(bound, est.mean.abs() <= bound + 3.0 * est.stderr)
            }
            BoundCommand::CanonicalSk { beta, n, m } => {
                let bound = canonical_sk_bound(*beta, *n)?;
                let (grand, canonical) = sk_spherical_pair(*beta, *n, 0.0);
                let est = difference_estimate(&grand, &canonical, Pairing::Crn, *m, seeds)?;
                base.estimate(est.mean, est.stderr)
                    .bounded(bound, est.mean.abs() <= bound + 3.0 * est.stderr)
            }
            BoundCommand::Variance { model, m } => {
                let v = variance_check(&model.build()?, *m, seeds)?;
                let mut r = base;
                r.mean = Some(v.sample_variance);
                r.bound = Some(v.bound);
                r.slack = Some(v.bound - v.sample_variance);
                r.verdict(v.sample_variance <= v.bound)
            }
        })
    };
    row().unwrap_or_else(|e| Row::error(name, params.clone(), &e))
}

fn sweep_rows(s: &SweepCommand, seeds: &SeedPlan) -> Vec<Row> {
    match s {
        SweepCommand::Delta { law, beta, ns } => {
            let quad = QuadConfig::default();
            let mut prev = f64::INFINITY;
            ns.iter()
                .map(|&n| {
                    let params = json!({"law": law, "beta": beta, "n": n});
                    match delta_n(law, *beta, n, &quad) {
                        Ok(d) => {
                            let mut r = Row::new("sweep_delta", params);
                            r.bound = Some(d);
                            let ok = d.is_finite() && d < prev;
                            prev = d;
                            r.verdict(ok)
                        }
                        Err(e) => Row::error("sweep_delta", params, &e),
                    }
                })
                .collect()
        }
        SweepCommand::Connectivity { beta, alphas, n, m, k_max } => {
            match connectivity_sweep(*beta, alphas, *n, *m, *k_max, seeds) {
                Ok(table) => table
                    .iter()
                    .map(|r| {
                        Row::new("sweep_connectivity", json!({"alpha": r.alpha, "beta": beta, "n": n, "m": m}))
                            .estimate(r.gap, r.stderr)
                            .bounded(r.bound, r.passes())
                    })
                    .collect(),
                Err(e) => vec![Row::error(
                    "sweep_connectivity",
                    json!({"alphas": alphas, "beta": beta, "n": n, "m": m}),
                    &e,
                )],
            }
        }
    }
}

fn thinning_rows(alpha: f64, n: usize, samples: usize, sig: f64, seeds: &SeedPlan) -> Vec<Row> {
    let base = json!({"alpha": alpha, "n": n, "samples": samples});
    let report = match thinning_equivalence_test(alpha, n, samples, seeds) {
        Ok(r) => r,
        Err(e) => return vec![Row::error("thinning", base, &e)],
    };
    let mut rows = Vec::new();
    for (c, p) in report.cell_p_values.iter().enumerate() {
        let mut r = Row::new("thinning_cell", json!({"alpha": alpha, "n": n, "samples": samples, "cell": c}));
        r.mean = Some(*p);
        rows.push(r.verdict(*p > sig));
    }
    let mut r = Row::new("thinning_independence", base);
    r.mean = Some(report.independence_p_value);
    rows.push(r.verdict(report.independence_p_value > sig));
    for (i, mgf) in report.mgf.iter().enumerate() {
        let mut r = Row::new(
            "thinning_mgf",
            json!({"alpha": alpha, "n": n, "samples": samples, "lambda": i, "p_value": mgf.p_value}),
        )
        .estimate(mgf.estimate, mgf.stderr);
        r.bound = Some(mgf.target);
        rows.push(r.verdict(mgf.p_value > sig));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> Execution {
        execute(&ExperimentConfig::from_json(text).unwrap()).unwrap()
    }

    #[test]
    fn point_mass_pressure_row() {
        let e = run(
            r#"{"command": {"name": "pressure", "m": 10, "model": {"name": "dense",
                "params": {"law": {"kind": "point_mass", "params": {"value": 0.0}}, "n": 3, "h": 0.3}}}}"#,
        );
        assert_eq!(e.rows.len(), 1);
        let r = &e.rows[0];
        let expected = std::f64::consts::LN_2 + crate::numeric::ln_cosh(0.3);
        assert!((r.mean.unwrap() - expected).abs() < 1e-14);
        assert_eq!(r.stderr, Some(0.0));
        assert!(e.passed());
    }

    #[test]
    fn canonical_vb_row() {
        let e = run(r#"{"command": {"name": "bound", "kind": "canonical_vb", "alpha": 2, "beta": 1, "n": 8, "m": 10000}}"#);
        let r = &e.rows[0];
        assert_eq!(r.bound, Some(0.625));
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn delta_sweep_decreases() {
        let e = run(
            r#"{"command": {"name": "sweep", "kind": "delta", "beta": 1.0, "ns": [4, 16, 64, 256],
                "law": {"kind": "rademacher", "params": {"b": 0.7071067811865476}}}}"#,
        );
        assert_eq!(e.rows.len(), 4);
        assert!(e.passed());
        let ds: Vec<f64> = e.rows.iter().map(|r| r.bound.unwrap()).collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn computation_errors_become_rows() {
        let e = run(
            r#"{"command": {"name": "sweep", "kind": "delta", "beta": 3.0, "ns": [4],
                "law": {"kind": "rademacher", "params": {"b": 0.5}}}}"#,
        );
        assert_eq!(e.rows[0].verdict, crate::bounds::Verdict::Error);
        assert!(!e.passed());
    }
}
