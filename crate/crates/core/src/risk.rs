//! Discrete-sample CVaR (left tail of revenue) and the blended
//! risk-adjusted value `λ·mean + (1−λ)·CVaR_α`.

use eqforward_lp::{solve, LpProblem, LpStatus};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub lambda: f64,
    pub alpha: f64,
}

impl RiskParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Value(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Value(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(Self { lambda, alpha })
    }

    pub fn risk_neutral() -> Self {
        Self {
            lambda: 1.0,
            alpha: 0.0,
        }
    }

    /// Weight of each tail variable in the Rockafellar form, `1/(K(1−α))`.
    pub(crate) fn tail_weight(&self, k: usize) -> f64 {
        1.0 / (k as f64 * (1.0 - self.alpha))
    }
}

/// Average of the worst `K(1−α)` scenarios, the boundary scenario counted
/// fractionally.
pub fn cvar_sorted(sample: &[f64], alpha: f64) -> Result<f64> {
    check_sample(sample, alpha)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let c = sorted.len() as f64 * (1.0 - alpha);
    let whole = (c.floor() as usize).min(sorted.len());
    let mut acc: f64 = sorted[..whole].iter().sum();
    let frac = c - whole as f64;
    if frac > 0.0 && whole < sorted.len() {
        acc += frac * sorted[whole];
    }
    Ok(acc / c)
}

/// CVaR through its variational form `max_a a + Σ min(R_k − a, 0)/(K(1−α))`,
/// solved as an LP. Returns the value and the smallest maximizing threshold.
pub fn cvar_rockafellar(sample: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_sample(sample, alpha)?;
    let w = 1.0 / (sample.len() as f64 * (1.0 - alpha));
    let mut p = LpProblem::new();
    let a = p.add_var("a", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    for (k, &r) in sample.iter().enumerate() {
        let y = p.add_var(format!("y[{k}]"), f64::NEG_INFINITY, 0.0, w);
        p.add_le(format!("tail[{k}]"), &[(y, 1.0), (a, 1.0)], r);
    }
    let sol = solve(&p)?;
    expect_optimal(sol.status, "CVaR problem")?;
    let value = sol.objective;

    // Second pass: smallest threshold on the optimal face.
    let scale = sample.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut q = p.clone();
    let terms: Vec<_> = (0..q.num_vars())
        .map(|j| (eqforward_lp::VarId(j), q.objective[j]))
        .collect();
    q.add_ge("optimal_face", &terms, value - 1e-12 * scale);
    q.objective = vec![0.0; q.num_vars()];
    q.objective[a.0] = -1.0;
    let face = solve(&q)?;
    expect_optimal(face.status, "CVaR threshold problem")?;
    // The smallest maximizer is a sample point; snap away solver noise.
    let raw = face.x[a.0];
    let a_star = sample
        .iter()
        .copied()
        .min_by(|x, y| (x - raw).abs().total_cmp(&(y - raw).abs()))
        .filter(|s| (s - raw).abs() <= 1e-7 * scale)
        .unwrap_or(raw);
    Ok((value, a_star))
}

fn check_sample(sample: &[f64], alpha: f64) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Value(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if let Some(v) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::Value(format!(
            "sample contains non-finite value {v}"
        )));
    }
    Ok(())
}

fn expect_optimal(status: LpStatus, what: &str) -> Result<()> {
    match status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(Error::Infeasible(what.into())),
        LpStatus::Unbounded => Err(Error::Unbounded(what.into())),
        LpStatus::IterationLimit => Err(Error::IterationLimit(what.into())),
    }
}

pub fn mean(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(sample.iter().sum::<f64>() / sample.len() as f64)
}

pub fn risk_adjusted(sample: &[f64], params: RiskParams) -> Result<f64> {
    let m = mean(sample)?;
    if params.lambda == 1.0 {
        return Ok(m);
    }
    Ok(params.lambda * m + (1.0 - params.lambda) * cvar_sorted(sample, params.alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_scenario_when_tail_is_one() {
        assert_eq!(cvar_sorted(&[40.0, 10.0, 30.0, 20.0], 0.75).unwrap(), 10.0);
        let (v, a) = cvar_rockafellar(&[40.0, 10.0, 30.0, 20.0], 0.75).unwrap();
        assert!((v - 10.0).abs() < 1e-9);
        assert!((10.0..=20.0).contains(&a));
    }

    #[test]
    fn fractional_tail() {
        // c = 4 * 0.375 = 1.5: (10 + 0.5*20) / 1.5
        let v = cvar_sorted(&[10.0, 20.0, 30.0, 40.0], 0.625).unwrap();
        assert!((v - 20.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_samples() {
        assert_eq!(cvar_sorted(&[7.0; 5], 0.9).unwrap(), 7.0);
        assert_eq!(cvar_sorted(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert!((cvar_rockafellar(&[5.0], 0.5).unwrap().0 - 5.0).abs() < 1e-12);
        assert!(matches!(cvar_sorted(&[], 0.5), Err(Error::EmptySample)));
        assert!(matches!(
            cvar_rockafellar(&[], 0.5),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn blended_values() {
        let r = RiskParams::new(0.5, 0.5).unwrap();
        assert_eq!(risk_adjusted(&[0.0, 100.0], r).unwrap(), 25.0);
        let r = RiskParams::new(0.0, 0.75).unwrap();
        assert_eq!(risk_adjusted(&[10.0, 20.0, 30.0, 40.0], r).unwrap(), 10.0);
        assert_eq!(
            risk_adjusted(&[1.0, 5.0], RiskParams::risk_neutral()).unwrap(),
            3.0
        );
    }

    #[test]
    fn params_validated() {
        assert!(RiskParams::new(1.5, 0.5).is_err());
        assert!(RiskParams::new(0.5, 1.0).is_err());
        assert!(RiskParams::new(0.0, 0.0).is_ok());
    }
}
