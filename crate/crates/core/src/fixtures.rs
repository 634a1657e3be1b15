//! Reproducible synthetic markets for examples and tests.
//!
//! The skewed fixture mimics a hydro-dominated system over one delivery
//! period:
//!
//! * spot prices are the `K` midpoint quantiles of a lognormal law with
//!   median 50 $/MWh and log-volatility 0.6, so the sample is
//!   right-skewed (mean above median);
//! * the generator produces `scale · 100 · h_k` with `h_k ∝ exp(−0.3·z_k)`
//!   normalized to mean one, `z_k` the standard normal quantile behind
//!   `π_k`. Output is low exactly when prices are high;
//! * the load consumes `100 · u_k` MWh with `u_k ∝ exp(0.15·z_k)`, also of
//!   mean one: demand peaks with prices.
//!
//! A generator short of energy in expensive scenarios must buy back at
//! spot, so both sides see contract sales as risky for the seller and
//! valuable for the buyer.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::agents::AgentSpec;
use crate::equilibrium::MarketConfig;
use crate::error::Result;
use crate::risk::RiskParams;
use crate::scenario::{ContractSpec, ProfileSet, ScenarioSet};

pub const LOAD_MWH: f64 = 100.0;
const MEDIAN: f64 = 50.0;
const LOG_VOL: f64 = 0.6;
const HYDRO_VOL: f64 = 0.3;
const LOAD_VOL: f64 = 0.15;
const NOISE_VOL: f64 = 0.2;

fn normal_quantiles(k: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (0..k)
        .map(|j| n.inverse_cdf((j as f64 + 0.5) / k as f64))
        .collect()
}

/// The same quantiles visited in a fixed pseudo-random order, used as
/// noise independent of the price ranking.
fn scrambled(z: &[f64], stride: usize) -> Vec<f64> {
    let k = z.len();
    let stride = (stride..).find(|s| gcd(*s, k) == 1).unwrap_or(1);
    (0..k).map(|j| z[(j * stride + k / 3) % k]).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn unit_mean(raw: impl Iterator<Item = f64>, level: f64) -> Vec<f64> {
    let raw: Vec<f64> = raw.collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|v| level * v / mean).collect()
}

/// Lognormal-quantile spot sample, one period, `k` scenarios.
pub fn skewed_spot(k: usize) -> Result<ScenarioSet> {
    let spots = normal_quantiles(k)
        .into_iter()
        .map(|z| MEDIAN * (LOG_VOL * z).exp())
        .collect();
    ScenarioSet::from_periods(vec!["1".into()], vec![spots], false)
}

/// Generator and load on the skewed sample; `scale` is generator energy
/// relative to load.
pub fn skewed_market(
    k: usize,
    scale: f64,
    lambda_g: f64,
    lambda_d: f64,
    alpha: f64,
) -> Result<MarketConfig> {
    let s = skewed_spot(k)?;
    let z = normal_quantiles(k);
    let w1 = scrambled(&z, 37);
    let w2 = scrambled(&z, 61);
    let gen = unit_mean(
        z.iter()
            .zip(&w1)
            .map(|(z, w)| (-HYDRO_VOL * z + NOISE_VOL * w).exp()),
        scale * LOAD_MWH,
    );
    let load = unit_mean(
        z.iter()
            .zip(&w2)
            .map(|(z, w)| (LOAD_VOL * z + NOISE_VOL * w).exp()),
        LOAD_MWH,
    );
    let g = AgentSpec::generator(
        "gen",
        RiskParams::new(lambda_g, alpha)?,
        ProfileSet::new("gen", 1, k, gen)?,
    );
    let d = AgentSpec::load(
        "load",
        RiskParams::new(lambda_d, alpha)?,
        ProfileSet::new("load", 1, k, load)?,
    );
    MarketConfig::new(vec![g, d], s, ContractSpec::flat(vec![0])?)
}
