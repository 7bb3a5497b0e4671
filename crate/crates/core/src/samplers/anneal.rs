use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ising::{spins_to_bits, IsingModel};
use crate::textfmt::fmt_g12;

use super::SampleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    pub shots: usize,
    pub sweeps: usize,
    /// Geometric schedule endpoints; derived from the model when unset.
    pub beta_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            shots: 1000,
            sweeps: 1000,
            beta_range: None,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Parameter("sweeps must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.beta_range {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Parameter(format!(
                    "beta range must satisfy 0 < beta_min < beta_max, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Hot end accepts the largest single flip half the time; cold end accepts
/// an uphill step of the finest spacing among field and coupling magnitudes
/// with probability 1e-4.
fn default_betas(model: &IsingModel, adj: &[Vec<(usize, f64)>]) -> (f64, f64) {
    let max_delta = adj
        .iter()
        .enumerate()
        .map(|(i, nbrs)| 2.0 * (model.fields[i].abs() + nbrs.iter().map(|(_, j)| j.abs()).sum::<f64>()))
        .fold(0.0f64, f64::max);
    if max_delta == 0.0 {
        return (0.1, 1.0);
    }
    let mut mags: Vec<f64> = model
        .fields
        .iter()
        .chain(model.couplings.values())
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    mags.sort_by(f64::total_cmp);
    let spacing = mags
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-12)
        .chain(mags.first().copied())
        .fold(f64::INFINITY, f64::min);
    let lo = std::f64::consts::LN_2 / max_delta;
    let hi = 1e4f64.ln() / spacing;
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo * 10.0)
    }
}

fn schedule(lo: f64, hi: f64, sweeps: usize) -> Vec<f64> {
    if sweeps == 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).powf(1.0 / (sweeps - 1) as f64);
    (0..sweeps).map(|k| lo * ratio.powi(k as i32)).collect()
}

/// Metropolis annealing from uniformly random spins, one independent
/// ChaCha stream per shot so results do not depend on the thread count.
///
/// Each sweep proposes every single-spin flip, then a joint flip of every
/// antiferromagnetic pair whose spins disagree. The pair move exchanges an
/// active bit between two variables without passing through the penalised
/// intermediate state.
pub fn simulated_anneal(model: &IsingModel, config: &AnnealConfig) -> Result<SampleSet> {
    config.validate()?;
    let adj = model.adjacency();
    let (lo, hi) = config.beta_range.unwrap_or_else(|| default_betas(model, &adj));
    let betas = schedule(lo, hi, config.sweeps);
    let n = model.n;
    let pairs: Vec<(usize, usize, f64)> = model
        .couplings
        .iter()
        .filter(|(_, j)| **j > 0.0)
        .map(|(&(i, k), &j)| (i, k, j))
        .collect();
    let reads: Vec<(Vec<u8>, f64)> = (0..config.shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(shot as u64);
            let mut spins: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let mut field: Vec<f64> = (0..n)
                .map(|i| model.fields[i] + adj[i].iter().map(|&(k, j)| j * spins[k] as f64).sum::<f64>())
                .collect();
            for &beta in &betas {
                for i in 0..n {
                    let delta = -2.0 * spins[i] as f64 * field[i];
                    if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                        flip(i, &mut spins, &mut field, &adj);
                    }
                }
                for &(i, k, j) in &pairs {
                    if spins[i] == spins[k] {
                        continue;
                    }
                    let (si, sk) = (spins[i] as f64, spins[k] as f64);
                    let delta = -2.0 * si * field[i] - 2.0 * sk * field[k] + 4.0 * j * si * sk;
                    if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                        flip(i, &mut spins, &mut field, &adj);
                        flip(k, &mut spins, &mut field, &adj);
                    }
                }
            }
            let energy = model.energy_unchecked(&spins);
            (spins_to_bits(&spins), energy)
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("backend".to_string(), "anneal".to_string());
    meta.insert("seed".to_string(), config.seed.to_string());
    meta.insert("shots".to_string(), config.shots.to_string());
    meta.insert("sweeps".to_string(), config.sweeps.to_string());
    meta.insert("beta_min".to_string(), fmt_g12(lo));
    meta.insert("beta_max".to_string(), fmt_g12(hi));
    Ok(SampleSet::from_reads(n, reads, meta))
}

fn flip(i: usize, spins: &mut [i8], field: &mut [f64], adj: &[Vec<(usize, f64)>]) {
    spins[i] = -spins[i];
    let s = 2.0 * spins[i] as f64;
    for &(k, j) in &adj[i] {
        field[k] += j * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_geometric() {
        let s = schedule(0.1, 10.0, 3);
        assert!((s[1] - 1.0).abs() < 1e-12);
        assert_eq!(schedule(0.1, 10.0, 1), vec![10.0]);
    }

    #[test]
    fn rejects_bad_config() {
        let m = IsingModel::default();
        let cfg = AnnealConfig { sweeps: 0, ..Default::default() };
        assert!(simulated_anneal(&m, &cfg).is_err());
        let cfg = AnnealConfig { beta_range: Some((2.0, 1.0)), ..Default::default() };
        assert!(simulated_anneal(&m, &cfg).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let mut m = IsingModel { n: 4, fields: vec![0.5, -0.5, 0.25, 0.0], ..Default::default() };
        m.couplings.insert((0, 1), 1.0);
        m.couplings.insert((2, 3), -1.0);
        let cfg = AnnealConfig { shots: 64, sweeps: 20, seed: 5, ..Default::default() };
        assert_eq!(simulated_anneal(&m, &cfg).unwrap(), simulated_anneal(&m, &cfg).unwrap());
    }
}
