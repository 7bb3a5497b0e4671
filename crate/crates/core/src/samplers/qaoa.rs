use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ising::IsingModel;
use crate::textfmt::fmt_g12;

use super::{energy_table, mask_to_bits, SampleSet};

pub const STATEVECTOR_CAP: usize = 20;
/// Two-qubit gate error rate used for the global depolarising estimate.
pub const TWO_QUBIT_ERROR: f64 = 0.0425;

#[derive(Debug, Clone, PartialEq)]
pub struct QaoaConfig {
    pub layers: usize,
    pub shots: usize,
    pub max_evaluations: usize,
    pub noise_lambda: f64,
    pub seed: u64,
}

impl Default for QaoaConfig {
    fn default() -> Self {
        QaoaConfig {
            layers: 1,
            shots: 1024,
            max_evaluations: 50,
            noise_lambda: 0.0,
            seed: 0,
        }
    }
}

impl QaoaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Parameter("QAOA needs at least one layer".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_lambda) {
            return Err(Error::Parameter(format!(
                "noise_lambda must lie in [0, 1], got {}",
                self.noise_lambda
            )));
        }
        if self.max_evaluations == 0 {
            return Err(Error::Parameter("max_evaluations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaoaOutcome {
    pub samples: SampleSet,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub expectation: f64,
    /// Expectation at all-zero angles, i.e. the uniform energy mean.
    pub baseline: f64,
    pub evaluations: usize,
    pub warning: bool,
}

pub fn two_qubit_gate_count(model: &IsingModel, layers: usize) -> usize {
    model.coupling_count() * layers
}

/// `1 - (1 - eps)^gates` with the default two-qubit error rate.
pub fn noise_lambda(two_qubit_gates: usize) -> f64 {
    1.0 - (1.0 - TWO_QUBIT_ERROR).powi(two_qubit_gates as i32)
}

fn cost_diagonal(model: &IsingModel) -> Result<Vec<f64>> {
    if model.n > STATEVECTOR_CAP {
        return Err(Error::Capacity(format!(
            "{} qubits exceed the statevector cap of {STATEVECTOR_CAP}",
            model.n
        )));
    }
    energy_table(&model.to_qubo()?, STATEVECTOR_CAP)
}

fn evolve(energies: &[f64], n: usize, betas: &[f64], gammas: &[f64]) -> Vec<Complex64> {
    let dim = energies.len();
    let amp = 1.0 / (dim as f64).sqrt();
    let mut psi = vec![Complex64::new(amp, 0.0); dim];
    for (&beta, &gamma) in betas.iter().zip(gammas) {
        psi.par_iter_mut()
            .zip(energies.par_iter())
            .for_each(|(a, &e)| *a *= Complex64::from_polar(1.0, -gamma * e));
        let (c, s) = (beta.cos(), beta.sin());
        let mis = Complex64::new(0.0, -s);
        for q in 0..n {
            let bit = 1usize << q;
            psi.par_chunks_mut(bit << 1).for_each(|block| {
                let (lo, hi) = block.split_at_mut(bit);
                for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x0, x1) = (*a0, *a1);
                    *a0 = x0 * c + x1 * mis;
                    *a1 = x0 * mis + x1 * c;
                }
            });
        }
    }
    psi
}

fn check_angles(betas: &[f64], gammas: &[f64]) -> Result<()> {
    if betas.len() != gammas.len() || betas.is_empty() {
        return Err(Error::Parameter(format!(
            "need equal, non-zero numbers of betas and gammas, got {} and {}",
            betas.len(),
            gammas.len()
        )));
    }
    Ok(())
}

/// Ansatz statevector indexed by bitmask (bit `i` is qubit `i`).
pub fn qaoa_state(model: &IsingModel, betas: &[f64], gammas: &[f64]) -> Result<Vec<Complex64>> {
    check_angles(betas, gammas)?;
    let energies = cost_diagonal(model)?;
    Ok(evolve(&energies, model.n, betas, gammas))
}

fn expectation_of(energies: &[f64], psi: &[Complex64]) -> f64 {
    psi.par_iter().zip(energies.par_iter()).map(|(a, e)| a.norm_sqr() * e).sum()
}

pub fn qaoa_expectation(model: &IsingModel, betas: &[f64], gammas: &[f64]) -> Result<f64> {
    check_angles(betas, gammas)?;
    let energies = cost_diagonal(model)?;
    Ok(expectation_of(&energies, &evolve(&energies, model.n, betas, gammas)))
}

fn gamma_scale(model: &IsingModel) -> f64 {
    let largest = model
        .fields
        .iter()
        .chain(model.couplings.values())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if largest > 0.0 {
        FRAC_PI_4 / largest
    } else {
        FRAC_PI_4
    }
}

/// Optimises the `2p` angles by pattern search, then samples
/// `(1 - lambda) |psi|^2 + lambda / 2^n`.
pub fn qaoa_optimize_and_sample(model: &IsingModel, config: &QaoaConfig) -> Result<QaoaOutcome> {
    config.validate()?;
    let energies = cost_diagonal(model)?;
    let n = model.n;
    let p = config.layers;
    let g_max = gamma_scale(model);
    let baseline = energies.iter().sum::<f64>() / energies.len() as f64;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(1);
    let mut draw = move || -> Vec<f64> {
        let mut x: Vec<f64> = (0..p).map(|_| init_rng.random_range(0.0..FRAC_PI_4)).collect();
        x.extend((0..p).map(|_| init_rng.random_range(0.0..g_max)));
        x
    };
    let x0 = draw();
    let mut steps = vec![PI / 16.0; p];
    steps.extend(vec![g_max / 4.0; p]);
    let result = super::pattern_search(
        |x| expectation_of(&energies, &evolve(&energies, n, &x[..p], &x[p..])),
        x0,
        &steps,
        1e-3 * g_max.min(PI / 16.0),
        config.max_evaluations,
        draw,
    );
    let (betas, gammas) = (result.x[..p].to_vec(), result.x[p..].to_vec());
    let psi = evolve(&energies, n, &betas, &gammas);

    let lambda = config.noise_lambda;
    let uniform = 1.0 / energies.len() as f64;
    let mut cumulative = Vec::with_capacity(psi.len());
    let mut acc = 0.0;
    for a in &psi {
        acc += (1.0 - lambda) * a.norm_sqr() + lambda * uniform;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let reads = (0..config.shots).map(|_| {
        let u = rng.random::<f64>() * acc;
        let mask = cumulative.partition_point(|&c| c <= u).min(psi.len() - 1);
        (mask_to_bits(mask as u64, n), energies[mask])
    });
    let reads: Vec<_> = reads.collect();

    let mut meta = BTreeMap::new();
    meta.insert("backend".to_string(), "qaoa".to_string());
    meta.insert("seed".to_string(), config.seed.to_string());
    meta.insert("shots".to_string(), config.shots.to_string());
    meta.insert("layers".to_string(), p.to_string());
    meta.insert("noise_lambda".to_string(), fmt_g12(lambda));
    meta.insert("evaluations".to_string(), result.evaluations.to_string());
    meta.insert("expectation".to_string(), fmt_g12(result.value));
    meta.insert("baseline_expectation".to_string(), fmt_g12(baseline));
    meta.insert("optimizer_warning".to_string(), (!result.converged).to_string());
    let fmt_list = |v: &[f64]| v.iter().map(|a| fmt_g12(*a)).collect::<Vec<_>>().join(";");
    meta.insert("betas".to_string(), fmt_list(&betas));
    meta.insert("gammas".to_string(), fmt_list(&gammas));

    Ok(QaoaOutcome {
        samples: SampleSet::from_reads(n, reads, meta),
        betas,
        gammas,
        expectation: result.value,
        baseline,
        evaluations: result.evaluations,
        warning: !result.converged,
    })
}
