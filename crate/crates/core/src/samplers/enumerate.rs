use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qubo::Qubo;

use super::mask_to_bits;

pub const DEFAULT_ENUMERATION_CAP: usize = 24;

const CHUNK_BITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumState {
    /// Bit `i` of the mask is variable `i`.
    pub mask: u64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n: usize,
    pub states: Vec<SpectrumState>,
}

impl Spectrum {
    pub fn bits(&self, state: &SpectrumState) -> Vec<u8> {
        mask_to_bits(state.mask, self.n)
    }

    pub fn ground_energy(&self) -> Option<f64> {
        self.states.first().map(|s| s.energy)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Energy of every assignment, indexed by mask.
pub fn energy_table(qubo: &Qubo, cap: usize) -> Result<Vec<f64>> {
    let n = qubo.n;
    if n > cap {
        return Err(Error::Capacity(format!(
            "{n} variables exceed the enumeration cap of {cap}; use the anneal or qaoa backend"
        )));
    }
    let (diag, nbrs) = qubo.dense();
    let low = n.min(CHUNK_BITS);
    let chunk = 1usize << low;
    let mut table = vec![0.0; 1usize << n];
    table.par_chunks_mut(chunk).enumerate().for_each(|(c, out)| {
        let base = (c as u64) << low;
        let mut bits = mask_to_bits(base, n);
        let mut e = qubo.evaluate_unchecked(&bits);
        let mut gray = 0u64;
        out[0] = e;
        for step in 1..chunk as u64 {
            let i = step.trailing_zeros() as usize;
            let sign = if bits[i] == 1 { -1.0 } else { 1.0 };
            let field = diag[i]
                + nbrs[i]
                    .iter()
                    .filter(|(k, _)| bits[*k] == 1)
                    .map(|(_, w)| w)
                    .sum::<f64>();
            e += sign * field;
            bits[i] ^= 1;
            gray ^= 1 << i;
            out[gray as usize] = e;
        }
    });
    Ok(table)
}

/// All `2^n` assignments with energies, ascending by (energy, mask).
pub fn enumerate_spectrum(qubo: &Qubo, cap: usize) -> Result<Spectrum> {
    let table = energy_table(qubo, cap)?;
    let mut states: Vec<SpectrumState> = table
        .into_iter()
        .enumerate()
        .map(|(mask, energy)| SpectrumState {
            mask: mask as u64,
            energy,
        })
        .collect();
    states.par_sort_unstable_by(|a, b| a.energy.total_cmp(&b.energy).then(a.mask.cmp(&b.mask)));
    Ok(Spectrum { n: qubo.n, states })
}
