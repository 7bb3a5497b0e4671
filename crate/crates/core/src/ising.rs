//! Spin form of a QUBO under `s = 2x - 1`.
//!
//! `H(s) = sum_{i<k} J_ik s_i s_k + sum_i h_i s_i + offset`, with each unordered
//! coupling stored once.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::qubo::Qubo;
use crate::textfmt::fmt_g12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IsingModel {
    pub n: usize,
    pub couplings: BTreeMap<(usize, usize), f64>,
    pub fields: Vec<f64>,
    pub offset: f64,
}

pub fn to_ising(qubo: &Qubo) -> IsingModel {
    let mut fields = vec![0.0; qubo.n];
    let mut couplings = BTreeMap::new();
    let mut offset = qubo.offset;
    for (&(i, k), &q) in &qubo.terms {
        if i == k {
            // q x = q/2 + q/2 s
            fields[i] += q / 2.0;
            offset += q / 2.0;
        } else {
            // 2q x_i x_k = q/2 (1 + s_i + s_k + s_i s_k)
            couplings.insert((i, k), q / 2.0);
            fields[i] += q / 2.0;
            fields[k] += q / 2.0;
            offset += q / 2.0;
        }
    }
    IsingModel {
        n: qubo.n,
        couplings,
        fields,
        offset,
    }
}

impl IsingModel {
    /// Upper-triangular QUBO entries and offset reproducing this model.
    pub fn to_qubo_terms(&self) -> (Vec<(usize, usize, f64)>, f64) {
        let mut diag: Vec<f64> = self.fields.iter().map(|h| 2.0 * h).collect();
        let mut offset = self.offset - self.fields.iter().sum::<f64>();
        let mut entries = Vec::new();
        for (&(i, k), &j) in &self.couplings {
            diag[i] -= 2.0 * j;
            diag[k] -= 2.0 * j;
            offset += j;
            entries.push((i, k, 2.0 * j));
        }
        entries.extend(
            diag.into_iter()
                .enumerate()
                .filter(|(_, c)| *c != 0.0)
                .map(|(i, c)| (i, i, c)),
        );
        entries.sort_by_key(|&(i, k, _)| (i, k));
        (entries, offset)
    }

    pub fn to_qubo(&self) -> Result<Qubo> {
        let (entries, offset) = self.to_qubo_terms();
        Qubo::from_terms(self.n, &entries, offset)
    }

    pub(crate) fn energy_unchecked(&self, spins: &[i8]) -> f64 {
        let mut e = self.offset;
        for (h, &s) in self.fields.iter().zip(spins) {
            e += h * s as f64;
        }
        for (&(i, k), &j) in &self.couplings {
            e += j * (spins[i] * spins[k]) as f64;
        }
        e
    }

    /// Neighbour lists for local-field updates.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(i, k), &j) in &self.couplings {
            adj[i].push((k, j));
            adj[k].push((i, j));
        }
        adj
    }

    pub fn coupling_count(&self) -> usize {
        self.couplings.values().filter(|j| **j != 0.0).count()
    }

    /// `n N offset F`, then `h i value` and `J i k value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n {} offset {}", self.n, fmt_g12(self.offset));
        for (i, h) in self.fields.iter().enumerate() {
            if *h != 0.0 {
                let _ = writeln!(out, "h {i} {}", fmt_g12(*h));
            }
        }
        for (&(i, k), &j) in &self.couplings {
            let _ = writeln!(out, "J {i} {k} {}", fmt_g12(j));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty Ising file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let mut model = match h[..] {
            ["n", n, "offset", f] => {
                let n: usize = n.parse().map_err(|_| Error::parse(1, "bad spin count"))?;
                IsingModel {
                    n,
                    couplings: BTreeMap::new(),
                    fields: vec![0.0; n],
                    offset: f.parse().map_err(|_| Error::parse(1, "bad offset"))?,
                }
            }
            _ => return Err(Error::parse(1, "expected `n N offset F`")),
        };
        for (lineno, line) in lines {
            let lineno = lineno + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            let idx = |s: &str| -> Result<usize> {
                let i: usize = s.parse().map_err(|_| Error::parse(lineno, "bad index"))?;
                if i >= model.n {
                    return Err(Error::parse(lineno, "index out of range"));
                }
                Ok(i)
            };
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(lineno, "bad value")) };
            match f[..] {
                ["h", i, v] => {
                    let i = idx(i)?;
                    model.fields[i] = num(v)?;
                }
                ["J", i, k, v] => {
                    let (i, k) = (idx(i)?, idx(k)?);
                    if i >= k {
                        return Err(Error::parse(lineno, "coupling indices must satisfy i < k"));
                    }
                    model.couplings.insert((i, k), num(v)?);
                }
                _ => return Err(Error::parse(lineno, "expected `h i value` or `J i k value`")),
            }
        }
        Ok(model)
    }
}

pub fn ising_energy(model: &IsingModel, spins: &[i8]) -> Result<f64> {
    if spins.len() != model.n {
        return Err(Error::Parameter(format!(
            "spin vector has {} entries, model has {}",
            spins.len(),
            model.n
        )));
    }
    if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::Parameter(format!("spin value {bad} is not -1 or +1")));
    }
    Ok(model.energy_unchecked(spins))
}

pub fn bits_to_spins(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b == 1 { 1 } else { -1 }).collect()
}

pub fn spins_to_bits(spins: &[i8]) -> Vec<u8> {
    spins.iter().map(|&s| u8::from(s > 0)).collect()
}
