//! Low-energy samplers: exhaustive enumeration, simulated annealing and a
//! noisy QAOA statevector simulation.

mod anneal;
mod enumerate;
mod optimize;
mod qaoa;

pub use anneal::{simulated_anneal, AnnealConfig};
pub use enumerate::{energy_table, enumerate_spectrum, Spectrum, SpectrumState, DEFAULT_ENUMERATION_CAP};
pub use optimize::{pattern_search, PatternSearchResult};
pub use qaoa::{
    noise_lambda, qaoa_expectation, qaoa_optimize_and_sample, qaoa_state, two_qubit_gate_count, QaoaConfig,
    QaoaOutcome, STATEVECTOR_CAP, TWO_QUBIT_ERROR,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::textfmt::fmt_g12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub n: usize,
    pub samples: Vec<Sample>,
    pub meta: BTreeMap<String, String>,
}

impl SampleSet {
    /// Collapses repeated bitstrings; records are sorted by energy, then bits.
    pub fn from_reads(
        n: usize,
        reads: impl IntoIterator<Item = (Vec<u8>, f64)>,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let mut counts: HashMap<Vec<u8>, (f64, u64)> = HashMap::new();
        for (bits, energy) in reads {
            counts.entry(bits).or_insert((energy, 0)).1 += 1;
        }
        let mut samples: Vec<Sample> = counts
            .into_iter()
            .map(|(bits, (energy, count))| Sample { bits, energy, count })
            .collect();
        sort_samples(&mut samples);
        SampleSet { n, samples, meta }
    }

    pub fn shots(&self) -> u64 {
        self.samples.iter().map(|s| s.count).sum()
    }

    pub fn best(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Bitstrings repeated by multiplicity.
    pub fn reads(&self) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .flat_map(|s| std::iter::repeat_n(s, s.count as usize))
    }

    pub fn mean_energy(&self) -> Option<f64> {
        let shots = self.shots();
        (shots > 0).then(|| {
            self.samples
                .iter()
                .map(|s| s.energy * s.count as f64)
                .sum::<f64>()
                / shots as f64
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    /// CSV with a `# key value` header block and `bits,energy,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nvars {}", self.n);
        for (k, v) in &self.meta {
            if k != "nvars" {
                let _ = writeln!(out, "# {k} {v}");
            }
        }
        out.push_str("bits,energy,count\n");
        for s in &self.samples {
            let bits: String = s.bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
            let _ = writeln!(out, "{bits},{},{}", fmt_g12(s.energy), s.count);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut set = SampleSet::default();
        let mut n: Option<usize> = None;
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                if k == "nvars" {
                    n = Some(v.trim().parse().map_err(|_| Error::parse(lineno, "bad nvars"))?);
                } else {
                    set.meta.insert(k.to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line != "bits,energy,count" {
                    return Err(Error::parse(lineno, "expected header `bits,energy,count`"));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let [bits, energy, count] = f[..] else {
                return Err(Error::parse(lineno, "expected `bits,energy,count`"));
            };
            let bits = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => Err(Error::parse(lineno, "bits must be 0 or 1")),
                })
                .collect::<Result<Vec<u8>>>()?;
            let width = *n.get_or_insert(bits.len());
            if bits.len() != width {
                return Err(Error::parse(lineno, format!("expected {width} bits, found {}", bits.len())));
            }
            set.samples.push(Sample {
                bits,
                energy: energy.parse().map_err(|_| Error::parse(lineno, "bad energy"))?,
                count: count.parse().map_err(|_| Error::parse(lineno, "bad count"))?,
            });
        }
        set.n = n.unwrap_or(0);
        Ok(set)
    }
}

pub(crate) fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.bits.cmp(&b.bits)));
}

pub(crate) fn mask_to_bits(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> i) & 1) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_collapse_and_sort() {
        let set = SampleSet::from_reads(
            2,
            vec![(vec![1, 0], 1.0), (vec![0, 0], 0.0), (vec![1, 0], 1.0)],
            BTreeMap::new(),
        );
        assert_eq!(set.shots(), 3);
        assert_eq!(set.samples[0].bits, vec![0, 0]);
        assert_eq!(set.samples[1].count, 2);
        assert_eq!(set.reads().count(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let set = SampleSet::from_reads(3, vec![(vec![1, 0, 1], 6.5), (vec![0, 0, 0], 24.0)], BTreeMap::new())
            .with_meta("backend", "anneal")
            .with_meta("seed", 7);
        let text = set.to_csv();
        assert!(text.starts_with("# nvars 3\n# backend anneal\n"));
        assert_eq!(SampleSet::from_csv(&text).unwrap(), set);
    }

    #[test]
    fn empty_csv() {
        let set = SampleSet::from_csv("# nvars 4\nbits,energy,count\n").unwrap();
        assert!(set.is_empty());
        assert_eq!(set.n, 4);
    }

    #[test]
    fn malformed_csv_names_line() {
        let err = SampleSet::from_csv("bits,energy,count\n01,1,1\n012,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
