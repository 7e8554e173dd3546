//! Exact distribution of per-arm utility sums on an integer lattice.
//!
//! Utilities are mapped to integers `round(u_k * scale)`; the sum over `n`
//! patients is then an integer-valued random variable whose pmf is built by
//! `n` dense convolutions with the four-point single-patient distribution.

use crate::error::{Error, Result};
use crate::outcome::{JointOutcomeModel, UtilitySpec};
use crate::stats::CompensatedSum;

/// Largest denominator tried by [`rationalize_utilities`] by default.
pub const DEFAULT_MAX_DENOMINATOR: u64 = 1000;
/// Scale used when no small common denominator exists.
pub const FALLBACK_SCALE: u64 = 1_000_000;
/// Default cap on the number of dense lattice cells per pmf.
pub const DEFAULT_MAX_SUPPORT: usize = 1 << 24;

const INTEGRALITY_TOL: f64 = 1e-9;

/// Utilities expressed as integers over a common denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegerUtilities {
    pub scale: u64,
    pub scores: [i64; 4],
    /// Scores were rounded at [`FALLBACK_SCALE`]; exact results are then
    /// exact only up to a lattice resolution of `1 / FALLBACK_SCALE`.
    pub approximate_lattice: bool,
}

impl IntegerUtilities {
    pub fn max_score(&self) -> i64 {
        *self.scores.iter().max().unwrap()
    }

    pub fn min_score(&self) -> i64 {
        *self.scores.iter().min().unwrap()
    }
}

/// Smallest common denominator `<= max_denominator` making every score an
/// integer to within 1e-9.
pub fn rationalize_utilities(u: &UtilitySpec, max_denominator: u64) -> Result<IntegerUtilities> {
    if max_denominator == 0 {
        return Err(Error::Contract("max_denominator must be at least 1".into()));
    }
    for scale in 1..=max_denominator {
        let s = scale as f64;
        if u.scores.iter().all(|v| ((v * s) - (v * s).round()).abs() <= INTEGRALITY_TOL) {
            let scores = u.scores.map(|v| (v * s).round() as i64);
            return Ok(IntegerUtilities { scale, scores, approximate_lattice: false });
        }
    }
    let s = FALLBACK_SCALE as f64;
    Ok(IntegerUtilities {
        scale: FALLBACK_SCALE,
        scores: u.scores.map(|v| (v * s).round() as i64),
        approximate_lattice: true,
    })
}

/// Single-patient distribution on the lattice with duplicate scores merged.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientLattice {
    pub scale: u64,
    /// `(score, probability)` pairs with distinct scores and positive mass.
    atoms: Vec<(i64, f64)>,
}

impl PatientLattice {
    pub fn new(lattice: &IntegerUtilities, pi: [f64; 4]) -> Self {
        let mut atoms: Vec<(i64, f64)> = Vec::with_capacity(4);
        for (s, p) in lattice.scores.iter().zip(pi) {
            if p <= 0.0 {
                continue;
            }
            match atoms.iter_mut().find(|(a, _)| a == s) {
                Some(atom) => atom.1 += p,
                None => atoms.push((*s, p)),
            }
        }
        atoms.sort_by_key(|a| a.0);
        Self { scale: lattice.scale, atoms }
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    fn min(&self) -> i64 {
        self.atoms.first().map_or(0, |a| a.0)
    }

    fn max(&self) -> i64 {
        self.atoms.last().map_or(0, |a| a.0)
    }
}

/// Probability mass function of an integer-valued utility sum.
///
/// Stored densely: `masses[i]` is the probability of the sum `lo + i`
/// (in lattice units, i.e. utility sum times `scale`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePmf {
    scale: u64,
    n: u64,
    lo: i64,
    masses: Vec<f64>,
}

impl LatticePmf {
    /// Point mass at zero: the sum over no patients.
    pub fn empty_sum(scale: u64) -> Self {
        Self { scale, n: 0, lo: 0, masses: vec![1.0] }
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    /// Number of patients summed.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Smallest lattice point held (may carry zero mass).
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.masses.len() as i64 - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Lattice points aligned with [`masses`](Self::masses).
    pub fn offsets(&self) -> Vec<i64> {
        (self.lo..=self.hi()).collect()
    }

    /// Points with strictly positive mass.
    pub fn points(&self) -> Vec<(i64, f64)> {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (self.lo + i as i64, *m))
            .collect()
    }

    pub fn mass_at(&self, k: i64) -> f64 {
        if k < self.lo || k > self.hi() {
            0.0
        } else {
            self.masses[(k - self.lo) as usize]
        }
    }

    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        self.masses.iter().for_each(|m| acc.add(*m));
        acc.value()
    }

    /// Mean of the utility sum in utility units.
    pub fn mean(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for (i, m) in self.masses.iter().enumerate() {
            acc.add((self.lo + i as i64) as f64 * m);
        }
        acc.value() / self.scale as f64
    }

    /// Variance of the utility sum in utility units.
    pub fn variance(&self) -> f64 {
        let mean = self.mean() * self.scale as f64;
        let mut acc = CompensatedSum::default();
        for (i, m) in self.masses.iter().enumerate() {
            let dev = (self.lo + i as i64) as f64 - mean;
            acc.add(dev * dev * m);
        }
        acc.value() / (self.scale as f64).powi(2)
    }

    /// Adds one patient's utility to the sum.
    pub fn add_patient(&mut self, patient: &PatientLattice, max_support: usize) -> Result<()> {
        if patient.scale != self.scale {
            return Err(Error::Contract(format!(
                "patient lattice scale {} differs from pmf scale {}",
                patient.scale, self.scale
            )));
        }
        let (pmin, pmax) = (patient.min(), patient.max());
        let len = self.masses.len() + (pmax - pmin) as usize;
        if len > max_support {
            return Err(Error::Resource(format!(
                "utility-sum lattice needs {len} cells, above the cap of {max_support}"
            )));
        }
        let mut next = vec![0.0; len];
        for (i, m) in self.masses.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for (s, p) in &patient.atoms {
                next[i + (s - pmin) as usize] += m * p;
            }
        }
        self.masses = next;
        self.lo += pmin;
        self.n += 1;
        Ok(())
    }

    /// Cumulative masses `F[i] = Pr(S <= lo + i)`.
    fn cumulative(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::default();
        self.masses
            .iter()
            .map(|m| {
                acc.add(*m);
                acc.value()
            })
            .collect()
    }
}

/// Exact pmf of the utility sum over `n` patients drawn from `m`.
pub fn utility_sum_pmf(n: u64, m: &JointOutcomeModel, u: &UtilitySpec) -> Result<LatticePmf> {
    let lattice = rationalize_utilities(u, DEFAULT_MAX_DENOMINATOR)?;
    utility_sum_pmf_on(n, &PatientLattice::new(&lattice, m.pi), DEFAULT_MAX_SUPPORT)
}

pub fn utility_sum_pmf_on(n: u64, patient: &PatientLattice, max_support: usize) -> Result<LatticePmf> {
    if n == 0 {
        return Err(Error::Domain("utility sum needs n >= 1".into()));
    }
    let mut pmf = LatticePmf::empty_sum(patient.scale);
    for _ in 0..n {
        pmf.add_patient(patient, max_support)?;
    }
    Ok(pmf)
}

/// Pre-computed cumulative view of the low arm for repeated threshold
/// queries of the difference `S_H - S_L`.
#[derive(Debug, Clone)]
pub struct DifferenceDist<'a> {
    high: &'a LatticePmf,
    low: &'a LatticePmf,
    low_cdf: Vec<f64>,
}

impl<'a> DifferenceDist<'a> {
    pub fn new(high: &'a LatticePmf, low: &'a LatticePmf) -> Result<Self> {
        if high.scale != low.scale {
            return Err(Error::Contract(format!(
                "lattice scales differ ({} vs {})",
                high.scale, low.scale
            )));
        }
        if high.n != low.n {
            return Err(Error::Contract(format!(
                "arm sizes differ ({} vs {})",
                high.n, low.n
            )));
        }
        Ok(Self { high, low, low_cdf: low.cumulative() })
    }

    fn low_cdf_at(&self, x: i64) -> f64 {
        if x < self.low.lo {
            0.0
        } else if x >= self.low.hi() {
            1.0
        } else {
            self.low_cdf[(x - self.low.lo) as usize]
        }
    }

    /// `Pr(S_H - S_L > k)`.
    pub fn prob_greater(&self, k: i64) -> f64 {
        let mut acc = CompensatedSum::default();
        for (i, m) in self.high.masses.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let a = self.high.lo + i as i64;
            // S_L < a - k  <=>  S_L <= a - k - 1
            acc.add(m * self.low_cdf_at(a - k - 1));
        }
        acc.value().clamp(0.0, 1.0)
    }

    /// `Pr(S_H - S_L = k)`.
    pub fn prob_equal(&self, k: i64) -> f64 {
        let mut acc = CompensatedSum::default();
        for (i, m) in self.high.masses.iter().enumerate() {
            if *m != 0.0 {
                acc.add(m * self.low.mass_at(self.high.lo + i as i64 - k));
            }
        }
        acc.value()
    }

    /// Smallest and largest attainable difference.
    pub fn range(&self) -> (i64, i64) {
        (self.high.lo - self.low.hi(), self.high.hi() - self.low.lo)
    }
}

/// Integer threshold `k` with `S_H - S_L > n * lambda * scale` equivalent
/// to `S_H - S_L > k`. Values within 1e-9 of a lattice point snap to it.
pub fn lattice_threshold(n: u64, scale: u64, lambda_u: f64) -> i64 {
    let t = n as f64 * scale as f64 * lambda_u;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
        r as i64
    } else {
        t.floor() as i64
    }
}

/// Probabilities of each selection outcome under the strict rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSplit {
    pub select_high: f64,
    pub select_low: f64,
    /// Mass exactly at the threshold (part of `select_low`); zero unless the
    /// threshold lies on the lattice.
    pub tie: f64,
}

pub fn selection_split(high: &LatticePmf, low: &LatticePmf, n: u64, lambda_u: f64) -> Result<SelectionSplit> {
    let dist = DifferenceDist::new(high, low)?;
    let t = n as f64 * high.scale as f64 * lambda_u;
    let k = lattice_threshold(n, high.scale, lambda_u);
    let select_high = dist.prob_greater(k);
    let on_lattice = (t - k as f64).abs() <= 1e-9 * t.abs().max(1.0);
    let tie = if on_lattice { dist.prob_equal(k) } else { 0.0 };
    Ok(SelectionSplit { select_high, select_low: 1.0 - select_high, tie })
}

/// `Pr(mean(U_H) - mean(U_L) > lambda_u)` for `n`-patient arms.
pub fn select_high_prob(high: &LatticePmf, low: &LatticePmf, n: u64, lambda_u: f64) -> Result<f64> {
    if high.n != n || low.n != n {
        return Err(Error::Contract(format!(
            "pmfs hold {} and {} patients, expected {n}",
            high.n, low.n
        )));
    }
    Ok(selection_split(high, low, n, lambda_u)?.select_high)
}
