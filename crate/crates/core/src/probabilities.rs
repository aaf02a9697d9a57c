//! Full click/no-click distribution `P(g | n)` of the party detectors.

use std::f64::consts::PI;

use log::warn;

use crate::bell::CorrelatorTable;
use crate::error::{invalid, Error, Result};
use crate::herald::HeraldedState;
use crate::measurement::{subset_density, HeraldedTerms, MeasurementPlan};

const NORMALIZATION_TOL: f64 = 1e-10;
const NEGATIVE_CLAMP: f64 = 1e-12;
const SIGNALLING_TOL: f64 = 1e-8;

/// `P(g | n)` over outcome masks `g` (bit `p` set = party `p` clicked) and
/// setting masks `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    parties: usize,
    /// Row-major in `n`: entry `n * 2^N + g`.
    probs: Vec<f64>,
}

impl OutcomeTable {
    /// Wraps raw probabilities, clamping negatives down to -1e-12 and
    /// rejecting anything more negative or unnormalized.
    pub fn new(parties: usize, mut probs: Vec<f64>) -> Result<Self> {
        if parties == 0 || parties > 16 {
            return invalid(format!("unsupported party count {parties}"));
        }
        let size = 1usize << parties;
        if probs.len() != size * size {
            return invalid(format!(
                "outcome table for {parties} parties needs {} entries, got {}",
                size * size,
                probs.len()
            ));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() {
                return invalid("non-finite probability");
            }
            if *p < 0.0 {
                if *p < -NEGATIVE_CLAMP {
                    return Err(Error::InternalConsistency(format!("negative probability {p:.3e}")));
                }
                warn!("clamping probability {p:.3e} to zero");
                *p = 0.0;
            }
        }
        let table = Self { parties, probs };
        for n in 0..size {
            let total: f64 = (0..size).map(|g| table.get(g, n)).sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return invalid(format!("probabilities for setting {n:#b} sum to {total}"));
            }
        }
        Ok(table)
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn size(&self) -> usize {
        1 << self.parties
    }

    #[inline]
    pub fn get(&self, outcome: usize, settings: usize) -> f64 {
        self.probs[settings * self.size() + outcome]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// `<M^(n)> = sum_g (-1)^{N - |g|} P(g | n)`.
    pub fn correlators(&self) -> CorrelatorTable {
        let size = self.size();
        let values = (0..size)
            .map(|n| {
                (0..size)
                    .map(|g| {
                        let p = self.get(g, n);
                        if (self.parties - g.count_ones() as usize) % 2 == 0 {
                            p
                        } else {
                            -p
                        }
                    })
                    .sum()
            })
            .collect();
        CorrelatorTable::new(self.parties, values).expect("size matches by construction")
    }

    /// Largest change of any `(N-1)`-party marginal under a change of the
    /// remaining party's setting. Single-party checks imply no-signalling
    /// for every subset.
    pub fn max_signalling(&self) -> f64 {
        let size = self.size();
        let mut worst: f64 = 0.0;
        for p in 0..self.parties {
            let bit = 1usize << p;
            for n in (0..size).filter(|n| n & bit == 0) {
                for g in (0..size).filter(|g| g & bit == 0) {
                    let a = self.get(g, n) + self.get(g | bit, n);
                    let b = self.get(g, n | bit) + self.get(g | bit, n | bit);
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    /// Distribution produced by one deterministic response per party:
    /// `responses[p][n_p]` is the outcome of party `p` under setting `n_p`.
    pub fn deterministic(responses: &[[bool; 2]]) -> Result<Self> {
        let parties = responses.len();
        let size = 1usize << parties;
        let mut probs = vec![0.0; size * size];
        for n in 0..size {
            let g = (0..parties)
                .filter(|&p| responses[p][n >> p & 1])
                .fold(0usize, |acc, p| acc | 1 << p);
            probs[n * size + g] = 1.0;
        }
        Self::new(parties, probs)
    }

    /// Uniform white-noise distribution.
    pub fn uniform(parties: usize) -> Result<Self> {
        let size = 1usize << parties;
        Self::new(parties, vec![1.0 / size as f64; size * size])
    }

    /// Same distribution with parties reordered: party `k` of the result is
    /// party `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.parties {
            return invalid("permutation length mismatch");
        }
        let map = |mask: usize| {
            order
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &p)| acc | ((mask >> p & 1) << k))
        };
        let size = self.size();
        let mut probs = vec![0.0; size * size];
        for n in 0..size {
            for g in 0..size {
                probs[map(n) * size + map(g)] = self.get(g, n);
            }
        }
        Self::new(self.parties, probs)
    }

    /// Outcome labels of party `party` flipped under setting `setting`.
    pub fn outcome_relabeled(&self, party: usize, setting: usize) -> Result<Self> {
        let size = self.size();
        let bit = 1usize << party;
        let mut probs = self.probs.clone();
        for n in (0..size).filter(|n| (n >> party & 1) == setting) {
            for g in 0..size {
                probs[n * size + (g ^ bit)] = self.get(g, n);
            }
        }
        Self::new(self.parties, probs)
    }

    /// Probability that every party in `subset` clicks, for each pattern of
    /// the parties in `subset` and their settings (others at setting 0).
    /// Indexed in base 3, party 0 least significant: digit 0 = absent,
    /// 1 + setting otherwise. The empty pattern is 1.
    ///
    /// On no-signalling tables these `3^N` numbers determine the table.
    pub fn click_marginals(&self) -> Vec<f64> {
        let n = self.parties;
        let size = self.size();
        let count = 3usize.pow(n as u32);
        let mut out = vec![0.0; count];
        for (t, slot) in out.iter_mut().enumerate() {
            let (subset, settings) = decode_pattern(n, t);
            *slot = (0..size)
                .filter(|g| g & subset == subset)
                .map(|g| self.get(g, settings))
                .sum();
        }
        out
    }

    fn marginal_at(&self, subset: usize, fixed: usize) -> Vec<f64> {
        let members: Vec<usize> = (0..self.parties).filter(|&p| subset >> p & 1 == 1).collect();
        let m = members.len();
        let full = self.size();
        let small = 1usize << m;
        let spread = |mask: usize| {
            members
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &p)| acc | ((mask >> k & 1) << p))
        };
        let mut out = vec![0.0; small * small];
        for ns in 0..small {
            let n = spread(ns) | (fixed & !subset & (full - 1));
            for g in 0..full {
                let gs = members
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &p)| acc | ((g >> p & 1) << k));
                out[ns * small + gs] += self.get(g, n);
            }
        }
        out
    }
}

/// `(subset, settings)` masks of the base-3 pattern `t`.
pub fn decode_pattern(parties: usize, t: usize) -> (usize, usize) {
    let (mut subset, mut settings, mut rest) = (0, 0, t);
    for p in 0..parties {
        let digit = rest % 3;
        rest /= 3;
        if digit > 0 {
            subset |= 1 << p;
            settings |= (digit - 1) << p;
        }
    }
    (subset, settings)
}

/// `P(g | n)` from the two-Gaussian conditional state, computed directly
/// from the closed form (no tabulation).
pub fn outcome_probability(
    heralded: &HeraldedState,
    plan: &MeasurementPlan,
    outcome: usize,
    settings: usize,
) -> Result<f64> {
    let n = plan.parties();
    if heralded.parties() != n {
        return invalid("party count mismatch");
    }
    if outcome >> n != 0 || settings >> n != 0 {
        return invalid("outcome or setting mask out of range");
    }
    let all = (1usize << n) - 1;
    let silent = all & !outcome;
    let base = 4.0 * PI * (1.0 - plan.p_dark);
    let mut total = 0.0;
    for (w, v) in heralded.components() {
        let mut h = 0.0;
        for b in submasks(outcome) {
            let sign = if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            h += sign * base.powi(b.count_ones() as i32) * subset_density(v, plan, b | silent, settings)?;
        }
        total += w * base.powi(silent.count_ones() as i32) * h;
    }
    Ok(total)
}

/// All submasks of `mask`, including 0 and `mask` itself.
fn submasks(mask: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

/// Every `P(g | n)`, sharing the tabulated Gaussian densities.
pub fn build_outcome_table(heralded: &HeraldedState, plan: &MeasurementPlan) -> Result<OutcomeTable> {
    let terms = HeraldedTerms::build(heralded, plan)?;
    let n = terms.parties();
    let size = 1usize << n;
    let base = 4.0 * PI * (1.0 - terms.p_dark);
    let mut powers = vec![1.0; n + 1];
    for k in 1..=n {
        powers[k] = powers[k - 1] * base;
    }
    let mut probs = vec![0.0; size * size];
    for settings in 0..size {
        for outcome in 0..size {
            let silent = (size - 1) & !outcome;
            let mut total = 0.0;
            for (w, table) in terms.weights.iter().zip(&terms.tables) {
                let h: f64 = submasks(outcome)
                    .map(|b| {
                        let term = powers[b.count_ones() as usize] * table.get(b | silent, settings);
                        if b.count_ones() % 2 == 0 {
                            term
                        } else {
                            -term
                        }
                    })
                    .sum();
                total += w * powers[silent.count_ones() as usize] * h;
            }
            probs[settings * size + outcome] = total;
        }
    }
    OutcomeTable::new(n, probs)
}

/// Marginal distribution of the parties in `subset`, with the other parties
/// held at the settings in `fixed` (bits outside `subset` are used).
///
/// The result is cross-checked against the marginal taken with the other
/// parties at setting 1; a difference above 1e-8 means the table signals.
pub fn marginalize(table: &OutcomeTable, subset: usize, fixed: usize) -> Result<OutcomeTable> {
    let full = table.size() - 1;
    if subset == 0 || subset & !full != 0 {
        return invalid(format!("subset {subset:#b} must be a nonempty subset of the parties"));
    }
    let m = subset.count_ones() as usize;
    let probs = table.marginal_at(subset, fixed);
    let check = table.marginal_at(subset, full);
    let dev = probs
        .iter()
        .zip(&check)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if dev > SIGNALLING_TOL {
        return Err(Error::InternalConsistency(format!(
            "marginal of {subset:#b} depends on the other parties' settings (deviation {dev:.3e})"
        )));
    }
    OutcomeTable::new(m, probs)
}
