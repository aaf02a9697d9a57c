//! Local-hidden-variable feasibility of an outcome table.
//!
//! A table is local iff it is a convex mixture of the `4^N` deterministic
//! strategies. The mixture weights are found with a dense phase-1 simplex
//! (artificial variable per row; Dantzig pricing with Bland's rule during
//! degenerate stretches, which rules out cycling; Harris ratio test). When
//! no mixture exists the
//! final simplex multipliers form a Farkas certificate `y` with
//! `y . a_k <= 0` for every strategy column and `y . p > 0`.

use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::probabilities::{decode_pattern, marginalize, OutcomeTable};

/// Per-row tolerance on the equality constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const OPTIMALITY_TOL: f64 = 1e-8;
/// Consecutive degenerate pivots before Bland's rule takes over.
const DEGENERATE_SWITCH: usize = 20;

/// One deterministic response function per party.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicStrategy {
    pub index: usize,
    /// `responses[p][n]`: does party `p` click under setting `n`.
    pub responses: Vec<[bool; 2]>,
}

impl DeterministicStrategy {
    /// Strategy `index`; base-4 digit `p` (least significant first) encodes
    /// party `p` as `outcome(0) + 2 outcome(1)`.
    pub fn from_index(parties: usize, index: usize) -> Self {
        let responses = (0..parties)
            .map(|p| {
                let digit = index >> (2 * p) & 3;
                [digit & 1 == 1, digit & 2 == 2]
            })
            .collect();
        Self { index, responses }
    }

    pub fn parties(&self) -> usize {
        self.responses.len()
    }

    /// Outcome mask under setting mask `settings`.
    pub fn outcome(&self, settings: usize) -> usize {
        self.responses
            .iter()
            .enumerate()
            .filter(|(p, r)| r[settings >> p & 1])
            .fold(0, |acc, (p, _)| acc | 1 << p)
    }

    /// `1` if this strategy produces `outcome` under `settings`, else `0`.
    pub fn indicator(&self, outcome: usize, settings: usize) -> f64 {
        if self.outcome(settings) == outcome {
            1.0
        } else {
            0.0
        }
    }

    pub fn table(&self) -> Result<OutcomeTable> {
        OutcomeTable::deterministic(&self.responses)
    }
}

/// All `4^N` strategies in index order.
pub fn enumerate_strategies(parties: usize) -> Result<Vec<DeterministicStrategy>> {
    if parties == 0 || parties > 8 {
        return invalid(format!("strategy enumeration supports 1..=8 parties, got {parties}"));
    }
    Ok((0..1usize << (2 * parties))
        .map(|k| DeterministicStrategy::from_index(parties, k))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub feasible: bool,
    /// Mixture weights over [`enumerate_strategies`] order, when feasible.
    pub weights: Option<Vec<f64>>,
    /// Largest constraint violation left at the phase-1 optimum, when
    /// infeasible.
    pub gap: Option<f64>,
    /// Phase-1 optimum: total constraint violation (L1).
    pub phase_one_objective: f64,
    /// Farkas multipliers over the constraint rows (see [`lp_rows`]).
    pub certificate: Vec<f64>,
    pub pivots: usize,
}

/// Right-hand side of the LP: [`OutcomeTable::click_marginals`]. Row 0 is
/// the normalization `sum_k c_k = 1`.
pub fn lp_rows(table: &OutcomeTable) -> Vec<f64> {
    table.click_marginals()
}

/// Column of strategy `s` in the LP: 1 on every pattern whose parties all
/// click under its settings.
pub fn lp_column(s: &DeterministicStrategy) -> Vec<usize> {
    let n = s.parties();
    (0..3usize.pow(n as u32))
        .filter(|&t| {
            let (subset, settings) = decode_pattern(n, t);
            s.outcome(settings) & subset == subset
        })
        .collect()
}

/// Dense phase-1 tableau for `A x = b`, `x >= 0`, `b >= 0`.
struct Tableau {
    rows: usize,
    structural: usize,
    cols: usize,
    /// `rows x cols`, structural columns then one artificial per row.
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs of the phase-1 objective.
    cost: Vec<f64>,
}

impl Tableau {
    fn new(a: &[Vec<usize>], rows: usize, b: &[f64]) -> Self {
        let structural = a.len();
        let cols = structural + rows;
        let mut t = vec![0.0; rows * cols];
        let mut cost = vec![0.0; cols];
        for (j, col) in a.iter().enumerate() {
            for &i in col {
                t[i * cols + j] = 1.0;
                cost[j] -= 1.0;
            }
        }
        for i in 0..rows {
            t[i * cols + structural + i] = 1.0;
        }
        Self {
            rows,
            structural,
            cols,
            t,
            rhs: b.to_vec(),
            basis: (structural..structural + rows).collect(),
            cost,
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[r * cols + q];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        self.t[r * cols + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        let rrhs = self.rhs[r];
        let update = |row: &mut [f64], rhs: &mut f64| {
            let f = row[q];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[q] = 0.0;
                *rhs -= f * rrhs;
            }
        };
        for (i, row) in before.chunks_mut(cols).enumerate() {
            update(row, &mut self.rhs[i]);
        }
        for (k, row) in after.chunks_mut(cols).enumerate() {
            update(row, &mut self.rhs[r + 1 + k]);
        }
        let f = self.cost[q];
        for (c, p) in self.cost.iter_mut().zip(prow.iter()) {
            *c -= f * p;
        }
        self.cost[q] = 0.0;
        self.basis[r] = q;
    }

    /// Leaving row for entering column `q` (two-pass Harris test). Among
    /// near-tied rows the largest pivot wins, or the smallest basic index
    /// under Bland's rule.
    fn leaving_row(&self, q: usize, bland: bool) -> Option<usize> {
        let cols = self.cols;
        let bound = (0..self.rows)
            .filter(|&i| self.t[i * cols + q] > PIVOT_TOL)
            .map(|i| (self.rhs[i].max(0.0) + HARRIS_TOL) / self.t[i * cols + q])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        (0..self.rows)
            .filter(|&i| {
                let a = self.t[i * cols + q];
                a > PIVOT_TOL && self.rhs[i].max(0.0) / a <= bound
            })
            .min_by(|&i, &k| {
                if bland {
                    self.basis[i].cmp(&self.basis[k])
                } else {
                    self.t[k * cols + q].total_cmp(&self.t[i * cols + q]).then(i.cmp(&k))
                }
            })
    }

    /// Pivots to optimality: most negative reduced cost, switching to
    /// Bland's rule while pivots are degenerate. Returns the pivot count.
    fn solve(&mut self, max_pivots: usize) -> Result<usize> {
        let cols = self.cols;
        let mut degenerate_run = 0usize;
        for it in 0..max_pivots {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let entering = if bland {
                (0..cols).find(|&j| self.cost[j] < -COST_TOL)
            } else {
                (0..cols)
                    .filter(|&j| self.cost[j] < -COST_TOL)
                    .min_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)))
            };
            let Some(q) = entering else {
                return Ok(it);
            };
            // phase 1 is bounded below by 0; an unbounded ray means the
            // reduced costs have drifted
            let r = self.leaving_row(q, bland).ok_or_else(|| {
                Error::SolverFailure(format!(
                    "unbounded ray in phase 1 at column {q} (reduced cost {:.3e})",
                    self.cost[q]
                ))
            })?;
            if self.rhs[r] <= HARRIS_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q);
        }
        Err(Error::SolverFailure(format!("no convergence within {max_pivots} pivots")))
    }
}

/// Decides whether `table` lies in the local polytope.
///
/// The constraints are written in the `3^N` click-marginal coordinates of
/// [`lp_rows`], which determine a no-signalling table; tables that signal
/// beyond 1e-8 are rejected. Weights of a feasible result reproduce every
/// `P(g | n)` to 1e-8.
pub fn lhv_feasible(table: &OutcomeTable) -> Result<FeasibilityResult> {
    let n = table.parties();
    if n > 8 {
        return invalid("LHV test supports at most 8 parties");
    }
    let signalling = table.max_signalling();
    if signalling > RECONSTRUCTION_TOL {
        return invalid(format!("table signals ({signalling:.3e}); no local model can reproduce it"));
    }
    let b = lp_rows(table);
    let rows = b.len();
    let strategies = enumerate_strategies(n)?;
    let columns: Vec<Vec<usize>> = strategies.iter().map(lp_column).collect();

    let mut tab = Tableau::new(&columns, rows, &b);
    let pivots = tab.solve(50 * (rows + columns.len()))?;
    let structural = tab.structural;

    // re-solve the final basis from scratch to shed accumulated round-off
    let mut basis_matrix = DMatrix::<f64>::zeros(rows, rows);
    for (k, &j) in tab.basis.iter().enumerate() {
        if j < structural {
            for &i in &columns[j] {
                basis_matrix[(i, k)] = 1.0;
            }
        } else {
            basis_matrix[(j - structural, k)] = 1.0;
        }
    }
    let lu = basis_matrix.clone().lu();
    let xb = lu
        .solve(&DVector::from_column_slice(&b))
        .ok_or_else(|| Error::SolverFailure(format!("final basis is singular after {pivots} pivots")))?;
    let cb = DVector::from_iterator(rows, tab.basis.iter().map(|&j| if j < structural { 0.0 } else { 1.0 }));
    let y = basis_matrix
        .transpose()
        .lu()
        .solve(&cb)
        .ok_or_else(|| Error::SolverFailure("final basis is singular".into()))?;

    let mut x = vec![0.0; structural];
    let mut artificial = vec![0.0; rows];
    let mut most_negative: f64 = 0.0;
    for (k, &j) in tab.basis.iter().enumerate() {
        most_negative = most_negative.min(xb[k]);
        if j < structural {
            x[j] = xb[k].max(0.0);
        } else {
            artificial[j - structural] = xb[k].max(0.0);
        }
    }
    let worst_cost = columns
        .iter()
        .map(|col| -col.iter().map(|&i| y[i]).sum::<f64>())
        .chain(y.iter().map(|yi| 1.0 - yi))
        .fold(0.0, f64::min);
    if most_negative < -FEASIBILITY_TOL || worst_cost < -OPTIMALITY_TOL {
        return Err(Error::SolverFailure(format!(
            "final basis not optimal after {pivots} pivots: primal {most_negative:.3e}, reduced cost {worst_cost:.3e}"
        )));
    }
    let certificate: Vec<f64> = y.iter().copied().collect();
    let phase_one_objective = artificial.iter().sum();
    let max_artificial = artificial.iter().cloned().fold(0.0, f64::max);

    if max_artificial > FEASIBILITY_TOL {
        return Ok(FeasibilityResult {
            feasible: false,
            weights: None,
            gap: Some(max_artificial),
            phase_one_objective,
            certificate,
            pivots,
        });
    }
    let total: f64 = x.iter().sum();
    let weights: Vec<f64> = x.iter().map(|w| w / total).collect();
    let residual = reconstruction_error(table, &strategies, &weights);
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::SolverFailure(format!(
            "weights reproduce the table only to {residual:.3e} after {pivots} pivots"
        )));
    }
    Ok(FeasibilityResult {
        feasible: true,
        weights: Some(weights),
        gap: None,
        phase_one_objective,
        certificate,
        pivots,
    })
}

/// Largest `|sum_k c_k L_k(g | n) - P(g | n)|`.
pub fn reconstruction_error(table: &OutcomeTable, strategies: &[DeterministicStrategy], weights: &[f64]) -> f64 {
    let size = table.size();
    let mut recon = vec![0.0; size * size];
    for (s, &w) in strategies.iter().zip(weights) {
        if w != 0.0 {
            for set in 0..size {
                recon[set * size + s.outcome(set)] += w;
            }
        }
    }
    recon
        .iter()
        .zip(table.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Verdict for one subset of parties.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupVerdict {
    /// Party mask of the subset.
    pub subset: usize,
    pub result: FeasibilityResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupReport {
    pub parties: usize,
    /// Every nonempty strict subset, ascending by mask.
    pub verdicts: Vec<SubgroupVerdict>,
}

impl SubgroupReport {
    pub fn infeasible(&self) -> impl Iterator<Item = &SubgroupVerdict> {
        self.verdicts.iter().filter(|v| !v.result.feasible)
    }

    pub fn all_feasible(&self) -> bool {
        self.infeasible().next().is_none()
    }
}

/// LHV test of every nonempty strict-subset marginal.
pub fn subgroup_scan(table: &OutcomeTable) -> Result<SubgroupReport> {
    subgroup_scan_sizes(table, 1, table.parties() - 1)
}

/// Like [`subgroup_scan`], restricted to subsets with `min..=max` parties.
pub fn subgroup_scan_sizes(table: &OutcomeTable, min: usize, max: usize) -> Result<SubgroupReport> {
    let n = table.parties();
    if n < 2 {
        return invalid("subgroup scan needs at least two parties");
    }
    let full = (1usize << n) - 1;
    let subsets: Vec<usize> = (1..full)
        .filter(|s| (min..=max).contains(&(s.count_ones() as usize)))
        .collect();
    let verdicts = subsets
        .par_iter()
        .map(|&subset| {
            let marginal = marginalize(table, subset, 0)?;
            Ok(SubgroupVerdict {
                subset,
                result: lhv_feasible(&marginal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubgroupReport { parties: n, verdicts })
}
