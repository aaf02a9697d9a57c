//! Maximization of the Bell value over squeezing and displacements, and the
//! one-dimensional sweeps built on it.
//!
//! Search: coarse grid over the parameter box, the best grid points refined
//! by a bounded downhill simplex. Everything is deterministic; the grid is
//! evaluated in parallel but results are ordered by grid index.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::debug;
use rayon::prelude::*;

use crate::bell::{evaluate_experiment, ExperimentOutcome};
use crate::error::{invalid, Error, Result};
use crate::measurement::{settings_from_reference, Displacement, MeasurementPlan};
use crate::network::{SqueezerBank, MAX_PARTIES};
use crate::noise::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Both settings on a common axis with signed magnitudes `(m0, m1)`.
    #[default]
    Collinear,
    /// Adds the angle `alpha` of the second setting relative to the first.
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub parties: usize,
    pub noise: NoiseConfig,
    /// Squeezer phases; the settings follow them by the rotation rule.
    pub phases: Vec<f64>,
    pub r_max: f64,
    pub m_max: f64,
    pub mode: SearchMode,
    /// Points per axis of the seed grid.
    pub grid: usize,
    /// Number of grid points refined by the simplex.
    pub seeds: usize,
    pub max_iterations: usize,
    /// Simplex diameter at which refinement stops.
    pub tolerance: f64,
}

impl OptimizationProblem {
    pub fn new(parties: usize, noise: NoiseConfig) -> Self {
        Self {
            parties,
            noise,
            phases: vec![0.0; parties],
            r_max: 0.5,
            m_max: 1.5,
            mode: SearchMode::Collinear,
            grid: 11,
            seeds: 5,
            max_iterations: 500,
            tolerance: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_PARTIES).contains(&self.parties) {
            return invalid(format!("optimization supports 2..={MAX_PARTIES} parties, got {}", self.parties));
        }
        if self.phases.len() != self.parties {
            return invalid("one squeezer phase per party required");
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0 && self.m_max.is_finite() && self.m_max > 0.0) {
            return invalid("search box bounds must be finite and positive");
        }
        if self.grid < 2 || self.seeds == 0 || self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return invalid("grid >= 2, seeds >= 1, iterations >= 1 and a positive tolerance are required");
        }
        self.noise.validate()
    }

    /// Plan for parameter vector `(m0, m1[, alpha])`.
    pub fn plan(&self, m0: f64, m1: f64, alpha: f64) -> Result<MeasurementPlan> {
        let mut plan = settings_from_reference(m0, m1, &self.phases)?;
        if alpha != 0.0 {
            for (p, pair) in plan.settings.iter_mut().enumerate() {
                let angle = self.phases[0] - self.phases[p];
                pair[1] = Displacement::along_q(m1).rotated(alpha + angle);
            }
        }
        Ok(plan)
    }

    pub fn evaluate(&self, r: f64, m0: f64, m1: f64, alpha: f64) -> Result<ExperimentOutcome> {
        let bank = SqueezerBank::new(r, self.phases.clone())?;
        evaluate_experiment(&bank, &self.noise, &self.plan(m0, m1, alpha)?)
    }
}

/// One objective evaluation: `(r, m0, m1, alpha)` and its Bell value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub params: [f64; 4],
    pub bell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub parties: usize,
    pub r: f64,
    pub m0: f64,
    pub m1: f64,
    /// Relative angle of the second setting (0 in collinear mode).
    pub alpha: f64,
    pub bell: f64,
    pub p_success: f64,
    pub correlators: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// Bounded downhill simplex, minimizing `f`. Returns the visited points.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    step: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> Vec<(Vec<f64>, f64)> {
    let d = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..d {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut visited = Vec::new();
    let eval = |x: Vec<f64>, visited: &mut Vec<(Vec<f64>, f64)>| {
        let v = f(&x);
        visited.push((x.clone(), v));
        (x, v)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push(eval(start.to_vec(), &mut visited));
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] += if x[i] + step[i] <= hi[i] { step[i] } else { -step[i] };
        clamp(&mut x);
        simplex.push(eval(x, &mut visited));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..max_iterations {
        order(&mut simplex);
        let diameter = simplex
            .iter()
            .flat_map(|a| simplex.iter().map(move |b| (a, b)))
            .map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < tolerance {
            break;
        }
        let worst = simplex[d].clone();
        let centroid: Vec<f64> = (0..d).map(|i| simplex[..d].iter().map(|v| v.0[i]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| {
            let mut x: Vec<f64> = (0..d).map(|i| centroid[i] + t * (centroid[i] - worst.0[i])).collect();
            clamp(&mut x);
            x
        };
        let reflected = eval(along(1.0), &mut visited);
        if reflected.1 < simplex[0].1 {
            let expanded = eval(along(2.0), &mut visited);
            simplex[d] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[d - 1].1 {
            simplex[d] = reflected;
        } else {
            let contracted = if reflected.1 < worst.1 {
                eval(along(0.5), &mut visited)
            } else {
                eval(along(-0.5), &mut visited)
            };
            if contracted.1 < worst.1.min(reflected.1) {
                simplex[d] = contracted;
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..d).map(|i| best[i] + 0.5 * (v.0[i] - best[i])).collect();
                    *v = eval(x, &mut visited);
                }
            }
        }
    }
    visited
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid + simplex maximization of `objective` over the box `lo..hi`.
/// Returns every evaluation in deterministic order.
///
/// With `diverse` (points `(r, m0, m1)`) two seed sets are refined: the
/// best point per squeezing value, and the best points with pairwise
/// distinct squeezing and distinct canonical settings. The first keeps the
/// flat `r = 0` slice from taking every seed, the second keeps symmetric
/// copies of one setting pair from doing the same.
fn maximize(
    objective: &(dyn Fn(&[f64]) -> Option<f64> + Sync),
    lo: &[f64],
    hi: &[f64],
    grid_points: &[Vec<f64>],
    extra_seeds: &[Vec<f64>],
    seeds: usize,
    diverse: bool,
    max_iterations: usize,
    tolerance: f64,
    step: &[f64],
) -> Vec<(Vec<f64>, f64)> {
    let mut visited: Vec<(Vec<f64>, f64)> = grid_points
        .par_iter()
        .chain(extra_seeds.par_iter())
        .map(|x| (x.clone(), objective(x).unwrap_or(f64::NEG_INFINITY)))
        .collect();
    let mut ranked: Vec<usize> = (0..visited.len()).filter(|&i| visited[i].1.is_finite()).collect();
    ranked.sort_by(|&a, &b| visited[b].1.total_cmp(&visited[a].1).then(a.cmp(&b)));
    // extra seeds are always refined
    let mut chosen: Vec<usize> = (grid_points.len()..visited.len()).filter(|i| visited[*i].1.is_finite()).collect();
    let grid_ranked: Vec<usize> = ranked.into_iter().filter(|i| *i < grid_points.len()).collect();
    if diverse {
        // best per squeezing value, then best with squeezing and canonical
        // settings both unused; the two rules reach different basins
        let key = |i: usize| (visited[i].0[0], canonicalize(visited[i].0[1], visited[i].0[2], 0.0));
        let mut used_r: Vec<f64> = Vec::new();
        for &i in &grid_ranked {
            if used_r.len() == seeds {
                break;
            }
            if !used_r.contains(&key(i).0) {
                used_r.push(key(i).0);
                chosen.push(i);
            }
        }
        let mut used: Vec<(f64, (f64, f64, f64))> = Vec::new();
        for &i in &grid_ranked {
            if used.len() == seeds {
                break;
            }
            let k = key(i);
            if !used.iter().any(|u| u.0 == k.0 || u.1 == k.1) {
                used.push(k);
                if !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
        }
    } else {
        chosen.extend(grid_ranked.into_iter().take(seeds));
    }
    let minus = |x: &[f64]| objective(x).map(|v| -v).unwrap_or(f64::INFINITY);
    let refined: Vec<Vec<(Vec<f64>, f64)>> = chosen
        .par_iter()
        .map(|&i| nelder_mead(&minus, &visited[i].0, step, lo, hi, max_iterations, tolerance))
        .collect();
    for run in refined {
        visited.extend(run.into_iter().map(|(x, v)| (x, -v)));
    }
    visited
}

fn best_of(visited: &[(Vec<f64>, f64)]) -> Option<&(Vec<f64>, f64)> {
    visited
        .iter()
        .filter(|v| v.1.is_finite())
        .fold(None, |best: Option<&(Vec<f64>, f64)>, v| match best {
            Some(b) if b.1 >= v.1 => Some(b),
            _ => Some(v),
        })
}

/// Maps `(m0, m1, alpha)` onto the representative with `m0 >= 0` and
/// `|m0| >= |m1|`. Exchanging the two settings and a joint rotation by pi
/// leave the Bell value unchanged.
pub fn canonicalize(m0: f64, m1: f64, alpha: f64) -> (f64, f64, f64) {
    let (mut a, mut b, mut t) = (m0, m1, alpha);
    if b.abs() > a.abs() {
        // X0 = a e_0, X1 = b R(t) e_0: after the exchange and a rotation by
        // -t the first setting lies on the reference axis again
        (a, b, t) = (b, a, -t);
    }
    if a < 0.0 {
        a = -a;
        b = -b;
    }
    t = (t + PI).rem_euclid(2.0 * PI) - PI;
    if t.abs() < 1e-15 {
        t = 0.0;
    }
    (a, b, t)
}

fn finish(problem: &OptimizationProblem, visited: Vec<(Vec<f64>, f64)>, r_fixed: Option<f64>) -> Result<OptimizationResult> {
    let full = |x: &[f64]| -> [f64; 4] {
        match r_fixed {
            Some(r) => [r, x[0], x[1], x.get(2).copied().unwrap_or(0.0)],
            None => [x[0], x[1], x[2], x.get(3).copied().unwrap_or(0.0)],
        }
    };
    let Some(best) = best_of(&visited) else {
        return Err(Error::OptimizationFailed(format!(
            "no admissible point among {} evaluations",
            visited.len()
        )));
    };
    let [r, m0, m1, alpha] = full(&best.0);
    let (m0, m1, alpha) = canonicalize(m0, m1, alpha);
    let outcome = problem.evaluate(r, m0, m1, alpha)?;
    let trace: Vec<TracePoint> = visited
        .iter()
        .filter(|v| v.1.is_finite())
        .map(|v| TracePoint {
            params: full(&v.0),
            bell: v.1,
        })
        .collect();
    let bell = trace.iter().map(|t| t.bell).fold(outcome.bell, f64::max);
    if bell > outcome.bell + 1e-10 {
        return Err(Error::InternalConsistency(format!(
            "canonical optimum re-evaluates to {} but {} was seen",
            outcome.bell, bell
        )));
    }
    debug!("N = {}: r = {r:.4}, m = ({m0:.4}, {m1:.4}), bell = {:.6}", problem.parties, outcome.bell);
    Ok(OptimizationResult {
        parties: problem.parties,
        r,
        m0,
        m1,
        alpha,
        bell: outcome.bell,
        p_success: outcome.p_success,
        correlators: outcome.correlators.values().to_vec(),
        trace,
    })
}

/// Multi-start maximization over `(r, m0, m1)` (collinear) or
/// `(r, m0, m1, alpha)` (general, seeded from the collinear optimum).
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let (g, rm, mm) = (problem.grid, problem.r_max, problem.m_max);
    let lo = [0.0, -mm, -mm];
    let hi = [rm, mm, mm];
    let objective = |x: &[f64]| problem.evaluate(x[0], x[1], x[2], 0.0).ok().map(|o| o.bell);
    let rs = linspace(0.0, rm, g);
    let ms = linspace(-mm, mm, g);
    let mut grid = Vec::with_capacity(g * g * g);
    for &r in &rs {
        for &a in &ms {
            for &b in &ms {
                grid.push(vec![r, a, b]);
            }
        }
    }
    let step = [rm / (g - 1) as f64, 2.0 * mm / (g - 1) as f64, 2.0 * mm / (g - 1) as f64];
    let visited = maximize(
        &objective,
        &lo,
        &hi,
        &grid,
        &[],
        problem.seeds,
        true,
        problem.max_iterations,
        problem.tolerance,
        &step,
    );
    let collinear = finish(problem, visited, None)?;
    if problem.mode == SearchMode::Collinear {
        return Ok(collinear);
    }

    let lo = [0.0, -mm, -mm, -PI];
    let hi = [rm, mm, mm, PI];
    let objective = |x: &[f64]| problem.evaluate(x[0], x[1], x[2], x[3]).ok().map(|o| o.bell);
    let seeds: Vec<Vec<f64>> = [0.0, PI / 4.0, -PI / 4.0, PI / 2.0]
        .iter()
        .map(|&a| vec![collinear.r, collinear.m0, collinear.m1, a])
        .collect();
    let step = [step[0] / 2.0, step[1] / 2.0, step[2] / 2.0, PI / 8.0];
    let mut visited: Vec<(Vec<f64>, f64)> = collinear
        .trace
        .iter()
        .map(|t| (t.params.to_vec(), t.bell))
        .collect();
    visited.extend(maximize(
        &objective,
        &lo,
        &hi,
        &[],
        &seeds,
        0,
        false,
        problem.max_iterations,
        problem.tolerance,
        &step,
    ));
    finish(problem, visited, None)
}

/// Best `(m0, m1)` at fixed squeezing `r`, collinear settings.
/// `warm` adds a refined starting point to the seed grid.
pub fn optimize_settings(problem: &OptimizationProblem, r: f64, warm: Option<(f64, f64)>) -> Result<OptimizationResult> {
    problem.validate()?;
    if !(0.0..=problem.r_max).contains(&r) {
        return invalid(format!("r = {r} outside [0, {}]", problem.r_max));
    }
    let mm = problem.m_max;
    let g = problem.grid;
    let ms = linspace(-mm, mm, g);
    let mut grid = Vec::with_capacity(g * g);
    for &a in &ms {
        for &b in &ms {
            grid.push(vec![a, b]);
        }
    }
    let extra: Vec<Vec<f64>> = warm.map(|(a, b)| vec![a, b]).into_iter().collect();
    let objective = |x: &[f64]| problem.evaluate(r, x[0], x[1], 0.0).ok().map(|o| o.bell);
    let step = [2.0 * mm / (g - 1) as f64; 2];
    let seeds = if warm.is_some() { 2 } else { problem.seeds };
    let visited = maximize(
        &objective,
        &[-mm, -mm],
        &[mm, mm],
        &grid,
        &extra,
        seeds,
        false,
        problem.max_iterations,
        problem.tolerance,
        &step,
    );
    finish(problem, visited, Some(r))
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub value: f64,
    pub parties: usize,
    pub r: f64,
    pub m0: f64,
    pub m1: f64,
    pub bell: f64,
    pub p_success: f64,
    pub correlators: Vec<f64>,
}

/// Bell value against squeezing, optimizing `(m0, m1)` at every `r`
/// (warm-started from the previous grid point).
pub fn sweep_bell_vs_r(problem: &OptimizationProblem, r_grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if r_grid.is_empty() {
        return invalid("empty r grid");
    }
    let mut warm = None;
    let mut out = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let res = optimize_settings(problem, r, warm)?;
        warm = Some((res.m0, res.m1));
        out.push(CurvePoint {
            value: r,
            parties: problem.parties,
            r,
            m0: res.m0,
            m1: res.m1,
            bell: res.bell,
            p_success: res.p_success,
            correlators: res.correlators,
        });
    }
    Ok(out)
}

/// Noise parameter varied by [`sweep_noise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseAxis {
    DarkCountSwap,
    DarkCountParty,
    EtaParty,
    EtaSwap,
    SigmaAmplitude,
    SigmaPhase,
}

impl NoiseAxis {
    pub const ALL: [NoiseAxis; 6] = [
        NoiseAxis::DarkCountSwap,
        NoiseAxis::DarkCountParty,
        NoiseAxis::EtaParty,
        NoiseAxis::EtaSwap,
        NoiseAxis::SigmaAmplitude,
        NoiseAxis::SigmaPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseAxis::DarkCountSwap => "p_d_S",
            NoiseAxis::DarkCountParty => "p_d_P",
            NoiseAxis::EtaParty => "eta_P",
            NoiseAxis::EtaSwap => "eta_S",
            NoiseAxis::SigmaAmplitude => "sigma_A",
            NoiseAxis::SigmaPhase => "sigma_theta",
        }
    }

    /// Copy of `noise` with this parameter set to `value` (standard
    /// deviations for the sigma axes).
    pub fn apply(self, noise: &NoiseConfig, value: f64) -> Result<NoiseConfig> {
        let mut n = *noise;
        match self {
            NoiseAxis::DarkCountSwap => n.p_dark_s = value,
            NoiseAxis::DarkCountParty => n.p_dark_p = value,
            NoiseAxis::EtaParty => n.eta_p = value,
            NoiseAxis::EtaSwap => n.eta_s = value,
            NoiseAxis::SigmaAmplitude | NoiseAxis::SigmaPhase if value < 0.0 => {
                return invalid(format!("{} must be non-negative", self.name()))
            }
            NoiseAxis::SigmaAmplitude => n.amp_variance = value * value,
            NoiseAxis::SigmaPhase => n.phase_variance = value * value,
        }
        n.validate()?;
        Ok(n)
    }
}

impl fmt::Display for NoiseAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseAxis::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown noise axis '{s}'")))
    }
}

/// Operating point held fixed along a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub r: f64,
    pub m0: f64,
    pub m1: f64,
    pub alpha: f64,
}

impl From<&OptimizationResult> for OperatingPoint {
    fn from(r: &OptimizationResult) -> Self {
        Self {
            r: r.r,
            m0: r.m0,
            m1: r.m1,
            alpha: r.alpha,
        }
    }
}

/// How the operating point is chosen along a noise sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPolicy {
    /// Optimize once at the problem's own noise and keep that point.
    Fixed(Option<OperatingPoint>),
    /// Full optimization at every grid value.
    Reoptimize,
}

/// Bell value and heralding probability along one noise axis.
pub fn sweep_noise(
    problem: &OptimizationProblem,
    axis: NoiseAxis,
    grid: &[f64],
    policy: SweepPolicy,
) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return invalid("empty sweep grid");
    }
    problem.validate()?;
    let fixed = match policy {
        SweepPolicy::Fixed(Some(p)) => Some(p),
        SweepPolicy::Fixed(None) => Some(OperatingPoint::from(&optimize(problem)?)),
        SweepPolicy::Reoptimize => None,
    };
    let problems: Vec<OptimizationProblem> = grid
        .iter()
        .map(|&v| {
            Ok(OptimizationProblem {
                noise: axis.apply(&problem.noise, v)?,
                ..problem.clone()
            })
        })
        .collect::<Result<_>>()?;
    let point = |p: &OptimizationProblem, value: f64| -> Result<CurvePoint> {
        let (op, outcome) = match fixed {
            Some(op) => (op, p.evaluate(op.r, op.m0, op.m1, op.alpha)?),
            None => {
                let res = optimize(p)?;
                let op = OperatingPoint::from(&res);
                (op, p.evaluate(op.r, op.m0, op.m1, op.alpha)?)
            }
        };
        Ok(CurvePoint {
            value,
            parties: p.parties,
            r: op.r,
            m0: op.m0,
            m1: op.m1,
            bell: outcome.bell,
            p_success: outcome.p_success,
            correlators: outcome.correlators.values().to_vec(),
        })
    };
    if fixed.is_some() {
        problems.par_iter().zip(grid.par_iter()).map(|(p, &v)| point(p, v)).collect()
    } else {
        problems.iter().zip(grid).map(|(p, &v)| point(p, v)).collect()
    }
}

/// Value of `axis` in `[lo, hi]` where the Bell value crosses `level`,
/// located by bisection to `tol`. The Bell value minus `level` must change
/// sign over the bracket.
pub fn bell_crossing(
    problem: &OptimizationProblem,
    axis: NoiseAxis,
    lo: f64,
    hi: f64,
    level: f64,
    policy: SweepPolicy,
    tol: f64,
) -> Result<f64> {
    let policy = match policy {
        SweepPolicy::Fixed(None) => SweepPolicy::Fixed(Some(OperatingPoint::from(&optimize(problem)?))),
        other => other,
    };
    let at = |v: f64| -> Result<f64> { Ok(sweep_noise(problem, axis, &[v], policy)?[0].bell - level) };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (at(a)?, at(b)?);
    if fa * fb > 0.0 {
        return invalid(format!(
            "no crossing of {level} for {axis} in [{lo}, {hi}] (offsets {fa:.4e}, {fb:.4e})"
        ));
    }
    let sa = fa.signum();
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if at(m)?.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
