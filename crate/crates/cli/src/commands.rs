//! Subcommand implementations. Each returns a printable report; file output
//! happens only after every computation succeeded.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use swapbell::bell::herald_experiment;
use swapbell::fock::{compare_with_gaussian, OracleComparison};
use swapbell::optimize::{
    optimize, optimize_settings, sweep_bell_vs_r, sweep_noise, CurvePoint, OperatingPoint, OptimizationProblem,
    SweepPolicy,
};
use swapbell::polytope::{lhv_feasible, subgroup_scan_sizes, FeasibilityResult};
use swapbell::probabilities::build_outcome_table;
use swapbell::{settings_from_reference, NoiseConfig, OutcomeTable, SqueezerBank};

use crate::config::{RunConfig, Search, SweepAxis};
use crate::table::{format_sig, read_outcomes, write_outcomes, write_sweep};
use crate::CliError;

/// Result of evaluating one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub parties: usize,
    pub point: OperatingPoint,
    pub bell: f64,
    pub p_success: f64,
    pub correlators: Vec<f64>,
}

impl Evaluation {
    pub fn report(&self) -> String {
        let p = &self.point;
        let mut s = String::new();
        writeln!(s, "N          {}", self.parties).unwrap();
        writeln!(s, "r          {}", format_sig(p.r)).unwrap();
        writeln!(s, "m0         {}", format_sig(p.m0)).unwrap();
        writeln!(s, "m1         {}", format_sig(p.m1)).unwrap();
        if p.alpha != 0.0 {
            writeln!(s, "alpha      {}", format_sig(p.alpha)).unwrap();
        }
        writeln!(s, "bell       {}", format_sig(self.bell)).unwrap();
        writeln!(s, "p_success  {}", format_sig(self.p_success)).unwrap();
        for (n, c) in self.correlators.iter().enumerate() {
            let bits: String = (0..self.parties).map(|k| if n >> k & 1 == 1 { '1' } else { '0' }).collect();
            writeln!(s, "E[{bits}]{:pad$}{}", "", format_sig(*c), pad = 8usize.saturating_sub(self.parties)).unwrap();
        }
        s
    }
}

fn evaluate_point(problem: &OptimizationProblem, point: OperatingPoint) -> Result<Evaluation, CliError> {
    let out = problem.evaluate(point.r, point.m0, point.m1, point.alpha)?;
    Ok(Evaluation {
        parties: problem.parties,
        point,
        bell: out.bell,
        p_success: out.p_success,
        correlators: out.correlators.values().to_vec(),
    })
}

/// Evaluates the configured point, optimizing whatever is set to `optimize`.
pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation, CliError> {
    let problem = cfg.problem(cfg.parties)?;
    let point = match cfg.search()? {
        Search::Fixed { r, m0, m1 } => OperatingPoint { r, m0, m1, alpha: cfg.alpha },
        Search::Settings { r } => {
            info!("optimizing settings at r = {r}");
            OperatingPoint::from(&optimize_settings(&problem, r, None)?)
        }
        Search::Full => {
            info!("optimizing r and settings for N = {}", cfg.parties);
            OperatingPoint::from(&optimize(&problem)?)
        }
    };
    evaluate_point(&problem, point)
}

/// Outcome table at an evaluated point.
pub fn outcome_table(cfg: &RunConfig, eval: &Evaluation) -> Result<OutcomeTable, CliError> {
    let problem = cfg.problem(eval.parties)?;
    let p = eval.point;
    let plan = problem.plan(p.m0, p.m1, p.alpha)?;
    let bank = SqueezerBank::new(p.r, problem.phases.clone())?;
    let (heralded, effective) = herald_experiment(&bank, &problem.noise, &plan)?;
    Ok(build_outcome_table(&heralded, &effective)?)
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_bell(cfg: &RunConfig, outcomes: Option<&Path>) -> Result<String, CliError> {
    let eval = evaluate(cfg)?;
    if let Some(path) = outcomes {
        let table = outcome_table(cfg, &eval)?;
        write_file(path, |w| write_outcomes(w, &table))?;
    }
    Ok(eval.report())
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<String, CliError> {
    let problem = cfg.problem(cfg.parties)?;
    let result = match cfg.r.value() {
        Some(r) => optimize_settings(&problem, r, None)?,
        None => optimize(&problem)?,
    };
    let eval = evaluate_point(&problem, OperatingPoint::from(&result))?;
    if let Some(path) = &cfg.output {
        let row = CurvePoint {
            value: eval.parties as f64,
            parties: eval.parties,
            r: eval.point.r,
            m0: eval.point.m0,
            m1: eval.point.m1,
            bell: eval.bell,
            p_success: eval.p_success,
            correlators: eval.correlators.clone(),
        };
        write_file(path, |w| write_sweep(w, "N", &[row]))?;
    }
    Ok(eval.report())
}

/// Sweep rows for every configured party count, in order.
pub fn sweep_rows(cfg: &RunConfig) -> Result<(SweepAxis, Vec<CurvePoint>), CliError> {
    let axis = cfg.sweep_axis()?;
    let values = cfg.sweep_values()?;
    let parties = cfg.sweep_parties();
    if parties.is_empty() {
        return Err(CliError::Config("sweep.parties is empty".into()));
    }
    let mut rows = Vec::new();
    for n in parties {
        let problem = cfg.problem(n)?;
        info!("sweeping {} for N = {n} over {} points", axis.name(), values.len());
        let points = match axis {
            SweepAxis::Squeezing => sweep_bell_vs_r(&problem, &values)?,
            SweepAxis::Noise(noise_axis) => {
                let policy = match (cfg.sweep_policy()?, cfg.search()?) {
                    (SweepPolicy::Fixed(_), Search::Fixed { r, m0, m1 }) => {
                        SweepPolicy::Fixed(Some(OperatingPoint { r, m0, m1, alpha: cfg.alpha }))
                    }
                    (policy, _) => policy,
                };
                sweep_noise(&problem, noise_axis, &values, policy)?
            }
        };
        rows.extend(points);
    }
    Ok((axis, rows))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let (axis, rows) = sweep_rows(cfg)?;
    match &cfg.output {
        Some(path) => {
            write_file(path, |w| write_sweep(w, axis.name(), &rows))?;
            Ok(format!("wrote {} rows to {}\n", rows.len(), path.display()))
        }
        None => {
            let mut buf = Vec::new();
            write_sweep(&mut buf, axis.name(), &rows)?;
            Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
        }
    }
}

/// Which subsets `cmd_polytope` tests besides the full table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanRange {
    pub min: usize,
    /// Defaults to `N - 1`.
    pub max: Option<usize>,
}

fn describe(result: &FeasibilityResult) -> String {
    match (result.feasible, result.gap) {
        (true, _) => "LHV-feasible".to_string(),
        (false, Some(gap)) => format!("infeasible (gap {gap:.3e})"),
        (false, None) => "infeasible".to_string(),
    }
}

fn subset_label(subset: usize, parties: usize) -> String {
    let members: Vec<String> = (0..parties).filter(|p| subset >> p & 1 == 1).map(|p| (p + 1).to_string()).collect();
    format!("{{{}}}", members.join(","))
}

pub fn cmd_polytope(cfg: &RunConfig, table_path: Option<&Path>, scan: Option<ScanRange>) -> Result<String, CliError> {
    let mut report = String::new();
    let table = match table_path {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
            read_outcomes(file)?
        }
        None => {
            let eval = evaluate(cfg)?;
            report.push_str(&eval.report());
            outcome_table(cfg, &eval)?
        }
    };
    let n = table.parties();
    let full = lhv_feasible(&table)?;
    writeln!(report, "full table {}: {}", subset_label((1 << n) - 1, n), describe(&full)).unwrap();
    if let Some(range) = scan {
        let max = range.max.unwrap_or(n.saturating_sub(1));
        if n > 1 && max >= range.min.max(1) {
            let scan = subgroup_scan_sizes(&table, range.min.max(1), max.min(n - 1))?;
            for v in &scan.verdicts {
                writeln!(report, "marginal {}: {}", subset_label(v.subset, n), describe(&v.result)).unwrap();
            }
        }
    }
    Ok(report)
}

/// One oracle comparison case.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub label: &'static str,
    pub r: f64,
    pub tolerance: f64,
    pub comparison: OracleComparison,
}

impl OracleCase {
    pub fn passed(&self) -> bool {
        self.comparison.max_deviation() <= self.tolerance && self.comparison.route_mismatch <= 1e-10
    }
}

/// Default settings for the oracle comparison when the config leaves them to the optimizer.
const ORACLE_SETTINGS: (f64, f64) = (0.59, -0.18);
const ORACLE_MIN_CUTOFF: usize = 5;

pub fn oracle_cases(cfg: &RunConfig, r_values: &[f64]) -> Result<Vec<OracleCase>, CliError> {
    let n = cfg.parties;
    if !(2..=3).contains(&n) {
        return Err(CliError::Config(format!("oracle-check supports 2 or 3 parties, got {n}")));
    }
    if r_values.is_empty() {
        return Err(CliError::Config("no squeezing values given".into()));
    }
    let phases = cfg.phases(n)?;
    let (m0, m1) = match (cfg.m0.value(), cfg.m1.value()) {
        (Some(a), Some(b)) => (a, b),
        _ => ORACLE_SETTINGS,
    };
    let plan = settings_from_reference(m0, m1, &phases)?;
    let noisy = NoiseConfig {
        amp_variance: 0.0,
        phase_variance: 0.0,
        ..cfg.noise()?
    };
    let min_cutoff = if n == 2 { ORACLE_MIN_CUTOFF } else { 3 };
    let mut cases = Vec::new();
    for &r in r_values {
        let bank = SqueezerBank::new(r, phases.clone())?;
        for (label, noise, tolerance) in [("ideal", NoiseConfig::noiseless(), 1e-8), ("lossy", noisy, 1e-6)] {
            let comparison = compare_with_gaussian(&bank, &noise, &plan, 1e-11, min_cutoff)?;
            cases.push(OracleCase { label, r, tolerance, comparison });
        }
    }
    Ok(cases)
}

pub fn cmd_oracle_check(cfg: &RunConfig, r_values: &[f64]) -> Result<String, CliError> {
    let cases = oracle_cases(cfg, r_values)?;
    let mut report = String::new();
    writeln!(report, "case   r       cutoff  dP_C/P_C   dE         dP(g|n)    routes     result").unwrap();
    for c in &cases {
        let d = &c.comparison;
        writeln!(
            report,
            "{:<6} {:<7} {:<7} {:<10.3e} {:<10.3e} {:<10.3e} {:<10.3e} {}",
            c.label,
            c.r,
            d.cutoff,
            d.p_success,
            d.correlators,
            d.outcomes,
            d.route_mismatch,
            if c.passed() { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    if cases.iter().all(OracleCase::passed) {
        Ok(report)
    } else {
        Err(CliError::CheckFailed(format!("{report}oracle check failed")))
    }
}
