//! Truncated Fock-space reference implementation for two or three parties.
//!
//! States are kept as mixtures of unnormalized pure branches, each a sparse
//! map from occupation numbers to amplitudes; loss splits a branch into its
//! Kraus branches. After heralding, the party modes are summarized by a
//! dense density matrix over `(cutoff + 1)^N` number states.
//!
//! Mode order: party modes `0..N`, then swap modes `N..2N`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bell::{bell_value, evaluate_experiment, herald_experiment, CorrelatorTable};
use crate::error::{invalid, Error, Result};
use crate::measurement::MeasurementPlan;
use crate::network::{interferometer_unitary, SqueezerBank};
use crate::noise::NoiseConfig;
use crate::probabilities::{build_outcome_table, OutcomeTable};

const PSD_FLOOR: f64 = 1e-10;
const MAX_ORACLE_PARTIES: usize = 3;

type Ket = BTreeMap<Vec<u8>, Complex64>;

/// Mixture of unnormalized pure branches over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    modes: usize,
    cutoff: usize,
    branches: Vec<Ket>,
}

impl FockState {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().flat_map(|b| b.values()).map(|a| a.norm_sqr()).sum()
    }

    /// Mean photon number of `mode`.
    pub fn mean_photons(&self, mode: usize) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| b.iter())
            .map(|(n, a)| n[mode] as f64 * a.norm_sqr())
            .sum::<f64>()
            / self.trace()
    }

    /// Reduced density matrix of one mode.
    pub fn reduced(&self, mode: usize) -> DMatrix<Complex64> {
        let d = self.cutoff + 1;
        let mut rho = DMatrix::zeros(d, d);
        for b in &self.branches {
            // group by the occupation of the other modes
            let mut groups: BTreeMap<Vec<u8>, Vec<(usize, Complex64)>> = BTreeMap::new();
            for (n, a) in b {
                let mut rest = n.clone();
                rest.remove(mode);
                groups.entry(rest).or_default().push((n[mode] as usize, *a));
            }
            for entries in groups.values() {
                for &(i, ai) in entries {
                    for &(j, aj) in entries {
                        rho[(i, j)] += ai * aj.conj();
                    }
                }
            }
        }
        rho
    }
}

/// Truncation error of one squeezer pair: `tanh(r)^{2 (cutoff + 1)}`.
pub fn truncation_bound(r: f64, cutoff: usize) -> f64 {
    r.tanh().powi(2 * (cutoff as i32 + 1))
}

/// Smallest cutoff whose truncation error over `pairs` squeezers is below
/// `tolerance`.
pub fn required_cutoff(r: f64, pairs: usize, tolerance: f64) -> usize {
    (3..).find(|&c| pairs as f64 * truncation_bound(r, c) <= tolerance).unwrap_or(3)
}

/// Normalized two-mode squeezed vacuum truncated at `cutoff` photons per
/// mode, with its truncation bound. Amplitudes `(tanh r e^{-i phi})^n`
/// match the covariance-matrix phase convention.
pub fn tmsv_fock(r: f64, phi: f64, cutoff: usize) -> Result<(FockState, f64)> {
    if cutoff < 3 {
        return invalid(format!("cutoff must be at least 3, got {cutoff}"));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return invalid(format!("squeezing must be finite and non-negative, got {r}"));
    }
    let lambda = Complex64::from_polar(r.tanh(), -phi);
    let mut ket = Ket::new();
    let mut amp = Complex64::new(1.0, 0.0);
    for n in 0..=cutoff {
        ket.insert(vec![n as u8, n as u8], amp);
        amp *= lambda;
    }
    let norm = ket.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in ket.values_mut() {
        *a /= norm;
    }
    Ok((
        FockState {
            modes: 2,
            cutoff,
            branches: vec![ket],
        },
        truncation_bound(r, cutoff),
    ))
}

/// Squeezer network in party-then-swap mode order.
pub fn network_fock(bank: &SqueezerBank, cutoff: usize) -> Result<FockState> {
    let n = bank.parties();
    if n > MAX_ORACLE_PARTIES {
        return invalid(format!("Fock reference supports at most {MAX_ORACLE_PARTIES} parties"));
    }
    let pairs: Vec<Ket> = bank
        .phases
        .iter()
        .map(|&phi| tmsv_fock(bank.r, phi, cutoff).map(|(s, _)| s.branches[0].clone()))
        .collect::<Result<_>>()?;
    let mut ket = Ket::new();
    ket.insert(vec![0u8; 2 * n], Complex64::new(1.0, 0.0));
    for (k, pair) in pairs.iter().enumerate() {
        let mut next = Ket::new();
        for (occ, a) in &ket {
            for (pn, b) in pair {
                let mut o = occ.clone();
                o[k] = pn[0];
                o[n + k] = pn[1];
                next.insert(o, a * b);
            }
        }
        ket = next;
    }
    Ok(FockState {
        modes: 2 * n,
        cutoff,
        branches: vec![ket],
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Pure-loss channel of transmission `eta` on `mode`, via the Kraus
/// operators `A_k |n> = sqrt(C(n,k) eta^{n-k} (1-eta)^k) |n-k>`.
pub fn apply_loss_fock(state: &FockState, eta: f64, mode: usize) -> Result<FockState> {
    if !(0.0..=1.0).contains(&eta) {
        return invalid(format!("transmission must lie in [0, 1], got {eta}"));
    }
    if mode >= state.modes {
        return invalid(format!("mode {mode} out of range"));
    }
    if eta == 1.0 {
        return Ok(state.clone());
    }
    let mut branches = Vec::new();
    for b in &state.branches {
        let max_n = b.keys().map(|n| n[mode] as usize).max().unwrap_or(0);
        for k in 0..=max_n {
            let mut out = Ket::new();
            for (n, a) in b {
                let m = n[mode] as usize;
                if m < k {
                    continue;
                }
                let amp = (binomial(m, k) * eta.powi((m - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
                if amp == 0.0 {
                    continue;
                }
                let mut o = n.clone();
                o[mode] = (m - k) as u8;
                *out.entry(o).or_insert(Complex64::new(0.0, 0.0)) += a * amp;
            }
            if !out.is_empty() {
                branches.push(out);
            }
        }
    }
    Ok(FockState {
        modes: state.modes,
        cutoff: state.cutoff,
        branches,
    })
}

/// Output of `U` acting on the number state `occupation` of its ports:
/// `a_k^dag -> sum_j U_jk a_j^dag`.
fn bs_output(occupation: &[u8], u: &DMatrix<Complex64>) -> Vec<(Vec<u8>, Complex64)> {
    let m = u.nrows();
    // polynomial in creation operators: exponents -> coefficient
    let mut poly: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
    poly.insert(vec![0u8; m], Complex64::new(1.0, 0.0));
    for (k, &nk) in occupation.iter().enumerate() {
        for _ in 0..nk {
            let mut next = BTreeMap::new();
            for (exp, c) in &poly {
                for j in 0..m {
                    let mut e = exp.clone();
                    e[j] += 1;
                    *next.entry(e).or_insert(Complex64::new(0.0, 0.0)) += c * u[(j, k)];
                }
            }
            poly = next;
        }
    }
    let norm_in: f64 = occupation.iter().map(|&n| factorial(n as usize)).product::<f64>().sqrt();
    poly.into_iter()
        .map(|(e, c)| {
            let norm_out: f64 = e.iter().map(|&n| factorial(n as usize)).product::<f64>().sqrt();
            (e, c * norm_out / norm_in)
        })
        .collect()
}

/// Passive interferometer `U` on `modes` (port `k` of `U` is `modes[k]`).
pub fn apply_bs_fock(state: &FockState, u: &DMatrix<Complex64>, modes: &[usize]) -> Result<FockState> {
    if u.nrows() != modes.len() || !u.is_square() || modes.iter().any(|&m| m >= state.modes) {
        return invalid("interferometer does not match the selected modes");
    }
    let mut cache: BTreeMap<Vec<u8>, Vec<(Vec<u8>, Complex64)>> = BTreeMap::new();
    let mut branches = Vec::with_capacity(state.branches.len());
    for b in &state.branches {
        let mut out = Ket::new();
        for (n, a) in b {
            let ports: Vec<u8> = modes.iter().map(|&m| n[m]).collect();
            let outputs = cache.entry(ports).or_insert_with_key(|p| bs_output(p, u));
            for (e, c) in outputs.iter() {
                let mut o = n.clone();
                for (k, &m) in modes.iter().enumerate() {
                    o[m] = e[k];
                }
                *out.entry(o).or_insert(Complex64::new(0.0, 0.0)) += a * c;
            }
        }
        branches.push(out);
    }
    Ok(FockState {
        modes: state.modes,
        cutoff: state.cutoff,
        branches,
    })
}

/// Unnormalized conditional state of the party modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockConditional {
    pub parties: usize,
    pub cutoff: usize,
    /// Density matrix over party number states, index `sum_p n_p (cutoff+1)^p`.
    pub rho: DMatrix<Complex64>,
    pub p_success: f64,
    /// Efficiency of the party detectors, applied inside the measurement
    /// operators.
    pub detector_efficiency: f64,
}

impl FockConditional {
    fn dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn normalized(&self) -> DMatrix<Complex64> {
        &self.rho / Complex64::new(self.p_success, 0.0)
    }

    /// Smallest eigenvalue of the normalized state.
    pub fn min_eigenvalue(&self) -> f64 {
        self.normalized().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Pure loss of transmission `eta` on party `party`, applied to the
    /// conditional state (it commutes with the heralding).
    pub fn apply_loss(&self, eta: f64, party: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return invalid(format!("transmission must lie in [0, 1], got {eta}"));
        }
        if party >= self.parties {
            return invalid(format!("party {party} out of range"));
        }
        if eta == 1.0 {
            return Ok(self.clone());
        }
        let d = self.dim();
        let stride = d.pow(party as u32);
        let digit = |i: usize| i / stride % d;
        let kraus = |m: usize, k: usize| (binomial(m, k) * eta.powi((m - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
        let dim = self.rho.nrows();
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let mi = digit(i);
            for j in 0..dim {
                let r = self.rho[(i, j)];
                if r == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mj = digit(j);
                for k in 0..=mi.min(mj) {
                    out[(i - k * stride, j - k * stride)] += r * kraus(mi, k) * kraus(mj, k);
                }
            }
        }
        Ok(Self { rho: out, ..self.clone() })
    }

    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -PSD_FLOOR {
            return Err(Error::InternalConsistency(format!("conditional state has eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// `tr(rho (O_1 x ... x O_N)) / P(C)` for single-mode operators `ops`.
    fn expect_product(&self, ops: &[DMatrix<Complex64>]) -> f64 {
        let d = self.dim();
        let n = self.parties;
        let total = d.pow(n as u32);
        let digits = |mut i: usize| {
            let mut v = [0usize; MAX_ORACLE_PARTIES];
            for slot in v.iter_mut().take(n) {
                *slot = i % d;
                i /= d;
            }
            v
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..total {
            let di = digits(i);
            for j in 0..total {
                let r = self.rho[(i, j)];
                if r == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let dj = digits(j);
                let mut w = r;
                for p in 0..n {
                    w *= ops[p][(dj[p], di[p])];
                }
                acc += w;
            }
        }
        acc.re / self.p_success
    }
}

fn check_conditioning_inputs(state: &FockState, p_dark: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&p_dark) {
        return invalid(format!("dark-count probability must lie in [0, 1), got {p_dark}"));
    }
    if state.modes % 2 != 0 || state.modes < 4 {
        return invalid("state must hold party and swap modes in equal number");
    }
    Ok(state.modes / 2)
}

fn party_index(occ: &[u8], parties: usize, d: usize) -> usize {
    occ[..parties].iter().rev().fold(0usize, |acc, &n| acc * d + n as usize)
}

fn finish_conditional(parties: usize, cutoff: usize, rho: DMatrix<Complex64>) -> Result<FockConditional> {
    let p_success = rho.trace().re;
    if !(p_success > 0.0) {
        return Err(Error::HeraldImpossible { p_success });
    }
    let out = FockConditional {
        parties,
        cutoff,
        rho,
        p_success,
        detector_efficiency: 1.0,
    };
    out.check_psd()?;
    Ok(out)
}

/// Heralds on `state` *before* the interferometer. Only the amplitude of
/// the output `(0, ..., 0, T)` is needed: a swap-mode number state `n`
/// reaches it with amplitude `prod_k U_{N,k}^{n_k} sqrt(T! / prod_k n_k!)`.
/// Conditional state:
/// `(1-p)^{N-1} [sum_T |phi_T><phi_T| - (1-p) |phi_0><phi_0|]`.
pub fn herald_fock(state: &FockState, p_dark: f64) -> Result<FockConditional> {
    let n = check_conditioning_inputs(state, p_dark)?;
    let u = interferometer_unitary(n)?;
    let last = n - 1;
    let d = state.cutoff + 1;
    let dim = d.pow(n as u32);
    let mut rho = DMatrix::zeros(dim, dim);
    for b in &state.branches {
        let mut phi: BTreeMap<usize, DVector<Complex64>> = BTreeMap::new();
        for (occ, a) in b {
            let swap = &occ[n..];
            let t: usize = swap.iter().map(|&x| x as usize).sum();
            let mut amp = Complex64::new(factorial(t).sqrt(), 0.0);
            for (k, &nk) in swap.iter().enumerate() {
                amp *= u[(last, k)].powu(nk as u32) / factorial(nk as usize).sqrt();
            }
            let v = phi.entry(t).or_insert_with(|| DVector::zeros(dim));
            v[party_index(occ, n, d)] += a * amp;
        }
        for (&t, v) in &phi {
            let w = if t == 0 { p_dark } else { 1.0 };
            rho += v * v.adjoint() * Complex64::new(w, 0.0);
        }
    }
    rho *= Complex64::new((1.0 - p_dark).powi(n as i32 - 1), 0.0);
    finish_conditional(n, state.cutoff, rho)
}

/// Heralds on `state` *after* the interferometer by resolving every
/// swap-mode number pattern `m` and weighting it with the probability of
/// the heralding pattern given `m`: `(1-p)^{N-1}` if all but the last port
/// are empty, times `1 - (1-p)` or `1` for an empty or occupied last port.
pub fn herald_fock_resolved(state: &FockState, p_dark: f64) -> Result<FockConditional> {
    let n = check_conditioning_inputs(state, p_dark)?;
    let d = state.cutoff + 1;
    let dim = d.pow(n as u32);
    let mut rho = DMatrix::zeros(dim, dim);
    for b in &state.branches {
        let mut phi: BTreeMap<Vec<u8>, DVector<Complex64>> = BTreeMap::new();
        for (occ, a) in b {
            let swap = occ[n..].to_vec();
            if swap[..n - 1].iter().any(|&x| x > 0) {
                continue;
            }
            let v = phi.entry(swap).or_insert_with(|| DVector::zeros(dim));
            v[party_index(occ, n, d)] += a;
        }
        for (m, v) in &phi {
            let given = (1.0 - p_dark).powi(n as i32 - 1) * if m[n - 1] == 0 { p_dark } else { 1.0 };
            rho += v * v.adjoint() * Complex64::new(given, 0.0);
        }
    }
    finish_conditional(n, state.cutoff, rho)
}

/// Coherent state `|alpha>` truncated at `cutoff` (not renormalized).
pub fn coherent_vector(alpha: Complex64, cutoff: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(cutoff + 1);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 0..=cutoff {
        v[k] = c;
        c *= alpha / ((k + 1) as f64).sqrt();
    }
    v
}

/// `D(beta) (1-eta)^{a^dag a} D(beta)^dag`, the no-light element of a
/// detector of efficiency `eta` behind the displacement, in the normally
/// ordered form `e^{-eta |beta|^2} e^{eta beta a^dag} (1-eta)^{a^dag a} e^{eta beta^* a}`.
/// Every factor is triangular, so the truncated matrix is exact.
pub fn lossy_vacuum_element(beta: Complex64, eta: f64, cutoff: usize) -> DMatrix<Complex64> {
    let d = cutoff + 1;
    let c = beta * eta;
    let mut raise = DMatrix::zeros(d, d);
    for m in 0..d {
        for i in 0..=m {
            let k = m - i;
            raise[(m, i)] = c.powu(k as u32) * (factorial(m) / factorial(i)).sqrt() / factorial(k);
        }
    }
    let diag = DMatrix::from_diagonal(&DVector::from_fn(d, |k, _| Complex64::new((1.0 - eta).powi(k as i32), 0.0)));
    &raise * diag * raise.adjoint() * Complex64::new((-eta * beta.norm_sqr()).exp(), 0.0)
}

/// No-click element `(1 - p_d) D(-X) (1-eta_d)^{a^dag a} D(-X)^dag` of
/// `party` under `setting`; `|-X><-X|` for an ideal detector.
fn no_click(plan: &MeasurementPlan, party: usize, setting: usize, cutoff: usize, eta_d: f64) -> DMatrix<Complex64> {
    let x = plan.displacement(party, setting);
    let beta = -Complex64::new(x.x, x.y);
    let e = if eta_d == 1.0 {
        let v = coherent_vector(beta, cutoff);
        &v * v.adjoint()
    } else {
        lossy_vacuum_element(beta, eta_d, cutoff)
    };
    e * Complex64::new(1.0 - plan.p_dark, 0.0)
}

fn check_plan(cond: &FockConditional, plan: &MeasurementPlan) -> Result<()> {
    if plan.parties() != cond.parties {
        return invalid("party count mismatch");
    }
    if plan.amp_variance != 0.0 || plan.phase_variance != 0.0 {
        return invalid("the Fock reference models noiseless displacements only");
    }
    Ok(())
}

/// `<prod_p (I - 2 (1-p_d) |-X_p><-X_p|)>` for setting mask `settings`.
pub fn correlator_fock(cond: &FockConditional, plan: &MeasurementPlan, settings: usize) -> Result<f64> {
    check_plan(cond, plan)?;
    let d = cond.dim();
    let ops: Vec<DMatrix<Complex64>> = (0..cond.parties)
        .map(|p| {
            DMatrix::identity(d, d) - no_click(plan, p, settings >> p & 1, cond.cutoff, cond.detector_efficiency) * Complex64::new(2.0, 0.0)
        })
        .collect();
    Ok(cond.expect_product(&ops))
}

/// `P(g | n)` with click element `I - (1-p_d)|-X><-X|`.
pub fn outcome_probability_fock(cond: &FockConditional, plan: &MeasurementPlan, outcome: usize, settings: usize) -> Result<f64> {
    check_plan(cond, plan)?;
    let d = cond.dim();
    let ops: Vec<DMatrix<Complex64>> = (0..cond.parties)
        .map(|p| {
            let e0 = no_click(plan, p, settings >> p & 1, cond.cutoff, cond.detector_efficiency);
            if outcome >> p & 1 == 1 {
                DMatrix::identity(d, d) - e0
            } else {
                e0
            }
        })
        .collect();
    Ok(cond.expect_product(&ops))
}

/// Everything the reference computes at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub p_success: f64,
    pub correlators: Vec<f64>,
    pub bell: f64,
    pub outcomes: OutcomeTable,
    /// Largest truncation error over the squeezer pairs.
    pub truncation: f64,
    /// Largest deviation between the two heralding routes.
    pub route_mismatch: f64,
}

/// Full reference pipeline: squeezers, swap-channel loss, interferometer,
/// heralding, party-channel loss, party measurements. The observable noise
/// in `noise` must be zero. Detector efficiency is modeled where it occurs:
/// a loss after the interferometer on the swap side, and inside the
/// measurement operators on the party side.
pub fn run_oracle(
    bank: &SqueezerBank,
    noise: &NoiseConfig,
    plan: &MeasurementPlan,
    cutoff: usize,
    tolerance: f64,
) -> Result<OracleResult> {
    noise.validate()?;
    if noise.amp_variance != 0.0 || noise.phase_variance != 0.0 {
        return invalid("the Fock reference models noiseless displacements only");
    }
    let n = bank.parties();
    if n > MAX_ORACLE_PARTIES {
        return invalid(format!("Fock reference supports at most {MAX_ORACLE_PARTIES} parties"));
    }
    if plan.parties() != n {
        return invalid("party count mismatch");
    }
    let bound = n as f64 * truncation_bound(bank.r, cutoff);
    if bound > tolerance {
        return Err(Error::Precision { bound, tolerance });
    }
    let mut state = network_fock(bank, cutoff)?;
    for p in 0..n {
        state = apply_loss_fock(&state, noise.eta_s, n + p)?;
    }
    let direct = if noise.eta_d == 1.0 { Some(herald_fock(&state, noise.p_dark_s)?) } else { None };
    let swap: Vec<usize> = (n..2 * n).collect();
    let mut out = apply_bs_fock(&state, &interferometer_unitary(n)?, &swap)?;
    for &m in &swap {
        out = apply_loss_fock(&out, noise.eta_d, m)?;
    }
    let mut cond = herald_fock_resolved(&out, noise.p_dark_s)?;
    for p in 0..n {
        cond = cond.apply_loss(noise.eta_p, p)?;
    }
    cond.check_psd()?;
    cond.detector_efficiency = noise.eta_d;
    let direct = match direct {
        Some(a) => Some((0..n).try_fold(a, |c, p| c.apply_loss(noise.eta_p, p))?),
        None => None,
    };
    let route_mismatch = match &direct {
        Some(a) => (&a.rho - &cond.rho).iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => 0.0,
    };

    let plan = plan.clone().with_noise(0.0, 0.0, noise.p_dark_p)?;
    let size = 1usize << n;
    let correlators: Vec<f64> = (0..size).map(|s| correlator_fock(&cond, &plan, s)).collect::<Result<_>>()?;
    let mut probs = vec![0.0; size * size];
    for s in 0..size {
        for g in 0..size {
            probs[s * size + g] = outcome_probability_fock(&cond, &plan, g, s)?;
        }
    }
    let table = CorrelatorTable::new(n, correlators.clone())?;
    Ok(OracleResult {
        p_success: cond.p_success,
        bell: bell_value(&table),
        correlators,
        outcomes: OutcomeTable::new(n, probs)?,
        truncation: bound,
        route_mismatch,
    })
}

/// Largest deviations between the Gaussian pipeline and the Fock reference
/// at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub cutoff: usize,
    pub bell_gaussian: f64,
    pub bell_fock: f64,
    /// Relative deviation of the heralding probability.
    pub p_success: f64,
    pub correlators: f64,
    pub outcomes: f64,
    pub route_mismatch: f64,
}

impl OracleComparison {
    pub fn max_deviation(&self) -> f64 {
        self.p_success.max(self.correlators).max(self.outcomes)
    }
}

/// Runs both pipelines at the same point with the smallest cutoff, at
/// least `min_cutoff`, whose truncation bound stays below `truncation`.
pub fn compare_with_gaussian(
    bank: &SqueezerBank,
    noise: &NoiseConfig,
    plan: &MeasurementPlan,
    truncation: f64,
    min_cutoff: usize,
) -> Result<OracleComparison> {
    let cutoff = required_cutoff(bank.r, bank.parties(), truncation).max(min_cutoff);
    let oracle = run_oracle(bank, noise, plan, cutoff, truncation)?;
    let gauss = evaluate_experiment(bank, noise, plan)?;
    let (heralded, effective) = herald_experiment(bank, noise, plan)?;
    let table = build_outcome_table(&heralded, &effective)?;
    let max_abs = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(OracleComparison {
        cutoff,
        bell_gaussian: gauss.bell,
        bell_fock: oracle.bell,
        p_success: ((oracle.p_success - gauss.p_success) / gauss.p_success).abs(),
        correlators: max_abs(&oracle.correlators, gauss.correlators.values()),
        outcomes: max_abs(oracle.outcomes.as_slice(), table.as_slice()),
        route_mismatch: oracle.route_mismatch,
    })
}
