//! The equilibrium multiplier vector: closed-form demand, certification,
//! the regularized tatonnement solver, and canonical equilibrium
//! reconstruction.
//!
//! A nonnegative multiplier per contestant summarizes her marginal utility
//! at an effort equilibrium. A vector is an equilibrium multiplier vector
//! (EMV) exactly when demand `T_hat_i` matches the budget `T_i` for every
//! contestant with a positive multiplier and does not exceed it otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContestConfig, EffortProfile, Instance, MultiplierVector};
use crate::numeric::{solve_dense, KahanSum};

/// Step-size policy of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Newton-preconditioned excess-demand steps with halving on merit
    /// increase (restoring the previous iterate) and doubling on success.
    Adaptive,
    /// The provably box-stable scalar step derived from the iterate bounds
    /// `[L_i, U_i]`; slow but every iterate stays inside the box.
    Guaranteed,
    /// A fixed scalar step `lambda += gamma * Z`.
    Fixed(f64),
}

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Every active multiplier starts at one.
    Ones,
    /// Balanced closed form `lambda_i = sum of rewards / (4 T_i)`.
    ScaleAware,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target precision of the reconstructed approximate equilibrium.
    pub epsilon: f64,
    pub step_mode: StepMode,
    pub max_iterations: u64,
    pub init_mode: InitMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-6,
            step_mode: StepMode::Adaptive,
            max_iterations: 100_000,
            init_mode: InitMode::Ones,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SolverConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn epsilon_prime(&self) -> f64 {
        self.epsilon / 4.0
    }
}

/// Outcome of a solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverTrace {
    pub lambda: MultiplierVector,
    /// Demand-map evaluations performed (the dominant cost).
    pub iterations: u64,
    /// Per-contestant `Z_i / T_i` at termination; zero for contestants
    /// outside every contest.
    pub residuals: Vec<f64>,
    /// Max relative residual of the accepted iterate, one entry per
    /// evaluation.
    pub residual_history: Vec<f64>,
    /// Regularization actually used.
    pub a_vector: Vec<f64>,
    /// Times the lower floor clamp activated (diagnostic).
    pub floor_clamps: u64,
    pub epsilon_prime: f64,
}

impl SolverTrace {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn contest_pair(contest: &ContestConfig) -> Result<()> {
    let [a, b] = contest.participants;
    if a == b {
        return Err(Error::Domain(format!(
            "contest {}: participants must differ",
            contest.id
        )));
    }
    if !(contest.reward > 0.0) || !(contest.biases[0] > 0.0) || !(contest.biases[1] > 0.0) {
        return Err(Error::Domain(format!(
            "contest {}: reward and biases must be positive",
            contest.id
        )));
    }
    Ok(())
}

/// Closed-form equilibrium effort of contestant `i` in one contest.
pub fn hat_x(lambda: &MultiplierVector, contest: &ContestConfig, i: usize) -> Result<f64> {
    let pos = contest.position(i).ok_or_else(|| {
        Error::Domain(format!(
            "contestant {i} not invited to contest {}",
            contest.id
        ))
    })?;
    let opp = contest.participants[1 - pos];
    let (ai, aopp) = (contest.biases[pos], contest.biases[1 - pos]);
    let (li, lopp) = (lambda.get(i), lambda.get(opp));
    if li == 0.0 && lopp == 0.0 {
        return Err(Error::InvalidMultiplier {
            contest: contest.id.clone(),
        });
    }
    if lopp == 0.0 {
        return Ok(0.0);
    }
    let denom = aopp * li + ai * lopp;
    Ok(contest.reward * ai * aopp * lopp / (denom * denom))
}

/// Total demand of contestant `i` over all contests inviting her.
pub fn hat_t(lambda: &MultiplierVector, contests: &[ContestConfig], i: usize) -> Result<f64> {
    let mut acc = KahanSum::new();
    for contest in contests.iter().filter(|c| c.involves(i)) {
        acc.add(hat_x(lambda, contest, i)?);
    }
    Ok(acc.value())
}

/// Equilibrium winning probabilities of both participants and the product
/// `Q = p (1 - p)`.
pub fn hat_p_q(lambda: &MultiplierVector, contest: &ContestConfig) -> Result<([f64; 2], f64)> {
    contest_pair(contest)?;
    let [a, b] = contest.participants;
    let (la, lb) = (lambda.get(a), lambda.get(b));
    if la == 0.0 && lb == 0.0 {
        return Err(Error::InvalidMultiplier {
            contest: contest.id.clone(),
        });
    }
    let (aa, ab) = (contest.biases[0], contest.biases[1]);
    let wa = aa * lb;
    let wb = ab * la;
    let pa = if wa <= wb {
        wa / (wa + wb)
    } else {
        1.0 - wb / (wb + wa)
    };
    let pb = 1.0 - pa;
    // Q from the raw weights keeps full relative accuracy even when one
    // probability is vanishingly small.
    let q = (wa / (wa + wb)) * (wb / (wa + wb));
    Ok(([pa, pb], q))
}

/// True iff every contest has a positive multiplier sum.
pub fn is_valid_multiplier(lambda: &MultiplierVector, contests: &[ContestConfig]) -> bool {
    contests.iter().all(|c| {
        let [a, b] = c.participants;
        lambda.get(a) + lambda.get(b) > 0.0
    })
}

/// One certification condition of the EMV test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmvCondition {
    pub contestant: usize,
    pub lambda: f64,
    pub demand: f64,
    pub budget: f64,
    /// Whether the multiplier is positive (budget must bind) or zero
    /// (demand may fall short).
    pub saturated: bool,
    pub ok: bool,
}

/// Result of the EMV certification test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmvCheck {
    pub certified: bool,
    pub violations: Vec<String>,
    pub conditions: Vec<EmvCondition>,
}

fn check_conditions(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
    a: Option<&[f64]>,
    tol: f64,
) -> Result<EmvCheck> {
    if lambda.len() != instance.contestants() {
        return Err(Error::MultiplierLength {
            got: lambda.len(),
            want: instance.contestants(),
        });
    }
    let mut violations = Vec::new();
    if !is_valid_multiplier(lambda, contests) {
        violations.push("some contest has zero multiplier sum".to_owned());
    }
    let mut conditions = Vec::new();
    if violations.is_empty() {
        for i in 0..instance.contestants() {
            if !contests.iter().any(|c| c.involves(i)) && a.map_or(true, |a| a[i] == 0.0) {
                continue;
            }
            let li = lambda.get(i);
            let budget = instance.contestant_efforts[i];
            let mut demand = hat_t(lambda, contests, i)?;
            if let Some(a) = a {
                if a[i] > 0.0 {
                    if li == 0.0 {
                        violations.push(format!(
                            "contestant {i}: zero multiplier despite positive regularization"
                        ));
                        continue;
                    }
                    demand += a[i] / li;
                }
            }
            let saturated = li > 0.0;
            let ok = if saturated {
                (demand - budget).abs() <= tol * budget
            } else {
                demand <= (1.0 + tol) * budget
            };
            if !ok {
                violations.push(format!(
                    "contestant {i}: demand {demand} vs budget {budget} (multiplier {li})"
                ));
            }
            conditions.push(EmvCondition {
                contestant: i,
                lambda: li,
                demand,
                budget,
                saturated,
                ok,
            });
        }
    }
    Ok(EmvCheck {
        certified: violations.is_empty(),
        violations,
        conditions,
    })
}

/// Certifies a candidate EMV against the three closed-form conditions at a
/// relative tolerance. Violations are data, not errors.
pub fn check_emv(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
    tol: f64,
) -> Result<EmvCheck> {
    check_conditions(instance, contests, lambda, None, tol)
}

/// Certifies against the regularized conditions `T_hat_i + a_i / lambda_i
/// = T_i` used by the solver.
pub fn check_emv_regularized(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
    a: &[f64],
    tol: f64,
) -> Result<EmvCheck> {
    if a.len() != instance.contestants() {
        return Err(Error::RegularizationLength {
            got: a.len(),
            want: instance.contestants(),
        });
    }
    check_conditions(instance, contests, lambda, Some(a), tol)
}

/// Per-contestant adjacency view of the contest list.
struct Adjacency {
    adj: Vec<Vec<AdjEntry>>,
}

struct AdjEntry {
    opp: usize,
    reward: f64,
    bias_self: f64,
    bias_opp: f64,
}

impl Adjacency {
    fn build(n: usize, contests: &[ContestConfig]) -> Result<Self> {
        let mut adj: Vec<Vec<AdjEntry>> = (0..n).map(|_| Vec::new()).collect();
        for contest in contests {
            contest_pair(contest)?;
            let [a, b] = contest.participants;
            if a >= n || b >= n {
                return Err(Error::Domain(format!(
                    "contest {}: participant out of range",
                    contest.id
                )));
            }
            adj[a].push(AdjEntry {
                opp: b,
                reward: contest.reward,
                bias_self: contest.biases[0],
                bias_opp: contest.biases[1],
            });
            adj[b].push(AdjEntry {
                opp: a,
                reward: contest.reward,
                bias_self: contest.biases[1],
                bias_opp: contest.biases[0],
            });
        }
        Ok(Adjacency { adj })
    }
}

/// The Algorithm-style regularization `a_i = eps'^2 T_i min_C R_C /
/// (T_i + (alpha_opp / alpha_i) T_opp)`; zero for contestants outside
/// every contest.
pub fn regularization_vector(
    instance: &Instance,
    contests: &[ContestConfig],
    epsilon_prime: f64,
) -> Result<Vec<f64>> {
    let n = instance.contestants();
    let adjacency = Adjacency::build(n, contests)?;
    let t = &instance.contestant_efforts;
    let mut a = vec![0.0; n];
    for i in 0..n {
        let mut best = f64::INFINITY;
        for e in &adjacency.adj[i] {
            let bound = e.reward / (t[i] + (e.bias_opp / e.bias_self) * t[e.opp]);
            if bound < best {
                best = bound;
            }
        }
        if best.is_finite() {
            a[i] = epsilon_prime * epsilon_prime * t[i] * best;
        }
    }
    Ok(a)
}

/// Per-coordinate iterate bounds `[L_i, U_i]` of the box-stability argument.
pub fn box_bounds(
    instance: &Instance,
    contests: &[ContestConfig],
    a: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = instance.contestants();
    let adjacency = Adjacency::build(n, contests)?;
    let t = &instance.contestant_efforts;
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let reward_sum: f64 = adjacency.adj[i].iter().map(|e| e.reward).sum();
        lower[i] = (a[i] / (2.0 * t[i])).min(1.0);
        upper[i] = ((reward_sum / 2.0 + 2.0 * a[i]) / t[i]).max(1.0);
    }
    Ok((lower, upper))
}

/// The step size that keeps every iterate inside `[L_i, U_i]`.
pub fn guaranteed_gamma(instance: &Instance, contests: &[ContestConfig], a: &[f64]) -> Result<f64> {
    let n = instance.contestants();
    let adjacency = Adjacency::build(n, contests)?;
    let t = &instance.contestant_efforts;
    let (lower, upper) = box_bounds(instance, contests, a)?;
    let mut gamma = f64::INFINITY;
    for i in 0..n {
        if adjacency.adj[i].is_empty() && a[i] == 0.0 {
            continue;
        }
        if a[i] <= 0.0 {
            return Err(Error::ZeroRegularization { index: i });
        }
        let reward_sum: f64 = adjacency.adj[i].iter().map(|e| e.reward).sum();
        let cap1 = lower[i] / t[i];
        let cap2 = upper[i] / (reward_sum * t[i] / a[i] + 2.0 * t[i]);
        gamma = gamma.min(cap1).min(cap2);
    }
    if !gamma.is_finite() {
        return Err(Error::Domain("no active contestant".to_owned()));
    }
    Ok(gamma)
}

struct Workspace<'a> {
    adjacency: Adjacency,
    t: &'a [f64],
    a: Vec<f64>,
    active: Vec<bool>,
    eps_prime: f64,
}

impl Workspace<'_> {
    /// Residual `Z_i = T_hat_i + a_i / lambda_i - T_i` and, when requested,
    /// the regularized demand Jacobian `dZ/dlambda`.
    fn eval(&self, lambda: &[f64], z: &mut [f64], mut jac: Option<&mut Vec<Vec<f64>>>) {
        let n = self.t.len();
        if let Some(j) = jac.as_deref_mut() {
            for row in j.iter_mut() {
                row.fill(0.0);
            }
        }
        for i in 0..n {
            if !self.active[i] {
                z[i] = 0.0;
                continue;
            }
            let mut demand = KahanSum::new();
            let li_raw = lambda[i];
            for e in &self.adjacency.adj[i] {
                let li = li_raw / e.bias_self;
                let lk = lambda[e.opp] / e.bias_opp;
                let d = li + lk;
                if d <= 0.0 {
                    continue;
                }
                demand.add((e.reward / e.bias_self) * lk / (d * d));
                if let Some(j) = jac.as_deref_mut() {
                    let d3 = d * d * d;
                    j[i][i] += -2.0 * (e.reward / (e.bias_self * e.bias_self)) * lk / d3;
                    j[i][e.opp] += (e.reward / (e.bias_self * e.bias_opp)) * (li - lk) / d3;
                }
            }
            z[i] = demand.value() + self.a[i] / li_raw - self.t[i];
            if let Some(j) = jac.as_deref_mut() {
                j[i][i] -= self.a[i] / (li_raw * li_raw);
            }
        }
    }

    fn coordinate_done(&self, i: usize, lambda: f64, z: f64) -> bool {
        if !self.active[i] {
            return true;
        }
        if z.abs() <= self.eps_prime * self.t[i] {
            return true;
        }
        // With zero regularization the limit point may have a zero
        // multiplier, where the budget condition is one-sided.
        self.a[i] == 0.0 && lambda <= 1e-250 && z <= 0.0
    }

    fn all_done(&self, lambda: &[f64], z: &[f64]) -> bool {
        (0..self.t.len()).all(|i| self.coordinate_done(i, lambda[i], z[i]))
    }

    fn max_rel_residual(&self, z: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.t.len() {
            if self.active[i] {
                m = m.max((z[i] / self.t[i]).abs());
            }
        }
        m
    }
}

/// Computes the (regularized) equilibrium multiplier vector.
///
/// When `a` is omitted it is derived from the precision as in the
/// regularized demand system; when supplied it is used verbatim, and
/// contestants outside every contest with a positive entry are legal.
pub fn solve_emv(
    instance: &Instance,
    contests: &[ContestConfig],
    config: &SolverConfig,
    a: Option<&[f64]>,
) -> Result<SolverTrace> {
    solve_emv_observed(instance, contests, config, a, &mut |_, _| {})
}

/// Like [`solve_emv`] but invokes `observer(lambda, z)` on the initial
/// point and after every accepted step.
pub fn solve_emv_observed(
    instance: &Instance,
    contests: &[ContestConfig],
    config: &SolverConfig,
    a: Option<&[f64]>,
    observer: &mut dyn FnMut(&[f64], &[f64]),
) -> Result<SolverTrace> {
    let violations = crate::model::validate_instance(instance);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "precision must be positive, got {}",
            config.epsilon
        )));
    }
    let n = instance.contestants();
    let t = &instance.contestant_efforts;
    let eps_prime = config.epsilon_prime();
    let a_vec = match a {
        Some(a) => {
            if a.len() != n {
                return Err(Error::RegularizationLength {
                    got: a.len(),
                    want: n,
                });
            }
            if let Some(i) = a.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!(
                    "regularization entry {i} must be finite and nonnegative"
                )));
            }
            a.to_vec()
        }
        None => regularization_vector(instance, contests, eps_prime)?,
    };
    let adjacency = Adjacency::build(n, contests)?;
    let active: Vec<bool> = (0..n)
        .map(|i| !adjacency.adj[i].is_empty() || a_vec[i] > 0.0)
        .collect();
    let ws = Workspace {
        adjacency,
        t,
        a: a_vec.clone(),
        active: active.clone(),
        eps_prime,
    };

    let mut lambda = vec![0.0; n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        lambda[i] = match config.init_mode {
            InitMode::Ones => 1.0,
            InitMode::ScaleAware => {
                let mut rewards = KahanSum::new();
                for e in &ws.adjacency.adj[i] {
                    rewards.add(e.reward);
                }
                let guess = rewards.value() / (4.0 * t[i]);
                if guess > 0.0 {
                    guess
                } else {
                    // Only regularization binds this coordinate.
                    a_vec[i] / t[i]
                }
            }
        };
    }
    let floor: Vec<f64> = (0..n)
        .map(|i| (a_vec[i] / (2.0 * t[i])).clamp(1e-300, 1.0))
        .collect();

    match config.step_mode {
        StepMode::Fixed(gamma) => {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::Domain(format!(
                    "fixed step must be positive, got {gamma}"
                )));
            }
            scalar_loop(&ws, config, lambda, gamma, floor, a_vec, observer)
        }
        StepMode::Guaranteed => {
            let gamma = guaranteed_gamma(instance, contests, &a_vec)?;
            scalar_loop(&ws, config, lambda, gamma, floor, a_vec, observer)
        }
        StepMode::Adaptive => adaptive_loop(&ws, config, lambda, floor, a_vec, observer),
    }
}

fn finish(
    ws: &Workspace<'_>,
    lambda: Vec<f64>,
    z: &[f64],
    iterations: u64,
    history: Vec<f64>,
    a_vec: Vec<f64>,
    floor_clamps: u64,
) -> SolverTrace {
    let residuals: Vec<f64> = (0..ws.t.len())
        .map(|i| if ws.active[i] { z[i] / ws.t[i] } else { 0.0 })
        .collect();
    SolverTrace {
        lambda: MultiplierVector::new(lambda),
        iterations,
        residuals,
        residual_history: history,
        a_vector: a_vec,
        floor_clamps,
        epsilon_prime: ws.eps_prime,
    }
}

fn nonconvergence(
    ws: &Workspace<'_>,
    lambda: Vec<f64>,
    z: &[f64],
    iterations: u64,
    history: Vec<f64>,
    a_vec: Vec<f64>,
    floor_clamps: u64,
) -> Error {
    let achieved = ws.max_rel_residual(z);
    let target = ws.eps_prime;
    let trace = finish(ws, lambda, z, iterations, history, a_vec, floor_clamps);
    Error::NonConvergence {
        target,
        achieved,
        iterations,
        trace: Box::new(trace),
    }
}

fn scalar_loop(
    ws: &Workspace<'_>,
    config: &SolverConfig,
    mut lambda: Vec<f64>,
    gamma: f64,
    floor: Vec<f64>,
    a_vec: Vec<f64>,
    observer: &mut dyn FnMut(&[f64], &[f64]),
) -> Result<SolverTrace> {
    let n = ws.t.len();
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    let mut evals: u64 = 0;
    let mut floor_clamps: u64 = 0;
    loop {
        ws.eval(&lambda, &mut z, None);
        evals += 1;
        history.push(ws.max_rel_residual(&z));
        observer(&lambda, &z);
        if ws.all_done(&lambda, &z) {
            return Ok(finish(ws, lambda, &z, evals, history, a_vec, floor_clamps));
        }
        if evals >= config.max_iterations {
            return Err(nonconvergence(
                ws,
                lambda,
                &z,
                evals,
                history,
                a_vec,
                floor_clamps,
            ));
        }
        for i in 0..n {
            if !ws.active[i] {
                continue;
            }
            let next = lambda[i] + gamma * z[i];
            if next < floor[i] {
                lambda[i] = floor[i];
                floor_clamps += 1;
            } else {
                lambda[i] = next;
            }
        }
    }
}

fn adaptive_loop(
    ws: &Workspace<'_>,
    config: &SolverConfig,
    mut lambda: Vec<f64>,
    floor: Vec<f64>,
    a_vec: Vec<f64>,
    observer: &mut dyn FnMut(&[f64], &[f64]),
) -> Result<SolverTrace> {
    let n = ws.t.len();
    let act: Vec<usize> = (0..n).filter(|&i| ws.active[i]).collect();
    let m = act.len();
    if m == 0 {
        let z = vec![0.0; n];
        observer(&lambda, &z);
        return Ok(finish(ws, lambda, &z, 0, Vec::new(), a_vec, 0));
    }
    let mut z = vec![0.0; n];
    let mut jac: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
    let mut history = Vec::new();
    let mut evals: u64 = 0;
    let mut floor_clamps: u64 = 0;

    let merit = |z: &[f64]| -> f64 {
        let mut s = KahanSum::new();
        for &i in &act {
            let r = z[i] / ws.t[i];
            s.add(r * r);
        }
        let v = s.value();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    ws.eval(&lambda, &mut z, Some(&mut jac));
    evals += 1;
    let mut merit_cur = merit(&z);
    history.push(ws.max_rel_residual(&z));
    observer(&lambda, &z);

    let mut gamma = 1.0_f64;
    let mut trial = vec![0.0; n];
    let mut z_trial = vec![0.0; n];
    let mut jac_trial: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
    loop {
        if ws.all_done(&lambda, &z) {
            return Ok(finish(ws, lambda, &z, evals, history, a_vec, floor_clamps));
        }
        if evals >= config.max_iterations {
            return Err(nonconvergence(
                ws,
                lambda,
                &z,
                evals,
                history,
                a_vec,
                floor_clamps,
            ));
        }

        // Newton direction on the active block, Jacobi-equilibrated so the
        // elimination sees a unit diagonal regardless of coordinate scale.
        let mut delta = vec![0.0; n];
        let mut ok = true;
        let mut scale = vec![0.0; m];
        for (r, &i) in act.iter().enumerate() {
            let d = jac[i][i].abs();
            if d > 0.0 && d.is_finite() {
                scale[r] = 1.0 / d.sqrt();
            } else {
                ok = false;
                break;
            }
        }
        if ok {
            let mut mat: Vec<Vec<f64>> = (0..m)
                .map(|r| {
                    (0..m)
                        .map(|c| scale[r] * jac[act[r]][act[c]] * scale[c])
                        .collect()
                })
                .collect();
            let mut rhs: Vec<f64> = (0..m).map(|r| -scale[r] * z[act[r]]).collect();
            match solve_dense(&mut mat, &mut rhs) {
                Some(y) => {
                    for (r, &i) in act.iter().enumerate() {
                        delta[i] = scale[r] * y[r];
                    }
                }
                None => ok = false,
            }
        }
        if !ok {
            // Degenerate linearization; fall back to a relative
            // excess-demand step for this trial.
            for &i in &act {
                delta[i] = lambda[i] * z[i] / ws.t[i];
            }
        }

        // Direction-preserving positivity cap: no coordinate moves by more
        // than 90% of its current value in one step.
        let mut max_rel: f64 = 0.0;
        for &i in &act {
            max_rel = max_rel.max((gamma * delta[i] / lambda[i]).abs());
        }
        let shrink = if max_rel > 0.9 { 0.9 / max_rel } else { 1.0 };
        for &i in &act {
            let next = lambda[i] + shrink * gamma * delta[i];
            if next < floor[i] {
                trial[i] = floor[i];
                floor_clamps += 1;
            } else {
                trial[i] = next;
            }
        }

        ws.eval(&trial, &mut z_trial, Some(&mut jac_trial));
        evals += 1;
        let merit_trial = merit(&z_trial);
        if merit_trial <= merit_cur {
            for &i in &act {
                lambda[i] = trial[i];
            }
            std::mem::swap(&mut z, &mut z_trial);
            std::mem::swap(&mut jac, &mut jac_trial);
            merit_cur = merit_trial;
            gamma = (gamma * 2.0).min(1.0);
            history.push(ws.max_rel_residual(&z));
            observer(&lambda, &z);
        } else {
            history.push(ws.max_rel_residual(&z));
            gamma *= 0.5;
            if gamma < 1e-18 {
                return Err(nonconvergence(
                    ws,
                    lambda,
                    &z,
                    evals,
                    history,
                    a_vec,
                    floor_clamps,
                ));
            }
        }
    }
}

/// Canonical equilibrium efforts `x = hat_x(scale * lambda)` for every
/// incidence; `scale` defaults to one, and solve paths pass `1 + eps'`.
pub fn reconstruct_equilibrium(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
    scale: Option<f64>,
) -> Result<EffortProfile> {
    if lambda.len() != instance.contestants() {
        return Err(Error::MultiplierLength {
            got: lambda.len(),
            want: instance.contestants(),
        });
    }
    let scale = scale.unwrap_or(1.0);
    let scaled = lambda.scaled(scale);
    let mut x = EffortProfile::new();
    for contest in contests {
        for &p in &contest.participants {
            if p >= instance.contestants() {
                return Err(Error::Domain(format!(
                    "contest {}: participant {p} out of range",
                    contest.id
                )));
            }
            x.set(p, &contest.id, hat_x(&scaled, contest, p)?);
        }
    }
    for i in 0..instance.contestants() {
        let spent = x.spent(i);
        let budget = instance.contestant_efforts[i];
        if spent > budget * (1.0 + 1e-9) {
            return Err(Error::BudgetInfeasible {
                contestant: i,
                spent,
                budget,
            });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContestConfig, Instance};

    fn thm44_contests(alpha_c1_0: f64) -> Vec<ContestConfig> {
        vec![
            ContestConfig::new("C1", 0, [0, 1], 1.0, [alpha_c1_0, 1.0]),
            ContestConfig::new("C2", 1, [0, 2], 1.002001, [1.0, 1.0]),
            ContestConfig::new("C3", 2, [1, 3], 1.002001, [1.0, 1.0]),
            ContestConfig::new("C4", 3, [2, 3], 1.002001, [1.0, 1.0]),
        ]
    }

    fn thm44_instance() -> Instance {
        Instance::new(
            vec![0.251, 251.0, 2.0, 0.002],
            vec![1.0, 1.002001, 1.002001, 1.002001],
        )
    }

    #[test]
    fn hat_x_published_values() {
        // Single contest, equal biases: lambda (4/9, 2/9) gives effort 1/2.
        let c = ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0]);
        let lambda = MultiplierVector::new(vec![4.0 / 9.0, 2.0 / 9.0]);
        assert!((hat_x(&lambda, &c, 0).unwrap() - 0.5).abs() < 1e-15);

        // Heavy bias: x_2 = 250.
        let c = ContestConfig::new("C", 0, [0, 1], 1.0, [1000.0, 1.0]);
        let lambda = MultiplierVector::new(vec![1.0, 0.001]);
        assert!((hat_x(&lambda, &c, 1).unwrap() - 250.0).abs() < 1e-12);

        // Opponent multiplier zero: effort collapses to zero.
        let lambda = MultiplierVector::new(vec![1.0, 0.0]);
        assert_eq!(hat_x(&lambda, &c, 0).unwrap(), 0.0);

        let lambda = MultiplierVector::new(vec![0.0, 0.0]);
        assert!(hat_x(&lambda, &c, 0).is_err());
    }

    #[test]
    fn hat_t_published_values() {
        let contests = thm44_contests(1000.0);
        let lambda = MultiplierVector::new(vec![1.0, 0.001, 0.001, 1.0]);
        assert!((hat_t(&lambda, &contests, 1).unwrap() - 251.0).abs() < 1e-9);
        assert!((hat_t(&lambda, &contests, 0).unwrap() - 0.251).abs() < 1e-12);

        let c = vec![ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0])];
        let lambda = MultiplierVector::new(vec![0.25, 0.25]);
        assert!((hat_t(&lambda, &c, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hat_p_q_values() {
        // Extreme bias contest of the divisible counterexample: p = 1/2.
        let c = ContestConfig::new("C3", 1, [0, 2], 1e3, [1e6, 1.0]);
        let lambda = MultiplierVector::new(vec![2.5e5, 2.5e5, 0.25, 0.25]);
        let ([p0, p2], q) = hat_p_q(&lambda, &c).unwrap();
        assert_eq!(p0, 0.5);
        assert_eq!(p2, 0.5);
        assert_eq!(q, 0.25);

        let c = ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0]);
        let lambda = MultiplierVector::new(vec![4.0 / 9.0, 2.0 / 9.0]);
        let ([p0, _], _) = hat_p_q(&lambda, &c).unwrap();
        assert!((p0 - 1.0 / 3.0).abs() < 1e-15);

        let lambda = MultiplierVector::new(vec![0.0, 1.0]);
        let ([p0, p1], q) = hat_p_q(&lambda, &c).unwrap();
        assert_eq!(p0, 1.0);
        assert_eq!(p1, 0.0);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn validity_predicate() {
        let contests = thm44_contests(1000.0);
        let good = MultiplierVector::new(vec![1.0, 0.001, 0.001, 1.0]);
        assert!(is_valid_multiplier(&good, &contests));
        let zero = MultiplierVector::new(vec![0.0; 4]);
        assert!(!is_valid_multiplier(&zero, &contests));
        assert!(is_valid_multiplier(&zero, &[]));
    }

    #[test]
    fn certification_accepts_published_emv() {
        let instance = thm44_instance();
        let contests = thm44_contests(1000.0);
        let lambda = MultiplierVector::new(vec![1.0, 0.001, 0.001, 1.0]);
        let check = check_emv(&instance, &contests, &lambda, 1e-9).unwrap();
        assert!(check.certified, "{:?}", check.violations);

        // Demand is degree -1 homogeneous, so scaling the vector halves it.
        let scaled = lambda.scaled(2.0);
        let check = check_emv(&instance, &contests, &scaled, 1e-9).unwrap();
        assert!(!check.certified);
    }

    #[test]
    fn certification_zero_multiplier_condition() {
        // One contest; contestant 1 rich enough that lambda_1 = 0 with
        // slack demand certifies, while excess demand does not.
        let instance = Instance::new(vec![1.0, 10.0], vec![1.0]);
        let contests = vec![ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0])];
        // lambda_0 chosen so hat_x(1, C) = 1/lambda_0 <= 10.
        let lambda = MultiplierVector::new(vec![0.25, 0.0]);
        // demand_1 = R * a0 * a1 * l0 / (a1 l1 + a0 l0)^2 = 0.25/0.0625 = 4 <= 10
        let check = check_emv(&instance, &contests, &lambda, 1e-9).unwrap();
        let cond1 = check.conditions.iter().find(|c| c.contestant == 1).unwrap();
        assert!(!cond1.saturated && cond1.ok);
        // Saturated contestant 0 must match exactly: demand_0 = 0 != 1.
        assert!(!check.certified);
    }

    #[test]
    fn solver_reproduces_published_vectors() {
        let instance = thm44_instance();
        let contests = thm44_contests(1000.0);
        let config = SolverConfig::with_epsilon(1e-10);
        let trace = solve_emv(&instance, &contests, &config, None).unwrap();
        let expect = [1.0, 0.001, 0.001, 1.0];
        for (got, want) in trace.lambda.values().iter().zip(expect) {
            assert!(((got - want) / want).abs() < 1e-9, "lambda {got} vs {want}");
        }
        assert!(trace.max_residual() <= config.epsilon_prime());
        let reg = check_emv_regularized(
            &instance,
            &contests,
            &trace.lambda,
            &trace.a_vector,
            config.epsilon_prime(),
        )
        .unwrap();
        assert!(reg.certified);
    }

    #[test]
    fn solver_symmetric_instance_stays_symmetric() {
        let instance = Instance::new(vec![1.0, 1.0], vec![1.0]);
        let contests = vec![ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0])];
        let trace = solve_emv(&instance, &contests, &SolverConfig::default(), None).unwrap();
        let (l0, l1) = (trace.lambda.get(0), trace.lambda.get(1));
        assert!((l0 - l1).abs() <= 1e-12 * l0);
        assert!((l0 - 0.25).abs() < 1e-7);

        // The scalar update preserves equality bitwise.
        let config = SolverConfig {
            epsilon: 1e-4,
            step_mode: StepMode::Fixed(0.2),
            max_iterations: 100_000,
            init_mode: InitMode::Ones,
        };
        let trace = solve_emv(&instance, &contests, &config, None).unwrap();
        assert_eq!(trace.lambda.get(0), trace.lambda.get(1));
    }

    #[test]
    fn solver_nonconvergence_carries_trace() {
        let instance = thm44_instance();
        let contests = thm44_contests(1000.0);
        let config = SolverConfig {
            epsilon: 1e-10,
            step_mode: StepMode::Fixed(1e-9),
            max_iterations: 50,
            init_mode: InitMode::Ones,
        };
        match solve_emv(&instance, &contests, &config, None) {
            Err(Error::NonConvergence {
                iterations, trace, ..
            }) => {
                assert_eq!(iterations, 50);
                assert_eq!(trace.residual_history.len(), 50);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn reconstruction_published_profile() {
        // Deviation outcome with three unit contestants: lambda (4/9, 2/9, 2/9).
        let instance = Instance::new(vec![1.0, 1.0, 1.0], vec![1.0, 1.0]);
        let contests = vec![
            ContestConfig::new("C1", 0, [0, 1], 1.0, [1.0, 1.0]),
            ContestConfig::new("C2p", 1, [0, 2], 1.0, [1.0, 1.0]),
        ];
        let lambda = MultiplierVector::new(vec![4.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0]);
        let x = reconstruct_equilibrium(&instance, &contests, &lambda, None).unwrap();
        assert!((x.get(0, &"C1".into()).unwrap() - 0.5).abs() < 1e-15);
        assert!((x.get(0, &"C2p".into()).unwrap() - 0.5).abs() < 1e-15);
        assert!((x.get(1, &"C1".into()).unwrap() - 1.0).abs() < 1e-15);
        assert!((x.get(2, &"C2p".into()).unwrap() - 1.0).abs() < 1e-15);

        // Certified EMV with positive entries exhausts every budget.
        for i in 0..3 {
            assert!((x.spent(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_rejects_far_vectors() {
        let instance = Instance::new(vec![1.0, 1.0], vec![1.0]);
        let contests = vec![ContestConfig::new("C", 0, [0, 1], 1.0, [1.0, 1.0])];
        // Far below the EMV: demand explodes past the budgets.
        let lambda = MultiplierVector::new(vec![0.01, 0.01]);
        assert!(matches!(
            reconstruct_equilibrium(&instance, &contests, &lambda, None),
            Err(Error::BudgetInfeasible { .. })
        ));
    }

    #[test]
    fn regularization_matches_formula() {
        let instance = thm44_instance();
        let contests = thm44_contests(1000.0);
        let eps_prime = 2.5e-7;
        let a = regularization_vector(&instance, &contests, eps_prime).unwrap();
        // Contestant 0: min over C1 (R=1, ratio 1/1000) and C2 (R=1.002001, ratio 1).
        let c1: f64 = 1.0 / (0.251 + (1.0 / 1000.0) * 251.0);
        let c2: f64 = 1.002001 / (0.251 + 2.0);
        let want = eps_prime * eps_prime * 0.251 * c1.min(c2);
        assert!(((a[0] - want) / want).abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_product_identity() {
        let c = ContestConfig::new("C", 0, [0, 1], 2.5, [3.0, 0.4]);
        let lambda = MultiplierVector::new(vec![0.7, 1.9]);
        let x0 = hat_x(&lambda, &c, 0).unwrap();
        let x1 = hat_x(&lambda, &c, 1).unwrap();
        let (_, q) = hat_p_q(&lambda, &c).unwrap();
        assert!((lambda.get(0) * x0 - lambda.get(1) * x1).abs() < 1e-15 * (x0 + x1));
        assert!((lambda.get(0) * x0 - c.reward * q).abs() < 1e-14 * c.reward);
    }
}
