use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::cost::{cost_value, stage_cost, CostExpansion, CostTerm};
use super::dynamics::{Derivatives, Dynamics};
use super::OcpError;

#[derive(Clone)]
pub struct OcpProblem {
    pub horizon: usize,
    pub dt: f64,
    pub dynamics: Arc<dyn Dynamics>,
    pub stage: Vec<CostTerm>,
    pub terminal: Vec<CostTerm>,
    pub x0: DVector<f64>,
}

impl OcpProblem {
    pub fn nx(&self) -> usize {
        self.dynamics.nx()
    }

    pub fn nu(&self) -> usize {
        self.dynamics.nu()
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        if self.horizon == 0 {
            return Err(OcpError::InvalidProblem("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(OcpError::InvalidProblem(format!("dt must be positive, got {}", self.dt)));
        }
        if self.x0.len() != self.nx() {
            return Err(OcpError::InvalidProblem(format!("x0 has {} entries, expected {}", self.x0.len(), self.nx())));
        }
        for t in self.stage.iter().chain(&self.terminal) {
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(OcpError::InvalidProblem(format!("{:?} weight must be finite and >= 0", t.kind)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tol: f64,
    /// Bound on `max_k ‖Q_u‖∞` that counts as stationary.
    pub grad_tol: f64,
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub alphas: Vec<f64>,
    /// Minimum actual/expected improvement ratio for accepting a step.
    pub accept_ratio: f64,
    /// Evaluate node derivatives on the rayon pool.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            cost_tol: 1e-6,
            grad_tol: 1e-6,
            mu_init: 0.0,
            mu_min: 1e-9,
            mu_max: 1e6,
            alphas: (0..7).map(|i| 0.5f64.powi(i)).collect(),
            accept_ratio: 0.1,
            parallel: true,
        }
    }
}

/// States, controls and auxiliary outputs of a rollout with its total cost.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub auxs: Vec<DVector<f64>>,
    pub cost: f64,
}

/// Feedforward steps `k` and feedback gains `K` per node.
#[derive(Clone, Debug)]
pub struct Gains {
    pub k: Vec<DVector<f64>>,
    pub kk: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct BackwardPass {
    pub gains: Gains,
    /// `Σ kᵀ Q_u` and `Σ kᵀ Q̃_uu k`: the model predicts a cost change of
    /// `α d1 + ½ α² d2` for step size `α`.
    pub d1: f64,
    pub d2: f64,
    /// `max_k ‖Q_u‖∞`.
    pub grad_norm: f64,
}

/// Derivatives of dynamics and cost along a trajectory.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub dyn_derivs: Vec<Derivatives>,
    pub stage: Vec<CostExpansion>,
    pub terminal: CostExpansion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub mu: f64,
    pub alpha: f64,
    pub expected: f64,
    pub actual: f64,
    pub accepted: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Stationary or cost change below tolerance.
    Converged,
    IterationLimit,
    /// No acceptable step even at maximal regularization.
    RegularizationLimit,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub auxs: Vec<DVector<f64>>,
    pub k: Vec<DVector<f64>>,
    pub kk: Vec<DMatrix<f64>>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub mu: f64,
    pub log: Vec<IterationLog>,
}

impl OcpSolution {
    pub fn horizon(&self) -> usize {
        self.us.len()
    }
}

/// Rolls out `us` from `x0` and evaluates the total cost.
pub fn rollout(problem: &OcpProblem, us: &[DVector<f64>]) -> Result<Trajectory, OcpError> {
    let n = problem.horizon;
    if us.len() != n {
        return Err(OcpError::InvalidProblem(format!("{} controls for horizon {n}", us.len())));
    }
    let dynamics = &problem.dynamics;
    let mut xs = Vec::with_capacity(n + 1);
    let mut auxs = Vec::with_capacity(n);
    let mut cost = 0.0;
    xs.push(problem.x0.clone());
    for (k, u) in us.iter().enumerate() {
        let out = dynamics.step(k, &xs[k], u)?;
        if out.next.iter().any(|v| !v.is_finite()) {
            return Err(OcpError::Diverged { node: k });
        }
        cost += cost_value(&problem.stage, k, &xs[k], u, &out.aux);
        xs.push(out.next);
        auxs.push(out.aux);
    }
    cost += terminal_value(problem, &xs[n]);
    Ok(Trajectory { xs, us: us.to_vec(), auxs, cost })
}

fn terminal_value(problem: &OcpProblem, x: &DVector<f64>) -> f64 {
    cost_value(&problem.terminal, problem.horizon, x, &DVector::zeros(problem.nu()), &DVector::zeros(problem.dynamics.naux()))
}

/// Dynamics and cost expansions at every node.
pub fn linearize(problem: &OcpProblem, traj: &Trajectory, parallel: bool) -> Result<Linearization, OcpError> {
    let n = problem.horizon;
    let node = |k: usize| -> Result<(Derivatives, CostExpansion), OcpError> {
        let d = problem.dynamics.derivatives(k, &traj.xs[k], &traj.us[k])?;
        let c = stage_cost(&problem.stage, k, &traj.xs[k], &traj.us[k], &d.aux, Some(&d.ax), Some(&d.au));
        Ok((d, c))
    };
    let nodes: Vec<_> = if parallel {
        (0..n).into_par_iter().map(node).collect::<Result<_, _>>()?
    } else {
        (0..n).map(node).collect::<Result<_, _>>()?
    };
    let (dyn_derivs, stage) = nodes.into_iter().unzip();
    let terminal = stage_cost(
        &problem.terminal,
        n,
        &traj.xs[n],
        &DVector::zeros(problem.nu()),
        &DVector::zeros(problem.dynamics.naux()),
        None,
        None,
    );
    Ok(Linearization { dyn_derivs, stage, terminal })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Riccati-like sweep with `Q_uu + μI`. Fails if the regularized `Q_uu`
/// is not positive definite at some node.
pub fn backward_pass(problem: &OcpProblem, lin: &Linearization, mu: f64) -> Result<BackwardPass, OcpError> {
    let n = problem.horizon;
    let nu = problem.nu();
    let mut vx = lin.terminal.lx.clone();
    let mut vxx = lin.terminal.lxx.clone();
    let mut k = vec![DVector::zeros(nu); n];
    let mut kk = vec![DMatrix::zeros(nu, problem.nx()); n];
    let (mut d1, mut d2, mut grad_norm) = (0.0, 0.0, 0.0f64);
    for t in (0..n).rev() {
        let d = &lin.dyn_derivs[t];
        let c = &lin.stage[t];
        let qx = &c.lx + d.fx.tr_mul(&vx);
        let qu = &c.lu + d.fu.tr_mul(&vx);
        let vxx_fx = &vxx * &d.fx;
        let vxx_fu = &vxx * &d.fu;
        let qxx = &c.lxx + d.fx.tr_mul(&vxx_fx);
        let quu = &c.luu + d.fu.tr_mul(&vxx_fu);
        let qux = &c.lux + d.fu.tr_mul(&vxx_fx);
        let mut quu_reg = quu + DMatrix::identity(nu, nu) * mu;
        symmetrize(&mut quu_reg);
        let chol = quu_reg.clone().cholesky().ok_or(OcpError::NotPositiveDefinite { node: t, mu })?;
        let kt = -chol.solve(&qu);
        let kkt = -chol.solve(&qux);
        grad_norm = grad_norm.max(qu.amax());
        d1 += kt.dot(&qu);
        d2 += kt.dot(&(&quu_reg * &kt));
        // V_s = Q_s - Kᵀ Q̃uu k, V_ss = Q_ss - Kᵀ Q̃uu K.
        vx = qx - kkt.tr_mul(&(&quu_reg * &kt));
        vxx = qxx - kkt.tr_mul(&(&quu_reg * &kkt));
        symmetrize(&mut vxx);
        k[t] = kt;
        kk[t] = kkt;
    }
    Ok(BackwardPass { gains: Gains { k, kk }, d1, d2, grad_norm })
}

/// Closed-loop rollout `u = ū + α k + K (x - x̄)`.
pub fn forward_pass(problem: &OcpProblem, traj: &Trajectory, gains: &Gains, alpha: f64) -> Result<Trajectory, OcpError> {
    let n = problem.horizon;
    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n);
    let mut auxs = Vec::with_capacity(n);
    let mut cost = 0.0;
    xs.push(problem.x0.clone());
    for t in 0..n {
        let dx = &xs[t] - &traj.xs[t];
        let u = &traj.us[t] + &gains.k[t] * alpha + &gains.kk[t] * dx;
        let out = problem.dynamics.step(t, &xs[t], &u)?;
        if out.next.iter().any(|v| !v.is_finite()) || u.iter().any(|v| !v.is_finite()) {
            return Err(OcpError::Diverged { node: t });
        }
        cost += cost_value(&problem.stage, t, &xs[t], &u, &out.aux);
        xs.push(out.next);
        us.push(u);
        auxs.push(out.aux);
    }
    cost += terminal_value(problem, &xs[n]);
    Ok(Trajectory { xs, us, auxs, cost })
}

fn increase(mu: f64, o: &SolverOptions) -> f64 {
    (mu * 10.0).max(o.mu_min)
}

fn decrease(mu: f64, o: &SolverOptions) -> f64 {
    let m = mu / 2.0;
    if m < o.mu_min {
        0.0
    } else {
        m
    }
}

/// Initial guess: the given controls, or zero controls (cold start).
pub fn initial_controls(problem: &OcpProblem, init: Option<&[DVector<f64>]>) -> Vec<DVector<f64>> {
    match init {
        Some(us) => us.to_vec(),
        None => vec![DVector::zeros(problem.nu()); problem.horizon],
    }
}

/// Regularized DDP with a backtracking line search.
pub fn solve(problem: &OcpProblem, init: Option<&[DVector<f64>]>, opts: &SolverOptions) -> Result<OcpSolution, OcpError> {
    problem.validate()?;
    let us = initial_controls(problem, init);
    let mut traj = rollout(problem, &us)?;
    let mut mu = opts.mu_init;
    let mut iterations = 0;
    let mut log = Vec::new();
    let mut gains = Gains { k: vec![DVector::zeros(problem.nu()); problem.horizon], kk: vec![DMatrix::zeros(problem.nu(), problem.nx()); problem.horizon] };
    let mut status = SolveStatus::IterationLimit;
    let mut lin = linearize(problem, &traj, opts.parallel)?;
    'outer: loop {
        let started = Instant::now();
        let bw = loop {
            match backward_pass(problem, &lin, mu) {
                Ok(bw) => break bw,
                Err(OcpError::NotPositiveDefinite { .. }) => {
                    mu = increase(mu, opts);
                    if mu > opts.mu_max {
                        status = SolveStatus::RegularizationLimit;
                        break 'outer;
                    }
                }
                Err(e) => return Err(e),
            }
        };
        gains = bw.gains.clone();
        if bw.grad_norm < opts.grad_tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let (mut last_alpha, mut last_expected, mut last_actual) = (0.0, 0.0, 0.0);
        for &alpha in &opts.alphas {
            let expected = -(alpha * bw.d1 + 0.5 * alpha * alpha * bw.d2);
            let Ok(cand) = forward_pass(problem, &traj, &bw.gains, alpha) else { continue };
            let actual = traj.cost - cand.cost;
            (last_alpha, last_expected, last_actual) = (alpha, expected, actual);
            let ok = if expected > 0.0 { actual / expected >= opts.accept_ratio } else { actual >= 0.0 };
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        let entry = |accepted: bool, cost: f64, started: Instant| IterationLog {
            iteration: iterations,
            cost,
            grad_norm: bw.grad_norm,
            mu,
            alpha: last_alpha,
            expected: last_expected,
            actual: last_actual,
            accepted,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        match accepted {
            Some(cand) => {
                let old = traj.cost;
                traj = cand;
                log.push(entry(true, traj.cost, started));
                mu = decrease(mu, opts);
                if (old - traj.cost).abs() <= opts.cost_tol * old.abs().max(1e-12) {
                    status = SolveStatus::Converged;
                    break;
                }
                lin = linearize(problem, &traj, opts.parallel)?;
            }
            None => {
                log.push(entry(false, traj.cost, started));
                mu = increase(mu, opts);
                if mu > opts.mu_max {
                    status = SolveStatus::RegularizationLimit;
                    break;
                }
            }
        }
    }
    Ok(OcpSolution {
        xs: traj.xs,
        us: traj.us,
        auxs: traj.auxs,
        k: gains.k,
        kk: gains.kk,
        cost: traj.cost,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        mu,
        log,
    })
}

/// Shift-by-one initial guess: drops node 0 and repeats the last control.
pub fn shift_warm_start(prev: &OcpSolution) -> Vec<DVector<f64>> {
    let n = prev.us.len();
    let mut us: Vec<_> = prev.us.iter().skip(1).cloned().collect();
    if let Some(last) = prev.us.last() {
        us.push(last.clone());
    }
    debug_assert_eq!(us.len(), n);
    us
}

/// Shifted states alongside the controls (node N duplicated).
pub fn shift_states(prev: &OcpSolution) -> Vec<DVector<f64>> {
    let mut xs: Vec<_> = prev.xs.iter().skip(1).cloned().collect();
    if let Some(last) = prev.xs.last() {
        xs.push(last.clone());
    }
    xs
}

/// Writes a solver log as CSV.
pub fn write_solver_log<W: Write>(log: &[IterationLog], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,cost,grad_norm,mu,alpha,expected,actual,accepted,wall_ms")?;
    for e in log {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{},{:e},{:e},{},{:.3}",
            e.iteration, e.cost, e.grad_norm, e.mu, e.alpha, e.expected, e.actual, e.accepted as u8, e.wall_ms
        )?;
    }
    Ok(())
}
