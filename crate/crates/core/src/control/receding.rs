use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DVector, Vector3};

use super::{ControlError, FeedbackPolicy, LocomotionMode, NodeHold};
use crate::ocp::{shift_warm_start, solve, OcpProblem, OcpSolution, SolverOptions};
use crate::swerve::{SwerveMapper, WheelCommand};

/// Builds the optimal-control problem for the current measured state.
pub trait ProblemBuilder {
    fn build(&self, x0: &DVector<f64>, t: f64, mode: LocomotionMode) -> Result<OcpProblem, ControlError>;

    /// Controls used when there is nothing to warm start from. `None` means zeros.
    fn initial_guess(&self, _problem: &OcpProblem, _mode: LocomotionMode) -> Option<Vec<DVector<f64>>> {
        None
    }
}

/// Body twist reached after the first node of a top-down swerve solution
/// (state `[x, y, θ, v_x, v_y, ω]`), i.e. the first control integrated with
/// explicit Euler.
pub fn twist_command(sol: &OcpSolution) -> Option<Vector3<f64>> {
    let x1 = sol.xs.get(1)?;
    (x1.len() == 6).then(|| Vector3::new(x1[3], x1[4], x1[5]))
}

/// Outcome of one receding-horizon step.
#[derive(Clone, Debug)]
pub struct RhOutput {
    /// Policy to apply from now on (the previous one when degraded).
    pub policy: Arc<FeedbackPolicy>,
    /// Policy start time; the LFC evaluates it at `t - start`.
    pub start: f64,
    pub wheels: Option<[WheelCommand; 4]>,
    pub iterations: usize,
    pub cost: f64,
    pub converged: bool,
    pub degraded: bool,
    pub warm: bool,
    pub wall_ms: f64,
}

/// Iterations and wall time of one receding-horizon problem solved both
/// warm (as used by the loop) and cold (from the builder's initial guess).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedSolve {
    pub t: f64,
    pub warm_iterations: usize,
    pub cold_iterations: usize,
    pub warm_ms: f64,
    pub cold_ms: f64,
    pub warm_cost: f64,
    pub cold_cost: f64,
}

/// Warm-started re-solve loop. Each step shifts the previous solution by one
/// node and re-solves; a failed or non-converged solve keeps the previous
/// policy (if it acts on the same controls) and is flagged as degraded.
pub struct RecedingHorizon {
    pub options: SolverOptions,
    pub warm_start: bool,
    /// Hold applied to every policy produced.
    pub hold: NodeHold,
    /// Twist-to-wheel mapper used in wheeled mode on swerve problems.
    pub mapper: Option<SwerveMapper>,
    /// Also solve every problem cold and record the pair in `pairs`.
    pub paired_cold: bool,
    pub pairs: Vec<PairedSolve>,
    prev: Option<OcpSolution>,
    policy: Option<(Arc<FeedbackPolicy>, f64)>,
    pub solves: usize,
    pub degraded_steps: usize,
    pub consecutive_degraded: usize,
}

impl RecedingHorizon {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            options,
            warm_start: true,
            hold: NodeHold::ZeroOrder,
            mapper: None,
            paired_cold: false,
            pairs: Vec::new(),
            prev: None,
            policy: None,
            solves: 0,
            degraded_steps: 0,
            consecutive_degraded: 0,
        }
    }

    pub fn policy(&self) -> Option<(&Arc<FeedbackPolicy>, f64)> {
        self.policy.as_ref().map(|(p, t)| (p, *t))
    }

    pub fn last_solution(&self) -> Option<&OcpSolution> {
        self.prev.as_ref()
    }

    /// Drops the stored solution so that the next step starts cold.
    pub fn reset_warm_start(&mut self) {
        self.prev = None;
    }

    pub fn rh_step<B: ProblemBuilder + ?Sized>(
        &mut self,
        builder: &B,
        x: &DVector<f64>,
        t: f64,
        mode: LocomotionMode,
    ) -> Result<RhOutput, ControlError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite("measured state"));
        }
        let problem = builder.build(x, t, mode)?;
        let shifted = match &self.prev {
            // A one-node horizon has nothing to shift.
            Some(prev) if self.warm_start && problem.horizon > 1 && prev.us.len() == problem.horizon && prev.us.first().map(|u| u.len()) == Some(problem.nu()) => {
                Some(shift_warm_start(prev))
            }
            _ => None,
        };
        let warm = shifted.is_some();
        let cold_init = builder.initial_guess(&problem, mode);
        let started = Instant::now();
        let result = solve(&problem, shifted.as_deref().or(cold_init.as_deref()), &self.options);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        if self.paired_cold {
            let (cold_iterations, cold_cost, cold_ms) = if warm {
                let started = Instant::now();
                let cold = solve(&problem, cold_init.as_deref(), &self.options);
                let ms = started.elapsed().as_secs_f64() * 1e3;
                cold.map_or((self.options.max_iter, f64::NAN, ms), |s| (s.iterations, s.cost, ms))
            } else {
                // The loop itself started cold.
                result.as_ref().map_or((self.options.max_iter, f64::NAN, wall_ms), |s| (s.iterations, s.cost, wall_ms))
            };
            let (warm_iterations, warm_cost) = result.as_ref().map_or((self.options.max_iter, f64::NAN), |s| (s.iterations, s.cost));
            self.pairs.push(PairedSolve { t, warm_iterations, cold_iterations, warm_ms: wall_ms, cold_ms, warm_cost, cold_cost });
        }
        self.solves += 1;
        let (iterations, cost, converged, fresh) = match result {
            Ok(sol) => {
                let fresh = FeedbackPolicy::from_solution(&sol, problem.dt).ok().filter(|p| p.is_finite()).map(|p| p.with_hold(self.hold));
                let out = (sol.iterations, sol.cost, sol.converged, fresh);
                if sol.cost.is_finite() {
                    self.prev = Some(sol);
                }
                out
            }
            Err(_) => (0, f64::NAN, false, None),
        };
        let degraded = !converged || fresh.is_none();
        match (degraded, fresh) {
            (false, Some(p)) => {
                self.policy = Some((Arc::new(p), t));
                self.consecutive_degraded = 0;
            }
            (true, fresh) => {
                self.degraded_steps += 1;
                self.consecutive_degraded += 1;
                let usable = self.policy.as_ref().is_some_and(|(p, _)| p.nu() == problem.nu() && p.s_des[0].len() == problem.nx());
                if !usable {
                    // Nothing to fall back on (first solve or the control space
                    // changed with the mode): take what the solver produced.
                    let p = fresh.ok_or(ControlError::NoPolicy)?;
                    self.policy = Some((Arc::new(p), t));
                }
            }
            (false, None) => unreachable!(),
        }
        let (policy, start) = self.policy.clone().expect("policy set above");
        let wheels = match (&mut self.mapper, mode, self.prev.as_ref().and_then(twist_command)) {
            (Some(mapper), LocomotionMode::Wheeled, Some(xi)) if !degraded => Some(mapper.command(&xi)?),
            _ => None,
        };
        Ok(RhOutput { policy, start, wheels, iterations, cost, converged, degraded, warm, wall_ms })
    }
}
