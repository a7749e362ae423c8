use serde::{Deserialize, Serialize};

use super::config::{ControllerKind, ModelKind, ScenarioConfig};
use super::gait::run_gait_paired;
use super::rig::run_rig_paired;
use super::SimError;
use crate::control::PairedSolve;

/// Warm against cold iteration counts over a closed-loop receding-horizon run.
/// Every problem the warm-started loop meets is also solved from the cold
/// initial guess, so both columns refer to identical problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub steps: Vec<BenchStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchStep {
    pub t: f64,
    pub warm_iterations: usize,
    pub cold_iterations: usize,
    pub warm_ms: f64,
    pub cold_ms: f64,
}

impl From<PairedSolve> for BenchStep {
    fn from(p: PairedSolve) -> Self {
        Self { t: p.t, warm_iterations: p.warm_iterations, cold_iterations: p.cold_iterations, warm_ms: p.warm_ms, cold_ms: p.cold_ms }
    }
}

impl BenchReport {
    /// Fraction of steps where the warm solve needed no more iterations than the cold one.
    pub fn fraction_not_worse(&self) -> f64 {
        self.fraction(|s| s.warm_iterations <= s.cold_iterations)
    }

    /// Fraction of steps where the warm solve needed strictly fewer iterations.
    pub fn fraction_better(&self) -> f64 {
        self.fraction(|s| s.warm_iterations < s.cold_iterations)
    }

    fn fraction(&self, f: impl Fn(&BenchStep) -> bool) -> f64 {
        if self.steps.is_empty() {
            return f64::NAN;
        }
        self.steps.iter().filter(|s| f(s)).count() as f64 / self.steps.len() as f64
    }

    pub fn mean(&self, f: impl Fn(&BenchStep) -> f64) -> f64 {
        self.steps.iter().map(f).sum::<f64>() / self.steps.len().max(1) as f64
    }

    pub fn table(&self) -> String {
        let mut s = format!("bench: {} ({} solves)\n  {:>8} {:>6} {:>6} {:>9} {:>9}\n", self.scenario, self.steps.len(), "t", "warm", "cold", "warm_ms", "cold_ms");
        for st in &self.steps {
            s.push_str(&format!(
                "  {:>8.3} {:>6} {:>6} {:>9.2} {:>9.2}\n",
                st.t, st.warm_iterations, st.cold_iterations, st.warm_ms, st.cold_ms
            ));
        }
        let (wi, ci) = (self.mean(|s| s.warm_iterations as f64), self.mean(|s| s.cold_iterations as f64));
        let (wm, cm) = (self.mean(|s| s.warm_ms), self.mean(|s| s.cold_ms));
        let ratio = |a: f64, b: f64| if b > 0.0 { format!("{:.2}", a / b) } else { "-".into() };
        s.push_str(&format!("  mean iterations  warm {wi:.2}  cold {ci:.2}  ratio {}\n", ratio(wi, ci)));
        s.push_str(&format!("  mean wall ms     warm {wm:.2}  cold {cm:.2}  ratio {}\n", ratio(wm, cm)));
        s.push_str(&format!("  warm <= cold on {:.0}% of steps, warm < cold on {:.0}%\n", 100.0 * self.fraction_not_worse(), 100.0 * self.fraction_better()));
        s
    }
}

/// Runs the scenario with the whole-body controller for at most `solves`
/// receding-horizon steps, pairing each warm solve with a cold one.
pub fn bench(cfg: &ScenarioConfig, solves: usize) -> Result<BenchReport, SimError> {
    cfg.validate()?;
    let mut c = cfg.clone();
    c.controller = ControllerKind::WholeBody;
    c.solver.warm_start = true;
    let span = solves as f64 * c.horizon.solve_every as f64 * c.dt;
    c.duration = c.duration.min(span);
    let (_, _, pairs) = match c.model {
        ModelKind::SagittalRig => run_rig_paired(&c, true)?,
        ModelKind::Swerve => run_gait_paired(&c, true)?,
    };
    Ok(BenchReport { scenario: c.name, steps: pairs.into_iter().take(solves).map(BenchStep::from).collect() })
}
