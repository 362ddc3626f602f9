//! First-order update rules.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateRule {
    Sgd,
    Momentum { beta: f64 },
    /// Adaptive rule with decayed squared-gradient and squared-update
    /// accumulators.
    Adadelta { rho: f64, eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `gamma` after every `every` updates.
    Step { every: usize, gamma: f64 },
    /// Linear interpolation from the base rate to `end` over `over` updates.
    Linear { end: f64, over: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub rule: UpdateRule,
    pub lr: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl OptimConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimConfig {
            rule: UpdateRule::Sgd,
            lr,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }

    /// Adadelta with learning rate 1.0, ρ = 0.9, ε = 1e-6.
    pub fn adadelta() -> Self {
        OptimConfig {
            rule: UpdateRule::Adadelta { rho: 0.9, eps: 1e-6 },
            lr: 1.0,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimConfig {
            rule: UpdateRule::Adam {
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Self {
        self.schedule = schedule;
        self
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig::adadelta()
    }
}

/// Per-parameter accumulators plus the update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<S> {
    pub config: OptimConfig,
    pub first: Vec<S>,
    pub second: Vec<S>,
    pub steps: usize,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(config: OptimConfig, len: usize) -> Self {
        OptimState {
            config,
            first: vec![S::zero(); len],
            second: vec![S::zero(); len],
            steps: 0,
        }
    }

    /// Learning rate used by the next update.
    pub fn learning_rate(&self) -> f64 {
        let base = self.config.lr;
        match self.config.schedule {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, gamma } => {
                base * gamma.powi((self.steps / every.max(1)) as i32)
            }
            LrSchedule::Linear { end, over } => {
                let t = (self.steps as f64 / over.max(1) as f64).min(1.0);
                base + (end - base) * t
            }
        }
    }
}

/// Applies one update in place. Nothing is modified when the gradient is
/// rejected.
pub fn update_step<S: Scalar>(params: &mut [S], grad: &[S], state: &mut OptimState<S>) -> Result<()> {
    if params.len() != grad.len() || state.first.len() != params.len() {
        return Err(Error::input(format!(
            "update shapes differ: params {}, grad {}, state {}",
            params.len(),
            grad.len(),
            state.first.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical(format!("non-finite gradient at index {i}")));
    }
    let lr = S::lit(state.learning_rate());
    let wd = state.config.weight_decay;
    let wd_s = S::lit(wd);
    let eff = |g: S, w: S| if wd == 0.0 { g } else { g + wd_s * w };
    match state.config.rule {
        UpdateRule::Sgd => {
            for (w, &g) in params.iter_mut().zip(grad) {
                *w = *w - lr * eff(g, *w);
            }
        }
        UpdateRule::Momentum { beta } => {
            let beta = S::lit(beta);
            for ((w, &g), buf) in params.iter_mut().zip(grad).zip(&mut state.first) {
                *buf = beta * *buf + eff(g, *w);
                *w = *w - lr * *buf;
            }
        }
        UpdateRule::Adadelta { rho, eps } => {
            let (rho, eps) = (S::lit(rho), S::lit(eps));
            let one_m = S::one() - rho;
            for (((w, &g), sq), upd) in params
                .iter_mut()
                .zip(grad)
                .zip(&mut state.first)
                .zip(&mut state.second)
            {
                let g = eff(g, *w);
                *sq = rho * *sq + one_m * g * g;
                let delta = (*upd + eps).sqrt() / (*sq + eps).sqrt() * g;
                *upd = rho * *upd + one_m * delta * delta;
                *w = *w - lr * delta;
            }
        }
        UpdateRule::Adam { beta1, beta2, eps } => {
            let t = (state.steps + 1) as i32;
            let c1 = S::lit(1.0 - beta1.powi(t));
            let c2 = S::lit(1.0 - beta2.powi(t));
            let (b1, b2, eps) = (S::lit(beta1), S::lit(beta2), S::lit(eps));
            for (((w, &g), m), v) in params
                .iter_mut()
                .zip(grad)
                .zip(&mut state.first)
                .zip(&mut state.second)
            {
                let g = eff(g, *w);
                *m = b1 * *m + (S::one() - b1) * g;
                *v = b2 * *v + (S::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
    state.steps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_one_step_is_exact() {
        let mut w = vec![1.0f64];
        let mut st = OptimState::new(OptimConfig::sgd(0.1), 1);
        update_step(&mut w, &[2.0], &mut st).unwrap();
        assert_eq!(w, vec![0.8]);
        assert_eq!(w[0], 1.0 - 0.1 * 2.0);
    }

    #[test]
    fn adadelta_matches_hand_recurrence() {
        // Hand execution with rho = 0.9, eps = 1e-6, lr = 1:
        // step 1, g = 1.0:  v = 0.1,           d = sqrt(1e-6)/sqrt(0.100001) * 1
        // step 2, g = -0.5: v = 0.09 + 0.025,  d from u after step 1
        // step 3, g = 2.0:  v = 0.9 v + 0.4
        let gs = [1.0f64, -0.5, 2.0];
        let mut w = vec![0.3f64];
        let mut st = OptimState::new(OptimConfig::adadelta(), 1);
        let (mut v, mut u, mut x) = (0.0f64, 0.0f64, 0.3f64);
        let mut traj = Vec::new();
        for g in gs {
            v = 0.9 * v + 0.1 * g * g;
            let d = (u + 1e-6f64).sqrt() / (v + 1e-6f64).sqrt() * g;
            u = 0.9 * u + 0.1 * d * d;
            x -= d;
            traj.push(x);
        }
        let mut got = Vec::new();
        for g in gs {
            update_step(&mut w, &[g], &mut st).unwrap();
            got.push(w[0]);
        }
        assert_eq!(got, traj);
        // Frozen values of the same recurrence.
        let frozen = [0.296_837_738_151_101_3, 0.298_922_868_013_095, 0.294_616_098_194_15];
        for (a, b) in got.iter().zip(frozen) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_accumulators() {
        let mut w = vec![0.5f64, -1.0];
        let mut st = OptimState::new(OptimConfig::adadelta(), 2);
        st.first = vec![0.2, 0.4];
        st.second = vec![0.1, 0.3];
        update_step(&mut w, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(w, vec![0.5, -1.0]);
        assert!((st.first[0] - 0.18).abs() < 1e-15);
        assert!((st.second[1] - 0.27).abs() < 1e-15);

        let mut st = OptimState::new(OptimConfig::sgd(0.3), 2);
        update_step(&mut w, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(w, vec![0.5, -1.0]);
    }

    #[test]
    fn rejects_non_finite_gradient_without_mutation() {
        let mut w = vec![1.0f64, 2.0];
        let mut st = OptimState::new(OptimConfig::sgd(0.1), 2);
        assert!(matches!(
            update_step(&mut w, &[0.1, f64::NAN], &mut st),
            Err(Error::Numerical(_))
        ));
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(st.steps, 0);
        assert!(update_step(&mut w, &[0.1], &mut st).is_err());
    }

    #[test]
    fn schedules() {
        let cfg = OptimConfig::sgd(1.0).with_schedule(LrSchedule::Step { every: 2, gamma: 0.5 });
        let mut st = OptimState::<f64>::new(cfg, 1);
        let mut rates = Vec::new();
        let mut w = vec![0.0];
        for _ in 0..5 {
            rates.push(st.learning_rate());
            update_step(&mut w, &[0.0], &mut st).unwrap();
        }
        assert_eq!(rates, vec![1.0, 1.0, 0.5, 0.5, 0.25]);
        let cfg = OptimConfig::sgd(0.05).with_schedule(LrSchedule::Linear { end: 0.001, over: 100 });
        let mut st = OptimState::<f64>::new(cfg, 1);
        st.steps = 100;
        assert!((st.learning_rate() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut w = vec![1.0f64];
        let mut st = OptimState::new(OptimConfig::adam(0.01), 1);
        update_step(&mut w, &[3.0], &mut st).unwrap();
        assert!((w[0] - 0.99).abs() < 1e-9);
    }
}
