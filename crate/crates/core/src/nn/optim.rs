use super::params::{GradientSet, ParameterSet};
use crate::error::{Error, Result};

/// Learning rates the experiments choose from.
pub const LEARNING_RATE_GRID: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.25];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    /// `w <- w - lr * g`
    Sgd,
    /// Bias-corrected first/second moment update.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl UpdateRule {
    pub fn adam() -> Self {
        UpdateRule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: rule, learning rate, per-parameter moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    rule: UpdateRule,
    learning_rate: f64,
    /// Rescale gradients whose global L2 norm exceeds this bound.
    max_grad_norm: Option<f64>,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(rule: UpdateRule, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        Ok(Optimizer {
            rule,
            learning_rate,
            max_grad_norm: None,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn with_max_grad_norm(mut self, bound: Option<f64>) -> Self {
        self.max_grad_norm = bound;
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients abort the step and leave
    /// parameters and state untouched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradientSet) -> Result<()> {
        grads.check_congruent(params)?;
        if let Some((block, offset)) = grads.first_non_finite() {
            let name = &params.iter().nth(block).expect("congruent").name;
            return Err(Error::NonFinite(format!("gradient of {name}[{offset}]")));
        }
        let scale = match self.max_grad_norm {
            Some(bound) => {
                let norm = grads.l2_norm();
                if norm > bound {
                    bound / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let lr = self.learning_rate;
        match self.rule {
            UpdateRule::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.blocks()) {
                    for (w, &gv) in p.values.iter_mut().zip(g) {
                        *w -= lr * scale * gv;
                    }
                }
            }
            UpdateRule::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.first.is_empty() {
                    self.first = grads.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
                    self.second = self.first.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads.blocks())
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, &gv), mv), vv) in
                        p.values.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        let gv = gv * scale;
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        if *mv != 0.0 {
                            *w -= lr * (*mv / c1) / ((*vv / c2).sqrt() + epsilon);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParameterSet {
        let mut ps = ParameterSet::new();
        let id = ps.add_zeros("w", 1, 1);
        ps.get_mut(id)[0] = value;
        ps
    }

    #[test]
    fn sgd_arithmetic() {
        let mut ps = single(1.0);
        let mut g = ps.zero_gradients();
        g.get_mut(ps.find("w").unwrap())[0] = 2.0;
        let mut opt = Optimizer::new(UpdateRule::Sgd, 0.1).unwrap();
        opt.step(&mut ps, &g).unwrap();
        assert!((ps.get(ps.find("w").unwrap())[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradients_leave_parameters_bit_identical() {
        for rule in [UpdateRule::Sgd, UpdateRule::adam()] {
            let mut ps = single(0.123456789);
            let before = ps.clone();
            let g = ps.zero_gradients();
            let mut opt = Optimizer::new(rule, 0.05).unwrap();
            for _ in 0..3 {
                opt.step(&mut ps, &g).unwrap();
            }
            assert_eq!(ps, before);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut ps = single(1.0);
        let mut g = ps.zero_gradients();
        g.get_mut(ps.find("w").unwrap())[0] = f64::NAN;
        let mut opt = Optimizer::new(UpdateRule::adam(), 0.1).unwrap();
        assert!(matches!(opt.step(&mut ps, &g), Err(Error::NonFinite(_))));
        assert_eq!(opt.steps(), 0);
        assert_eq!(ps, single(1.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut ps = single(1.0);
        let mut g = ps.zero_gradients();
        g.get_mut(ps.find("w").unwrap())[0] = 3.0;
        let mut opt = Optimizer::new(UpdateRule::adam(), 0.05).unwrap();
        opt.step(&mut ps, &g).unwrap();
        assert!((ps.get(ps.find("w").unwrap())[0] - 0.95).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(Optimizer::new(UpdateRule::Sgd, 0.0).is_err());
        assert!(Optimizer::new(UpdateRule::Sgd, f64::NAN).is_err());
    }
}
