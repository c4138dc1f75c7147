//! Central finite-difference verification of analytic gradients.

use super::params::{GradientSet, ParameterSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Maximum relative error on smooth entries.
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Relative disagreement of one-sided slopes that marks a ReLU kink inside the stencil.
    pub kink: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-6,
            kink: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries whose stencil straddled a kink; verified against the one-sided slope instead.
    pub kinks: usize,
    /// Largest relative error among smooth entries.
    pub worst: f64,
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares `analytic` against central differences of `objective`, perturbing
/// every scalar of the model's parameters (reached through `params`) in turn.
/// Fails on the first mismatching entry.
///
/// When the central difference disagrees, the entry passes only if the two
/// one-sided slopes disagree with each other (a kink) and the analytic value
/// matches one of them.
pub fn check_gradients<M, P, F>(
    model: &mut M,
    params: P,
    analytic: &GradientSet,
    config: &GradCheckConfig,
    mut objective: F,
) -> Result<GradCheckReport>
where
    P: Fn(&mut M) -> &mut ParameterSet,
    F: FnMut(&M) -> Result<f64>,
{
    analytic.check_congruent(params(model))?;
    let centre = objective(model)?;
    let mut report = GradCheckReport::default();
    let rel = |a: f64, b: f64| relative_error(a, b, config.floor);
    for p in 0..params(model).len() {
        let len = params(model).iter().nth(p).map_or(0, |x| x.values.len());
        for k in 0..len {
            let original = value(params(model), p, k);
            set(params(model), p, k, original + config.step);
            let plus = objective(model)?;
            set(params(model), p, k, original - config.step);
            let minus = objective(model)?;
            set(params(model), p, k, original);
            report.checked += 1;

            let a = analytic.blocks()[p][k];
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = rel(a, numeric);
            if err <= config.tolerance {
                report.worst = report.worst.max(err);
                continue;
            }
            let right = (plus - centre) / config.step;
            let left = (centre - minus) / config.step;
            if rel(right, left) > config.kink && rel(a, right).min(rel(a, left)) <= config.kink {
                report.kinks += 1;
                continue;
            }
            let name = &params(model).iter().nth(p).expect("in range").name;
            return Err(Error::InvalidArgument(format!(
                "{name}[{k}]: analytic {a:e}, numeric {numeric:e}, one-sided {right:e} / {left:e}"
            )));
        }
    }
    Ok(report)
}

fn value(ps: &ParameterSet, p: usize, k: usize) -> f64 {
    ps.iter().nth(p).expect("in range").values[k]
}

fn set(ps: &mut ParameterSet, p: usize, k: usize, v: f64) {
    ps.iter_mut().nth(p).expect("in range").values[k] = v;
}
