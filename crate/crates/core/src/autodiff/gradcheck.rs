//! Central finite-difference verification of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Options for [`check_gradients`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Absolute floor in the relative-error denominator.
    pub floor: f64,
    /// Check at most this many evenly strided entries per parameter.
    pub max_entries_per_param: Option<usize>,
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance,
            floor: 1e-5,
            max_entries_per_param: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward gradients of `build`'s scalar output against central
/// finite differences, parameter by parameter.
///
/// `build` receives a fresh tape and one leaf per named parameter (same order)
/// and must return a scalar loss.
pub fn check_gradients<F>(
    params: &[(String, Tensor<f64>)],
    build: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars)?;
        tape.check_scalar(loss)?;
        Ok(tape.value(loss)[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(_, t)| tape.leaf(t.clone(), true))
        .collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradCheckReport {
        params: Vec::new(),
        max_rel_error: 0.0,
        tolerance: opts.tolerance,
    };
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let n = tensor.numel();
        let analytic: Vec<f64> = match grads.get(vars[pi]) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; n],
        };
        let stride = match opts.max_entries_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        for i in (0..n).step_by(stride) {
            let orig = values[pi].data()[i];
            values[pi].data_mut()[i] = orig + opts.step;
            let up = eval(&values)?;
            values[pi].data_mut()[i] = orig - opts.step;
            let down = eval(&values)?;
            values[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            worst = worst.max(relative_error(analytic[i], numeric, opts.floor));
            checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.params.push(ParamCheck {
            name: name.clone(),
            checked,
            max_rel_error: worst,
        });
    }
    Ok(report)
}
