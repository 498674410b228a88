//! Central finite-difference verification of reverse-mode gradients.

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Denominator floor for the relative error, so near-zero gradients are
    /// compared on an absolute scale.
    pub floor: f64,
    /// Check at most this many entries per parameter (evenly strided).
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: FD_STEP,
            floor: 1e-4,
            max_entries_per_param: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
    pub entries_checked: usize,
    pub params_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(store: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> Result<Var>,
{
    let mut g = Graph::with_params(store);
    let out = f(&mut g)?;
    Ok(g.scalar_value(out))
}

/// Compares reverse-mode gradients of the scalar `f` against central finite
/// differences for every non-frozen parameter in `store`.
pub fn grad_check<F>(store: &mut ParamStore<f64>, f: F, tol: f64) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> Result<Var>,
{
    grad_check_with(store, f, tol, &GradCheckOptions::default())
}

pub fn grad_check_with<F>(
    store: &mut ParamStore<f64>,
    f: F,
    tol: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::with_params(store);
        let out = f(&mut g)?;
        g.backward(out)?
    };
    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| !p.frozen).map(|(id, _)| id).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
        params_checked: 0,
        tol,
        passed: true,
    };
    for id in ids {
        let name = store.get(id).name.clone();
        let n = store.value(id).numel();
        let analytic: Vec<f64> = match grads.get(id) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; n],
        };
        if let Some(bad) = analytic.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::Numeric(format!("non-finite gradient at {name}[{bad}]")));
        }
        let stride = match opts.max_entries_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for idx in (0..n).step_by(stride) {
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + opts.step;
            let plus = eval(store, &f)?;
            store.value_mut(id).data_mut()[idx] = orig - opts.step;
            let minus = eval(store, &f)?;
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            if !numeric.is_finite() {
                return Err(TensorError::Numeric(format!(
                    "non-finite finite difference at {name}[{idx}]"
                )));
            }
            let rel = relative_error(analytic[idx], numeric, opts.floor);
            report.entries_checked += 1;
            if report.worst.as_ref().map_or(true, |w| rel > w.rel_error) {
                report.max_rel_error = rel;
                report.worst = Some(Mismatch {
                    param: name.clone(),
                    index: idx,
                    analytic: analytic[idx],
                    numeric,
                    rel_error: rel,
                });
            }
        }
        report.params_checked += 1;
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn square_function() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::scalar(3.0));
        let grads = {
            let mut g = Graph::with_params(&store);
            let x = g.param(w);
            let y = g.mul(x, x).unwrap();
            g.backward(y).unwrap()
        };
        assert_eq!(grads.get(w).unwrap().data()[0], 6.0);
        let report = grad_check(
            &mut store,
            |g| {
                let x = g.param(w);
                g.mul(x, x)
            },
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        let worst = report.worst.unwrap();
        assert!((worst.numeric - 6.0).abs() < 1e-8);
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::scalar(2.0));
        let frozen = store.add("f", Tensor::scalar(5.0));
        store.set_frozen(frozen, true);
        let report = grad_check(
            &mut store,
            |g| {
                let a = g.param(w);
                let b = g.param(frozen);
                g.mul(a, b)
            },
            1e-8,
        )
        .unwrap();
        assert_eq!(report.params_checked, 1);
    }
}
