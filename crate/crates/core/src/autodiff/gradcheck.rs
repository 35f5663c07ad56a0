use super::params::{GradSet, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub path: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub elements: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares analytic gradients against central differences for every element
/// of every parameter. `objective(params, want_grad)` returns the loss and,
/// when asked, the analytic gradients.
pub fn grad_check<F>(mut objective: F, params: &mut ParamStore, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, bool) -> Result<(f64, Option<GradSet>)>,
{
    let (l0, analytic) = objective(params, true)?;
    let (l1, _) = objective(params, false)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::Contract(format!(
            "objective is not deterministic: {l0} vs {l1}"
        )));
    }
    let analytic = analytic.ok_or_else(|| Error::Contract("objective returned no gradient".into()))?;
    let ids: Vec<_> = params.ids().collect();
    let mut report = Vec::with_capacity(ids.len());
    let mut overall = 0.0f64;
    for id in ids {
        let n = params.get(id).len();
        let mut check = ParamCheck {
            path: params.path(id).to_string(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
            elements: n,
        };
        for k in 0..n {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + cfg.step;
            let (lp, _) = objective(params, false)?;
            params.get_mut(id).data_mut()[k] = orig - cfg.step;
            let (lm, _) = objective(params, false)?;
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let a = analytic.get(id)[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(cfg.floor);
            if !rel.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at {}[{k}]", check.path)));
            }
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_index = k;
            }
            check.max_abs_err = check.max_abs_err.max(abs);
        }
        overall = overall.max(check.max_rel_err);
        report.push(check);
    }
    Ok(GradCheckReport {
        params: report,
        max_rel_err: overall,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Binder, Tape, Tensor};

    fn linear_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![2, 3], vec![0.1, -0.4, 0.7, 1.2, 0.3, -0.9]).unwrap())
            .unwrap();
        s
    }

    fn linear_objective(p: &ParamStore, want: bool) -> Result<(f64, Option<GradSet>)> {
        let mut tape = Tape::new();
        let mut b = Binder::new(p);
        let w = b.bind(&mut tape, p, p.id("w").unwrap());
        let x = tape.constant(vec![3, 1], vec![0.5, -1.5, 2.0])?;
        let y = tape.matmul(w, x)?;
        let loss = tape.sum(y);
        let l = tape.scalar(loss);
        if !want {
            return Ok((l, None));
        }
        let mut g = tape.backward(loss)?;
        Ok((l, Some(b.collect(p, &mut g))))
    }

    #[test]
    fn linear_model_matches() {
        let mut p = linear_store();
        let r = grad_check(linear_objective, &mut p, GradCheckConfig::default()).unwrap();
        assert!(r.passed());
        assert!(r.max_rel_err < 1e-9, "{}", r.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let mut p = linear_store();
        let bad = |p: &ParamStore, want: bool| {
            let (l, g) = linear_objective(p, want)?;
            Ok((
                l,
                g.map(|mut g| {
                    g.scale(1.5);
                    g
                }),
            ))
        };
        let r = grad_check(bad, &mut p, GradCheckConfig::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.worst().unwrap().path, "w");
    }

    #[test]
    fn nondeterministic_objective_rejected() {
        let mut p = linear_store();
        let mut calls = 0u32;
        let flaky = |p: &ParamStore, want: bool| {
            calls += 1;
            let (l, g) = linear_objective(p, want)?;
            Ok((l + calls as f64 * 1e-3, g))
        };
        let err = grad_check(flaky, &mut p, GradCheckConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
