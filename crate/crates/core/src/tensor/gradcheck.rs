//! Central-difference gradient checking.

use super::{NodeId, Tape, Tensor, TensorError};

const REL_FLOOR: f64 = 1e-3;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, flat element index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the tape gradient of a scalar function of one tensor with central
/// differences. Returns `max_i |a_i - c_i| / max(|a_i| + |c_i|, 1e-3)`; the
/// floor keeps rounding noise on near-zero gradients from dominating.
pub fn finite_diff_check<F, E>(f: F, x: &Tensor, eps: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, E>,
    E: From<TensorError>,
{
    let report = finite_diff_check_many(|tape, ids| f(tape, ids[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_rel_error)
}

/// Multi-input variant of [`finite_diff_check`]: every input is registered as
/// a gradient leaf and every element is perturbed in turn.
pub fn finite_diff_check_many<F, E>(f: F, xs: &[Tensor], eps: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, E>,
    E: From<TensorError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::Contract(format!("eps {eps} outside [1e-7, 1e-3]")).into());
    }

    let eval = |inputs: &[Tensor]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &ids)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(
                TensorError::NumericDomain(format!("function value {v} is not finite")).into(),
            );
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = xs.iter().map(|t| tape.param(t.clone())).collect();
    let root = f(&mut tape, &ids)?;
    let v = tape.value(root).item()?;
    if !v.is_finite() {
        return Err(TensorError::NumericDomain(format!("function value {v} is not finite")).into());
    }
    let grads = tape.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut inputs = xs.to_vec();
    for (t, &id) in ids.iter().enumerate() {
        let analytic = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(xs[t].shape()));
        for i in 0..xs[t].len() {
            let orig = xs[t].data()[i];
            inputs[t].data_mut()[i] = orig + eps;
            let plus = eval(&inputs)?;
            inputs[t].data_mut()[i] = orig - eps;
            let minus = eval(&inputs)?;
            inputs[t].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (t, i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::vector(vec![0.5, -2.0, 3.0]);
        let x = Tensor::vector(vec![1.0, 0.25, -0.75]);
        let err = finite_diff_check(
            |tape: &mut Tape, v| {
                let c = tape.constant(w.clone());
                let p = tape.mul(v, c)?;
                Ok::<_, TensorError>(tape.sum(p))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn eps_outside_range_is_rejected() {
        let x = Tensor::vector(vec![1.0]);
        let r = finite_diff_check(
            |tape: &mut Tape, v| Ok::<_, TensorError>(tape.sum(v)),
            &x,
            1e-2,
        );
        assert!(matches!(r, Err(TensorError::Contract(_))));
    }

    #[test]
    fn non_finite_value_is_reported() {
        let x = Tensor::vector(vec![1.0]);
        let r = finite_diff_check(
            |tape: &mut Tape, v| {
                let s = tape.scale(v, f64::INFINITY);
                Ok::<_, TensorError>(tape.sum(s))
            },
            &x,
            1e-5,
        );
        assert!(matches!(r, Err(TensorError::NumericDomain(_))));
    }
}
