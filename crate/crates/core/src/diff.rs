//! Loss/gradient contract shared by all objectives, plus an independent
//! central-difference checker.

use crate::error::{Error, Result};
use crate::table::PosteriorTable;

/// A scalar loss together with its gradient. For the table-based losses the
/// gradient has one entry per `PosteriorTable` entry (same flat layout),
/// taken with respect to the free log-posterior values; entries for
/// unreachable states are zero.
#[derive(Clone, Debug)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossResult {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Clone, Copy, Debug)]
pub struct FiniteDiffReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// flat table index where the relative error peaks
    pub worst_index: usize,
    pub pass: bool,
}

/// Pushes a log-posterior gradient through the log-softmax Jacobian,
/// yielding the gradient w.r.t. unnormalized row logits:
/// `g_logit[y] = g[y] − p[y] · Σ_y' g[y']` per row.
pub fn chain_through_softmax(table: &PosteriorTable, grad: &[f64]) -> Result<Vec<f64>> {
    if grad.len() != table.num_entries() {
        return Err(Error::InvalidTable(format!(
            "gradient has {} entries for a table with {}",
            grad.len(),
            table.num_entries()
        )));
    }
    let outputs = table.vocab().num_outputs();
    let mut out = Vec::with_capacity(grad.len());
    for (g_row, p_row) in grad.chunks(outputs).zip(table.log_probs().chunks(outputs)) {
        let total: f64 = g_row.iter().sum();
        out.extend(
            g_row
                .iter()
                .zip(p_row)
                .map(|(g, lp)| g - lp.exp() * total),
        );
    }
    Ok(out)
}

/// Checks `loss_fn`'s gradient against central finite differences on every
/// coordinate of `table`.
///
/// Perturbations are applied to the raw log values without re-normalizing
/// the row: the gradient contract treats every entry as a free variable.
/// Relative error uses a unit floor, |a−n| / max(|a|, |n|, 1), so
/// near-zero coordinates are judged on absolute error.
pub fn finite_diff_check<F>(
    loss_fn: F,
    table: &PosteriorTable,
    step: f64,
    rel_tol: f64,
) -> Result<FiniteDiffReport>
where
    F: Fn(&PosteriorTable) -> Result<LossResult>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let base = loss_fn(table)?;
    if !base.value.is_finite() {
        return Err(Error::NonFiniteLoss(base.value));
    }
    if base.grad.len() != table.num_entries() {
        return Err(Error::InvalidTable(format!(
            "gradient has {} entries for a table with {}",
            base.grad.len(),
            table.num_entries()
        )));
    }

    let mut report = FiniteDiffReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_index: 0,
        pass: true,
    };
    for j in 0..table.num_entries() {
        let up = loss_fn(&table.perturbed(j, step))?;
        let down = loss_fn(&table.perturbed(j, -step))?;
        if !up.value.is_finite() || !down.value.is_finite() {
            return Err(Error::NonFiniteLoss(if up.value.is_finite() {
                down.value
            } else {
                up.value
            }));
        }
        let numeric = (up.value - down.value) / (2.0 * step);
        let analytic = base.grad[j];
        let abs_err = (analytic - numeric).abs();
        let rel_err = abs_err / analytic.abs().max(numeric.abs()).max(1.0);
        if abs_err > report.max_abs_err {
            report.max_abs_err = abs_err;
        }
        if rel_err > report.max_rel_err {
            report.max_rel_err = rel_err;
            report.worst_index = j;
        }
    }
    report.pass = report.max_rel_err <= rel_tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    #[test]
    fn constant_loss_has_zero_errors() {
        let v = Vocabulary::new(2).unwrap();
        let table = PosteriorTable::uniform(v, 1, 3).unwrap();
        let f = |t: &PosteriorTable| {
            Ok(LossResult {
                value: 4.25,
                grad: vec![0.0; t.num_entries()],
            })
        };
        let r = finite_diff_check(f, &table, 1e-5, 1e-5).unwrap();
        assert_eq!(r.max_abs_err, 0.0);
        assert_eq!(r.max_rel_err, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn quadratic_loss_passes() {
        // loss = ½ Σ x², grad = x: exactly representable by central differences
        let v = Vocabulary::new(2).unwrap();
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();
        let f = |t: &PosteriorTable| {
            let value = 0.5 * t.log_probs().iter().map(|x| x * x).sum::<f64>();
            Ok(LossResult {
                value,
                grad: t.log_probs().to_vec(),
            })
        };
        let r = finite_diff_check(f, &table, 1e-5, 1e-5).unwrap();
        assert!(r.pass, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn wrong_gradient_fails() {
        let v = Vocabulary::new(1).unwrap();
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();
        let f = |t: &PosteriorTable| {
            let value = t.log_probs().iter().sum::<f64>();
            // claims zero gradient for a linear loss
            Ok(LossResult {
                value,
                grad: vec![0.0; t.num_entries()],
            })
        };
        let r = finite_diff_check(f, &table, 1e-5, 1e-5).unwrap();
        assert!(!r.pass);
        assert!(r.max_abs_err > 0.5);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let v = Vocabulary::new(1).unwrap();
        let table = PosteriorTable::uniform(v, 1, 1).unwrap();
        let f = |t: &PosteriorTable| {
            Ok(LossResult {
                value: f64::NAN,
                grad: vec![0.0; t.num_entries()],
            })
        };
        assert!(matches!(
            finite_diff_check(f, &table, 1e-5, 1e-5),
            Err(Error::NonFiniteLoss(_))
        ));
    }
}
