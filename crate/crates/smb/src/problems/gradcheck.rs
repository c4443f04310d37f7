//! Central finite-difference validation of analytic gradients.

use crate::core::{evaluate, Batch, OracleError, ParamGroups, StochasticOracle};

/// Relative step used for central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub group: String,
    /// `|g_fd - g_analytic| / max(|g_fd|, |g_analytic|, 1e-12)` in the
    /// Euclidean norm over the group.
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub problem: String,
    pub checks: Vec<GroupCheck>,
    pub max_rel_err: f64,
}

/// Compares the oracle's analytic batch gradient against central finite
/// differences of the batch loss, coordinate by coordinate, with per-group
/// norm-relative errors.
///
/// The step for coordinate `i` is `step_scale * max(1, |x_i|)`.
pub fn finite_difference_check<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &ParamGroups,
    batch: &Batch,
    step_scale: f64,
) -> Result<GradCheckReport, OracleError> {
    let base = evaluate(oracle, x, batch)?;
    let mut checks = Vec::with_capacity(x.n_groups());
    let mut max_rel_err = 0.0f64;

    let mut probe = x.clone();
    for gi in 0..x.n_groups() {
        let n = x.group(gi).len();
        let mut diff_sq = 0.0;
        let mut fd_sq = 0.0;
        for j in 0..n {
            let orig = x.group(gi)[j];
            let h = step_scale * orig.abs().max(1.0);

            probe.group_mut(gi).as_mut_slice()[j] = orig + h;
            let plus = evaluate(oracle, &probe, batch)?.loss;
            probe.group_mut(gi).as_mut_slice()[j] = orig - h;
            let minus = evaluate(oracle, &probe, batch)?.loss;
            probe.group_mut(gi).as_mut_slice()[j] = orig;

            let fd = (plus - minus) / (2.0 * h);
            let analytic = base.grads[gi][j];
            diff_sq += (fd - analytic) * (fd - analytic);
            fd_sq += fd * fd;
        }
        let analytic_norm = base.grads[gi].norm();
        let rel_err = diff_sq.sqrt() / analytic_norm.max(fd_sq.sqrt()).max(1e-12);
        max_rel_err = max_rel_err.max(rel_err);
        checks.push(GroupCheck { group: x.names()[gi].clone(), rel_err });
    }

    Ok(GradCheckReport { problem: oracle.name().to_string(), checks, max_rel_err })
}
