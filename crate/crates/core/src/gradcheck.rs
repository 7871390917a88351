//! Central finite-difference gradient oracle.

/// Maximum relative error between `analytic` and central differences of `loss_fn`.
///
/// For each parameter `i` the reference is `(f(p + h e_i) - f(p - h e_i)) / 2h` and
/// the error is `|analytic_i - reference| / max(|reference|, 1e-6)`. The floor
/// keeps exactly-zero gradients (e.g. parameters a loss ignores) from turning
/// rounding noise of the differences into a large relative error.
pub fn finite_diff_check<F>(loss_fn: F, params: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let up = loss_fn(&probe);
        probe[i] = params[i] - step;
        let down = loss_fn(&probe);
        probe[i] = params[i];
        let reference = (up - down) / (2.0 * step);
        let err = (analytic[i] - reference).abs() / reference.abs().max(1e-6);
        worst = worst.max(err);
    }
    worst
}
