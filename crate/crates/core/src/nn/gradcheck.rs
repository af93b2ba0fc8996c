use super::{GradientTape, Mlp, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters whose true gradient
/// is (numerically) zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over all parameters.
    pub max_rel_error: f64,
    /// Flat index of the parameter attaining `max_rel_error`.
    pub worst_param: usize,
    /// Largest relative error over input coordinates.
    pub input_max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

fn objective(net: &Mlp, input: &[f64], batch: usize, cotangent: &[f64]) -> Result<f64> {
    let y = net.forward_batch(input, batch)?;
    Ok(y.iter().zip(cotangent).map(|(a, b)| a * b).sum())
}

/// Checks `backward` against central finite differences of `sum(output)`.
pub fn grad_check(net: &Mlp, input: &[f64], tolerance: f64) -> Result<GradCheckReport> {
    let batch = input.len() / net.input_dim().max(1);
    let cotangent = vec![1.0; batch * net.output_dim()];
    let trace = net.forward_trace(input, batch)?;
    let tape = net.backward(&trace, &cotangent)?;
    compare_with_finite_differences(net, input, &cotangent, &tape, tolerance)
}

/// Compares a supplied gradient tape against finite differences of
/// `sum(output * cotangent)`.
pub fn compare_with_finite_differences(
    net: &Mlp,
    input: &[f64],
    cotangent: &[f64],
    tape: &GradientTape,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let batch = input.len() / net.input_dim().max(1);
    let analytic = tape.flat();
    let mut probe = net.clone();
    let mut max_rel_error: f64 = 0.0;
    let mut worst_param = 0;
    for (index, &a) in analytic.iter().enumerate() {
        let orig = probe.param(index);
        probe.set_param(index, orig + FD_STEP);
        let up = objective(&probe, input, batch, cotangent)?;
        probe.set_param(index, orig - FD_STEP);
        let down = objective(&probe, input, batch, cotangent)?;
        probe.set_param(index, orig);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(a, numeric);
        if err > max_rel_error {
            max_rel_error = err;
            worst_param = index;
        }
    }
    let mut input_max_rel_error: f64 = 0.0;
    if tape.input.len() == input.len() {
        let mut x = input.to_vec();
        for k in 0..x.len() {
            let orig = x[k];
            x[k] = orig + FD_STEP;
            let up = objective(net, &x, batch, cotangent)?;
            x[k] = orig - FD_STEP;
            let down = objective(net, &x, batch, cotangent)?;
            x[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            input_max_rel_error = input_max_rel_error.max(relative_error(tape.input[k], numeric));
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        input_max_rel_error,
        tolerance,
        passed: max_rel_error < tolerance && input_max_rel_error < tolerance,
    })
}
