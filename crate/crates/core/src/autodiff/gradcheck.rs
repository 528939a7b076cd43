//! Central-difference gradient verification (64-bit only).

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Worst coordinate found by [`grad_check_many`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    /// Max relative error over coordinates whose gradient is at least
    /// [`RESOLVABLE_GRADIENT`] in magnitude.
    pub resolved_rel_error: f64,
    /// Max absolute error over the remaining, smaller coordinates.
    pub unresolved_abs_error: f64,
}

/// Below this size a central difference of an O(1) function is dominated by
/// roundoff (about 1e-11 in f64), so a relative comparison says nothing.
pub const RESOLVABLE_GRADIENT: f64 = 1e-6;

/// Max relative error between the analytic gradient of a scalar function and
/// central differences, over every coordinate of `point`.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let report = grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(point), epsilon)?;
    Ok(report.max_rel_error)
}

/// [`grad_check`] over several input tensors at once.
pub fn grad_check_many<F>(f: F, points: &[Tensor<f64>], epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Contract(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let eval = |pts: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_of(&g, out)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    scalar_of(&g, out)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> =
        vars.iter().zip(points).map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape()))).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
        resolved_rel_error: 0.0,
        unresolved_abs_error: 0.0,
    };
    let mut pts = points.to_vec();
    for (ti, an) in analytic.iter().enumerate() {
        for c in 0..pts[ti].numel() {
            let orig = pts[ti].data()[c];
            pts[ti].data_mut()[c] = orig + epsilon;
            let plus = eval(&pts)?;
            pts[ti].data_mut()[c] = orig - epsilon;
            let minus = eval(&pts)?;
            pts[ti].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = an.data()[c];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if a.abs().max(numeric.abs()) >= RESOLVABLE_GRADIENT {
                report.resolved_rel_error = report.resolved_rel_error.max(rel);
            } else {
                report.unresolved_abs_error = report.unresolved_abs_error.max((a - numeric).abs());
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, c);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn scalar_of(g: &Graph<f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.numel() != 1 {
        return Err(Error::Contract(format!("function output must be scalar, got shape {:?}", t.shape())));
    }
    Ok(t.item())
}
