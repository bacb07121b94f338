//! Numerical gradient verification by central finite differences.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{Tape, TensorId};

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` records the program on a fresh tape from leaves corresponding to
/// `params` (in order) and returns the scalar loss node. It must be
/// deterministic: any internal randomness (e.g. dropout masks) has to be
/// re-seeded identically on every call.
///
/// Returns the maximum relative error over all parameter entries, where the
/// relative error of an analytic/numeric pair `(a, b)` is
/// `|a - b| / max(1, |a|, |b|)`. `step` is the half-width of the central
/// difference (1e-5 is a good default for f64).
pub fn gradient_check<F>(build: F, params: &[Matrix], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    if step <= 0.0 {
        return Err(Error::Invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    // Reverse-mode gradients.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss_id = build(&mut tape, &ids)?;
    if tape.value(loss_id).shape() != (1, 1) {
        return Err(Error::Invalid(format!(
            "gradient_check requires a scalar loss, got {:?}",
            tape.value(loss_id).shape()
        )));
    }
    let grads = tape.backward(loss_id)?;

    // Forward-only evaluation used for the finite differences; leaves carry
    // no gradient flags so nothing is tracked.
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let ids: Vec<TensorId> = ps.iter().map(|p| t.leaf(p.clone(), false)).collect();
        let loss = build(&mut t, &ids)?;
        Ok(t.value(loss).get(0, 0))
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut max_rel: f64 = 0.0;
    for (pi, id) in ids.iter().enumerate() {
        let g_ad = grads.get(*id).cloned();
        let entries = params[pi].rows() * params[pi].cols();
        for e in 0..entries {
            let orig = work[pi].as_slice()[e];
            work[pi].as_mut_slice()[e] = orig + step;
            let up = eval(&work)?;
            work[pi].as_mut_slice()[e] = orig - step;
            let down = eval(&work)?;
            work[pi].as_mut_slice()[e] = orig;
            let g_fd = (up - down) / (2.0 * step);
            let g_an = g_ad.as_ref().map_or(0.0, |g| g.as_slice()[e]);
            let rel = (g_an - g_fd).abs() / 1.0f64.max(g_an.abs()).max(g_fd.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
