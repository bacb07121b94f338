//! Adam optimizer with coupled L2 weight decay, and Glorot initialization.

use rand::distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// First/second-moment state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    /// Fresh state (zero moments) for a parameter of the given shape, with
    /// the standard Adam constants beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `param` given `grad`.
    ///
    /// Weight decay is coupled: `decay * param` is added to the gradient
    /// before the moment updates (classic Adam-with-L2, not AdamW). With a
    /// zero gradient and zero decay the parameter is unchanged.
    pub fn step(&mut self, param: &mut Matrix, grad: &Matrix, lr: f64, decay: f64) -> Result<()> {
        if param.shape() != self.m.shape() || grad.shape() != self.m.shape() {
            return Err(Error::Shape(format!(
                "adam step: state is {:?} but param is {:?} and grad is {:?}",
                self.m.shape(),
                param.shape(),
                grad.shape()
            )));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let (m, v) = (self.m.as_mut_slice(), self.v.as_mut_slice());
        let p = param.as_mut_slice();
        let g = grad.as_slice();
        for i in 0..p.len() {
            let gi = g[i] + decay * p[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
            let m_hat = m[i] / b1t;
            let v_hat = v[i] / b2t;
            p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Apply one Adam step to a set of parameters in lockstep.
///
/// `params`, `grads` and `states` must have equal lengths; a missing gradient
/// (`None`) is treated as all-zero, which still advances that state's clock
/// and applies weight decay.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Option<Matrix>],
    states: &mut [AdamState],
    lr: f64,
    decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != states.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} states",
            params.len(),
            grads.len(),
            states.len()
        )));
    }
    for ((param, grad), state) in params.iter_mut().zip(grads).zip(states.iter_mut()) {
        match grad {
            Some(g) => state.step(param, g, lr, decay)?,
            None => {
                let zero = Matrix::zeros(param.rows(), param.cols());
                state.step(param, &zero, lr, decay)?;
            }
        }
    }
    Ok(())
}

/// Glorot (Xavier) uniform initialization: entries drawn i.i.d. from
/// `U[-s, s]` with `s = sqrt(6 / (rows + cols))`, in row-major order so the
/// draw sequence is reproducible.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid(format!(
            "glorot_init requires positive dimensions, got {rows}x{cols}"
        )));
    }
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-s, s)
        .map_err(|e| Error::Invalid(format!("glorot_init: bad uniform bounds: {e}")))?;
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = dist.sample(rng);
    }
    Ok(m)
}
