//! Small catalog of linear problems used by the CLI and the test suites.

use alloc::{sync::Arc, vec, vec::Vec};

use crate::fraccore::{HistoryFunction, MemoryOperatorSpec};
use crate::solver::ProblemSpec;
use crate::{Error, Result};

/// Max absolute row sum of a row-major square matrix.
pub fn inf_norm(mat: &[f64], n: usize) -> f64 {
    mat.chunks(n).map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn mat_vec(mat: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += mat[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `D^α x = -λ x`, solved by `x0 E_α(-λ t^α)`.
pub fn relaxation(alpha: f64, lambda: f64, x0: f64, horizon: f64) -> ProblemSpec {
    ProblemSpec::new(
        alpha,
        vec![x0],
        horizon,
        Arc::new(move |_t: f64, x: &[f64], _d: &[f64], _m: &[f64], out: &mut [f64]| out[0] = -lambda * x[0]),
    )
    .with_lipschitz(lambda.abs().max(f64::MIN_POSITIVE))
}

/// `D^α x = A x + B x(t - τ) + c`; `b = None` drops the delay.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub alpha: f64,
    pub a: Vec<f64>,
    pub b: Option<(Vec<f64>, f64)>,
    pub c: Vec<f64>,
    pub x0: Vec<f64>,
    pub horizon: f64,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Lipschitz constant `max(‖A‖∞, ‖B‖∞)`.
    pub fn lipschitz(&self) -> f64 {
        let n = self.dim();
        let la = inf_norm(&self.a, n);
        let lb = self.b.as_ref().map_or(0.0, |(b, _)| inf_norm(b, n));
        la.max(lb)
    }

    pub fn problem(&self, history: Option<HistoryFunction>) -> Result<ProblemSpec> {
        let n = self.dim();
        if self.a.len() != n * n || self.c.len() != n {
            return Err(Error::Shape("linear system matrix or offset has the wrong size".into()));
        }
        if let Some((b, _)) = &self.b {
            if b.len() != n * n {
                return Err(Error::Shape("delay matrix has the wrong size".into()));
            }
        }
        let a = self.a.clone();
        let c = self.c.clone();
        let bm = self.b.as_ref().map(|(b, _)| b.clone());
        let rhs = move |_t: f64, x: &[f64], _d: &[f64], m: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&c);
            mat_vec(&a, x, out);
            if let Some(b) = &bm {
                mat_vec(b, m, out);
            }
        };
        let mut p = ProblemSpec::new(self.alpha, self.x0.clone(), self.horizon, Arc::new(rhs));
        if let Some((_, tau)) = &self.b {
            p = p.with_memory(MemoryOperatorSpec::DiscreteDelay { tau: *tau });
        }
        if let Some(h) = history {
            p = p.with_history(h);
        }
        let l = self.lipschitz();
        if l > 0.0 {
            p = p.with_lipschitz(l);
        }
        Ok(p)
    }
}
