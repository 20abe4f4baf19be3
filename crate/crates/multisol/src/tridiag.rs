//! Symmetric tridiagonal systems.
//!
//! Everything radial in this crate reduces to symmetric tridiagonal linear
//! algebra: the stiffness matrix of the weighted Dirichlet energy, the
//! electrostatic screening system, the descent preconditioner and the
//! Newton polish of the shooting oracle. An LDL^T factorization without
//! pivoting is exact for the SPD cases and adequate for the (nearly
//! diagonally dominant) Newton Jacobians; a fallback error is returned if a
//! pivot collapses.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag[i]` on the diagonal, `off[i]`
/// coupling rows `i` and `i+1`.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// y = A x
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// LDL^T factorization. Fails if a pivot falls below `1e-300` in
    /// magnitude (structurally singular input).
    pub fn factor(&self) -> Result<LdlFactor> {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut di = self.diag[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if di.abs() < 1e-300 || !di.is_finite() {
                return Err(Error::SingularSystem {
                    context: "LDL^T pivot collapse",
                });
            }
            d[i] = di;
            if i + 1 < n {
                l[i] = self.off[i] / di;
            }
        }
        Ok(LdlFactor { d, l })
    }
}

/// LDL^T factors of a [`SymTridiag`].
#[derive(Debug, Clone)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    /// Solve A x = b in place-free form.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // forward: L z = b
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        #[allow(clippy::needless_range_loop)]
        // diagonal
        for i in 0..n {
            x[i] /= self.d[i];
        }
        // backward: L^T x = z
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}
