//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Inverse of a Hermitian positive definite matrix through its Cholesky factor.
///
/// nalgebra takes complex square roots of the pivots without complaint, so
/// the pivots are checked here.
pub fn hermitian_inverse(m: CMat) -> Result<CMat> {
    let c = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
    let l = c.l_dirty();
    let pivots_ok = (0..l.nrows()).all(|i| {
        let p = l[(i, i)];
        p.re > 0.0 && p.re.is_finite() && p.im.abs() <= 1e-12 * p.re
    });
    if pivots_ok {
        Ok(c.inverse())
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Real trace of a matrix whose trace is known to be real.
pub fn real_trace(m: &CMat) -> f64 {
    m.trace().re
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Hermitian part `(M + M^H) / 2`, used to scrub rounding asymmetry.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
