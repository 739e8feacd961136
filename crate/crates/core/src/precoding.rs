//! MRT and RZF precoders and their power normalizers.
//!
//! Normalizers are expectations over channel draws. They are estimated once
//! from dedicated draws ([`estimate_normalizer`]) and then frozen for the
//! SINR simulation.
//!
//! The RZF direction `(1/N) Q_j hhat_jjk` is computed through the K x K
//! co-resolvent, `Q_j Hhat_jj = Hhat_jj (Hhat_jj^H Hhat_jj / N + lambda I_K)^-1`,
//! which costs `O(N K^2 + K^3)` per cell. [`resolvent`] builds the N x N
//! matrix explicitly for diagnostics.

use std::fmt;

use nalgebra::Cholesky;
use rayon::prelude::*;

use crate::channel::{draw_block, EstimatedChannels};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::rng::{self, Domain};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Mrt,
    Rzf,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mrt => "mrt",
            Scheme::Rzf => "rzf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub scheme: Scheme,
    /// Columns are `g_jk`, one N x K matrix per cell.
    pub g: Vec<CMat>,
    /// `theta_j` (MRT) or `psi_j` (RZF).
    pub normalizer: Vec<f64>,
    /// Regularizers used (RZF only).
    pub lambda: Option<Vec<f64>>,
}

fn check_positive(name: &str, v: &[f64], cells: usize) -> Result<()> {
    if v.len() != cells {
        return Err(Error::InvalidArgument(format!("{name} needs {cells} values, got {}", v.len())));
    }
    match v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(x) => Err(Error::InvalidArgument(format!("{name} must be positive, got {x}"))),
        None => Ok(()),
    }
}

/// `g_jk = sqrt(theta_j) hhat_jjk`.
pub fn mrt_precoder(estimates: &EstimatedChannels, theta: &[f64]) -> Result<PrecoderSet> {
    check_positive("theta", theta, estimates.cells())?;
    let g = estimates
        .hhat
        .iter()
        .zip(theta)
        .map(|(h, t)| h * C64::new(t.sqrt(), 0.0))
        .collect();
    Ok(PrecoderSet {
        scheme: Scheme::Mrt,
        g,
        normalizer: theta.to_vec(),
        lambda: None,
    })
}

/// `U_j = (1/N) Q_j Hhat_jj`, whose columns are the unnormalized RZF directions.
pub fn rzf_directions(hhat: &CMat, lambda: f64) -> Result<CMat> {
    let (n, k) = hhat.shape();
    let nf = n as f64;
    let mut co = hhat.ad_mul(hhat) / C64::new(nf, 0.0);
    for i in 0..k {
        co[(i, i)] += C64::new(lambda, 0.0);
    }
    let chol = Cholesky::new(co).ok_or(Error::NotPositiveDefinite)?;
    // U^H = (1/N) Qtilde Hhat^H, Qtilde Hermitian.
    let rhs = hhat.adjoint();
    let sol = chol.solve(&rhs);
    Ok(sol.adjoint() / C64::new(nf, 0.0))
}

/// Dense `Q_j = (Hhat Hhat^H / N + lambda I_N)^-1` via Cholesky; `O(N^3)`.
pub fn resolvent(hhat: &CMat, lambda: f64) -> Result<CMat> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let n = hhat.nrows();
    let mut m = hhat * hhat.adjoint() / C64::new(n as f64, 0.0);
    for i in 0..n {
        m[(i, i)] += C64::new(lambda, 0.0);
    }
    crate::linalg::hermitian_inverse(m)
}

/// `g_jk = sqrt(psi_j) (1/N) Q_j hhat_jjk`.
pub fn rzf_precoder(estimates: &EstimatedChannels, lambda: &[f64], psi: &[f64]) -> Result<PrecoderSet> {
    check_positive("lambda", lambda, estimates.cells())?;
    check_positive("psi", psi, estimates.cells())?;
    let g = estimates
        .hhat
        .iter()
        .zip(lambda.iter().zip(psi))
        .map(|(h, (l, p))| Ok(rzf_directions(h, *l)? * C64::new(p.sqrt(), 0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecoderSet {
        scheme: Scheme::Rzf,
        g,
        normalizer: psi.to_vec(),
        lambda: Some(lambda.to_vec()),
    })
}

/// Unit-normalizer precoder for a scheme (MRT: `Hhat`, RZF: `(1/N) Q Hhat`).
pub fn unnormalized(estimates: &EstimatedChannels, scheme: Scheme, lambda: &[f64]) -> Result<PrecoderSet> {
    let ones = vec![1.0; estimates.cells()];
    match scheme {
        Scheme::Mrt => mrt_precoder(estimates, &ones),
        Scheme::Rzf => rzf_precoder(estimates, lambda, &ones),
    }
}

/// Per-cell `(1/K) sum_k ||g_jk||^2`.
pub fn average_power(p: &PrecoderSet) -> Vec<f64> {
    p.g.iter()
        .map(|g| g.norm_squared() / g.ncols() as f64)
        .collect()
}

/// Estimated power normalizers with their Monte Carlo spread.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub scheme: Scheme,
    /// `theta_j` or `psi_j`.
    pub values: Vec<f64>,
    /// Standard error of each value (delta method on the reciprocal).
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

impl Normalizer {
    pub fn relative_std_errors(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.std_errors)
            .map(|(v, s)| s / v)
            .collect()
    }
}

/// Reciprocal of the sample mean of `(1/K) sum_k ||.||^2` over `n_samples`
/// independent estimate draws, per cell. Draws use the scenario seed on a
/// stream domain separate from the SINR trials.
pub fn estimate_normalizer(scenario: &Scenario, scheme: Scheme, n_samples: usize) -> Result<Normalizer> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let seed = scenario.config().seed;
    let lambda = scenario.lambda();
    let powers: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream(seed, Domain::Normalizer, s as u64);
            let (_, est) = draw_block(scenario, &mut rng);
            unnormalized(&est, scheme, lambda).map(|p| average_power(&p))
        })
        .collect::<Result<_>>()?;

    let cells = scenario.cells();
    let n = n_samples as f64;
    let mut values = Vec::with_capacity(cells);
    let mut std_errors = Vec::with_capacity(cells);
    for j in 0..cells {
        let mean = powers.iter().map(|p| p[j]).sum::<f64>() / n;
        if !(mean > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell {j}: average precoder power is {mean}; normalizer undefined"
            )));
        }
        let var = if n_samples > 1 {
            powers.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        values.push(1.0 / mean);
        std_errors.push((var / n).sqrt() / (mean * mean));
    }
    Ok(Normalizer {
        scheme,
        values,
        std_errors,
        samples: n_samples,
    })
}
