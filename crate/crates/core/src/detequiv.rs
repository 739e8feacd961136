//! Deterministic equivalents of the MRT and RZF SINRs.
//!
//! Everything here depends on the channel statistics only: the gain tables,
//! `Phi_jj = diag(phi_jj1, ..., phi_jjK)` and the LOS Gram matrix
//! `G_j = Hbar_jj^H Hbar_jj / N`.
//!
//! The RZF equivalents need, per cell, the positive solution `(delta,
//! delta_tilde)` of
//!
//! ```text
//! delta       = (1/N) tr T,          T  = (lambda (1 + delta_tilde) I_N + Hbar D Hbar^H / N)^-1
//! delta_tilde = (1/N) tr Phi Ttilde, Ttilde = (lambda (I_K + delta Phi) + G / (1 + delta_tilde))^-1
//! ```
//!
//! with `D = (I_K + delta Phi)^-1`. Writing `c = lambda (1 + delta_tilde)`,
//! Woodbury gives `T = (I - A M A^H) / c` with `A = Hbar / sqrt(N)` and
//! `M = (c D^-1 + G)^-1 = Ttilde / (1 + delta_tilde)`, so all traces over
//! `T` reduce to K x K quantities:
//!
//! ```text
//! tr T   = (N - tr MG) / c
//! tr T^2 = (N - 2 tr MG + tr MGMG) / c^2
//! tr T^2 A D^2 Phi A^H = tr MGMPhi
//! ```
//!
//! The dense N x N `T` is only formed for small arrays, where it is kept for
//! inspection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_inverse, hermitian_part, real_trace, trace_of_product, CMat, C64};
use crate::montecarlo::{ergodic_rates, Provenance, RateReport, UeRate};
use crate::precoding::Scheme;
use crate::scenario::{GainTable, Scenario};

/// Arrays at least this large never materialize the N x N matrix `T`.
pub const DENSE_T_LIMIT: usize = 256;

/// Per-cell inputs of the fixed-point system.
#[derive(Debug, Clone)]
pub struct CellStatistics {
    pub antennas: usize,
    /// Diagonal of `Phi_jj`.
    pub phi: Vec<f64>,
    /// `Hbar_jj^H Hbar_jj / N`.
    pub gram: CMat,
    /// `Hbar_jj` (N x K), needed only for the dense `T`.
    pub los: Option<CMat>,
}

impl CellStatistics {
    pub fn from_scenario(scenario: &Scenario, cell: usize) -> Self {
        let n = scenario.antennas();
        Self {
            antennas: n,
            phi: scenario.phi_diag(cell),
            gram: scenario.los_gram(cell).clone(),
            los: (n < DENSE_T_LIMIT).then(|| scenario.los_matrix(cell)),
        }
    }

    pub fn users(&self) -> usize {
        self.phi.len()
    }

    fn phi_matrix(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.users(),
            self.phi.iter().map(|p| C64::new(*p, 0.0)),
        ))
    }

    /// `(lambda (I + delta Phi) + G / (1 + delta_tilde))^-1`.
    pub fn t_tilde(&self, lambda: f64, delta: f64, delta_tilde: f64) -> Result<CMat> {
        let mut m = self.gram.clone() / C64::new(1.0 + delta_tilde, 0.0);
        for (k, p) in self.phi.iter().enumerate() {
            m[(k, k)] += C64::new(lambda * (1.0 + delta * p), 0.0);
        }
        hermitian_inverse(m).map(|t| hermitian_part(&t))
    }

    /// Right-hand sides of the two fixed-point equations at `(delta, delta_tilde)`.
    pub fn fixed_point_map(&self, lambda: f64, delta: f64, delta_tilde: f64) -> Result<(f64, f64)> {
        let tt = self.t_tilde(lambda, delta, delta_tilde)?;
        Ok((self.delta_rhs(lambda, delta_tilde, &tt), self.delta_tilde_rhs(&tt)))
    }

    fn delta_rhs(&self, lambda: f64, delta_tilde: f64, tt: &CMat) -> f64 {
        let n = self.antennas as f64;
        let c = lambda * (1.0 + delta_tilde);
        let tr_mg = trace_of_product(tt, &self.gram).re / (1.0 + delta_tilde);
        (n - tr_mg) / (c * n)
    }

    fn delta_tilde_rhs(&self, tt: &CMat) -> f64 {
        let n = self.antennas as f64;
        self.phi
            .iter()
            .enumerate()
            .map(|(k, p)| p * tt[(k, k)].re)
            .sum::<f64>()
            / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop once the largest relative change of a damped update falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new value in each update.
    pub damping: f64,
    /// Starting `(delta, delta_tilde)`; defaults to `(1/lambda, 1/lambda)`.
    pub init: Option<(f64, f64)>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            damping: 0.5,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub cell: usize,
    pub lambda: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    /// Dense `T_j`, present when `N < DENSE_T_LIMIT`.
    pub t: Option<CMat>,
    pub t_tilde: CMat,
    /// `(1/N) tr T^2`.
    pub theta_aux: f64,
    /// `(1/N) tr (Phi Ttilde)^2`.
    pub theta_tilde_aux: f64,
    /// `(1/N^2) tr T^2 Hbar D^2 Phi Hbar^H`.
    pub f: f64,
    /// `(1 - F)^2 - lambda^2 theta_aux theta_tilde_aux`.
    pub big_delta: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn rel_change(new: f64, old: f64) -> f64 {
    let diff = (new - old).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / new.abs().max(old.abs())
    }
}

/// Largest relative defect of the two fixed-point equations.
pub fn fixed_point_residual(stats: &CellStatistics, lambda: f64, delta: f64, delta_tilde: f64) -> Result<f64> {
    let (d, dt) = stats.fixed_point_map(lambda, delta, delta_tilde)?;
    Ok(rel_change(d, delta).max(rel_change(dt, delta_tilde)))
}

impl FixedPointSolution {
    /// Completes a solution from converged `(delta, delta_tilde)`.
    pub fn assemble(
        stats: &CellStatistics,
        cell: usize,
        lambda: f64,
        delta: f64,
        delta_tilde: f64,
        iterations: usize,
    ) -> Result<Self> {
        let n = stats.antennas as f64;
        let tt = stats.t_tilde(lambda, delta, delta_tilde)?;
        let c = lambda * (1.0 + delta_tilde);
        let m = &tt / C64::new(1.0 + delta_tilde, 0.0);
        let mg = &m * &stats.gram;
        let tr_mg = real_trace(&mg);
        let tr_mgmg = trace_of_product(&mg, &mg).re;
        let theta_aux = (n - 2.0 * tr_mg + tr_mgmg) / (c * c * n);
        let phi = stats.phi_matrix();
        let pt = &phi * &tt;
        let theta_tilde_aux = trace_of_product(&pt, &pt).re / n;
        let f = trace_of_product(&mg, &(&m * &phi)).re / n;
        let big_delta = (1.0 - f).powi(2) - lambda * lambda * theta_aux * theta_tilde_aux;
        let t = match &stats.los {
            Some(hbar) if stats.antennas < DENSE_T_LIMIT => Some(dense_t(hbar, &stats.phi, lambda, delta, delta_tilde)?),
            _ => None,
        };
        let residual = fixed_point_residual(stats, lambda, delta, delta_tilde)?;
        Ok(Self {
            cell,
            lambda,
            delta,
            delta_tilde,
            t,
            t_tilde: tt,
            theta_aux,
            theta_tilde_aux,
            f,
            big_delta,
            residual,
            iterations,
        })
    }

    /// `nu_bar = theta_aux / Delta`.
    pub fn nu_bar(&self) -> f64 {
        self.theta_aux / self.big_delta
    }

    pub fn t_tilde_diag(&self, k: usize) -> f64 {
        self.t_tilde[(k, k)].re
    }
}

/// `(lambda (1 + delta_tilde) I_N + Hbar D Hbar^H / N)^-1` formed explicitly.
pub fn dense_t(hbar: &CMat, phi: &[f64], lambda: f64, delta: f64, delta_tilde: f64) -> Result<CMat> {
    let (n, k) = hbar.shape();
    let scaled = DMatrix::from_fn(n, k, |i, m| hbar[(i, m)] / (1.0 + delta * phi[m]));
    let mut t_inv = scaled * hbar.adjoint() / C64::new(n as f64, 0.0);
    for i in 0..n {
        t_inv[(i, i)] += C64::new(lambda * (1.0 + delta_tilde), 0.0);
    }
    hermitian_inverse(hermitian_part(&t_inv)).map(|t| hermitian_part(&t))
}

/// Damped Picard iteration on a cell's statistics.
pub fn solve_cell(stats: &CellStatistics, cell: usize, lambda: f64, options: &FixedPointOptions) -> Result<FixedPointSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let w = options.damping;
    let (mut delta, mut delta_tilde) = options.init.unwrap_or((1.0 / lambda, 1.0 / lambda));
    for it in 1..=options.max_iter {
        let tt = stats.t_tilde(lambda, delta, delta_tilde)?;
        let delta_new = (1.0 - w) * delta + w * stats.delta_rhs(lambda, delta_tilde, &tt);
        let tt = stats.t_tilde(lambda, delta_new, delta_tilde)?;
        let delta_tilde_new = (1.0 - w) * delta_tilde + w * stats.delta_tilde_rhs(&tt);
        let change = rel_change(delta_new, delta).max(rel_change(delta_tilde_new, delta_tilde));
        delta = delta_new;
        delta_tilde = delta_tilde_new;
        if change < options.tol {
            return FixedPointSolution::assemble(stats, cell, lambda, delta, delta_tilde, it);
        }
    }
    Err(Error::NonConvergence {
        cell,
        iterations: options.max_iter,
        residual: fixed_point_residual(stats, lambda, delta, delta_tilde)?,
    })
}

/// Fixed point of cell `cell` at regularizer `lambda`.
pub fn solve_fixed_point(
    scenario: &Scenario,
    cell: usize,
    lambda: f64,
    options: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    solve_cell(&CellStatistics::from_scenario(scenario, cell), cell, lambda, options)
}

/// Fixed points of every cell at the scenario's regularizers.
pub fn solve_all(scenario: &Scenario, options: &FixedPointOptions) -> Result<Vec<FixedPointSolution>> {
    (0..scenario.cells())
        .map(|j| solve_fixed_point(scenario, j, scenario.lambda()[j], options))
        .collect()
}

/// RZF-only intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct RzfTerms {
    /// `u_bar_jk`, indexed `j * K + k`.
    pub u_bar: Vec<f64>,
    /// `xi_ljk` at `(l, j, k)`.
    pub xi: GainTable,
    /// `mu_ljk` at `(l, j, k)`.
    pub mu: GainTable,
    /// `nu_bar_l` per cell.
    pub nu_bar: Vec<f64>,
    /// `varsigma_lk`, indexed `l * K + k`.
    pub varsigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetEquivReport {
    pub scheme: Scheme,
    pub provenance: Provenance,
    pub users: usize,
    /// `gamma_bar_jk`, indexed `j * K + k`; +inf where `unbounded`.
    pub sinr: Vec<f64>,
    pub unbounded: Vec<bool>,
    /// Numerator of the SINR.
    pub signal: Vec<f64>,
    /// `s_bar_jk`.
    pub s_bar: Vec<f64>,
    /// Pilot-contamination part of the denominator.
    pub contamination: Vec<f64>,
    /// Noise part of the denominator (`1/(N rho_dl)`, zero for limits).
    pub noise: f64,
    /// `theta_bar_j` (MRT) or `psi_bar_j` (RZF).
    pub normalizer: Vec<f64>,
    pub rzf: Option<RzfTerms>,
}

impl DetEquivReport {
    pub fn sinr_of(&self, j: usize, k: usize) -> f64 {
        self.sinr[j * self.users + k]
    }

    pub fn to_rate_report(&self) -> RateReport {
        let users = self
            .sinr
            .iter()
            .enumerate()
            .map(|(u, &g)| {
                let (j, k) = (u / self.users, u % self.users);
                if self.unbounded[u] {
                    UeRate::unbounded(j, k, self.signal[u])
                } else {
                    UeRate::new(j, k, g, self.signal[u], self.s_bar[u] + self.contamination[u])
                }
            })
            .collect();
        ergodic_rates(RateReport::new(self.scheme, self.provenance, users))
    }
}

/// `weight * x`, except that a zero `x` stays zero even for an infinite
/// weight (a cell without estimate energy has an infinite normalizer).
pub(crate) fn scaled(weight: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        weight * x
    }
}

/// `phi_jjk + (1/N) ||hbar_jjk||^2` per cell and UE.
pub(crate) fn estimate_energy(scenario: &Scenario) -> Vec<Vec<f64>> {
    (0..scenario.cells())
        .map(|j| {
            let g = scenario.los_gram(j);
            (0..scenario.users())
                .map(|k| scenario.phi()[(j, j, k)] + g[(k, k)].re)
                .collect()
        })
        .collect()
}

/// `theta_bar_j = (1/K sum_k (phi_jjk + ||hbar_jjk||^2 / N))^-1`.
pub(crate) fn mrt_normalizers(energy: &[Vec<f64>]) -> Vec<f64> {
    energy
        .iter()
        .map(|e| e.len() as f64 / e.iter().sum::<f64>())
        .collect()
}

/// MRT deterministic equivalent.
///
/// The LOS self-interference `|hbar_jji^H hbar_jjk|^2` enters only for
/// `i != k`; the `i = k` contribution belongs to the signal term that is
/// subtracted in the SINR denominator.
pub fn mrt_det_sinr(scenario: &Scenario) -> DetEquivReport {
    let (cells, users) = (scenario.cells(), scenario.users());
    let n = scenario.antennas() as f64;
    let (d, phi) = (scenario.d(), scenario.phi());
    let energy = estimate_energy(scenario);
    let theta = mrt_normalizers(&energy);
    let noise = 1.0 / (n * scenario.rho_dl());

    let mut report = DetEquivReport {
        scheme: Scheme::Mrt,
        provenance: Provenance::DeterministicEquivalent,
        users,
        sinr: Vec::with_capacity(cells * users),
        unbounded: vec![false; cells * users],
        signal: Vec::with_capacity(cells * users),
        s_bar: Vec::with_capacity(cells * users),
        contamination: Vec::with_capacity(cells * users),
        noise,
        normalizer: theta.clone(),
        rzf: None,
    };
    for j in 0..cells {
        let g = scenario.los_gram(j);
        let phi_sum: f64 = (0..users).map(|i| phi[(j, j, i)]).sum();
        for k in 0..users {
            let mut diffuse = 0.0;
            for l in 0..cells {
                let e: f64 = energy[l].iter().sum();
                diffuse += scaled(theta[l], d[(l, j, k)] * e);
            }
            let cross: f64 = (0..users).filter(|&i| i != k).map(|i| g[(i, k)].norm_sqr()).sum();
            let s_bar = diffuse / n + scaled(theta[j], g[(k, k)].re * phi_sum / n + cross);
            let contamination: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| scaled(theta[l], phi[(l, j, k)].powi(2)))
                .sum();
            let signal = scaled(theta[j], energy[j][k].powi(2));
            report.signal.push(signal);
            report.s_bar.push(s_bar);
            report.contamination.push(contamination);
            report.sinr.push(signal / (noise + s_bar + contamination));
        }
    }
    report
}

/// Per-cell RZF quantities shared by every UE.
struct RzfCell {
    lambda: f64,
    delta: f64,
    nu_bar: f64,
    psi_bar: f64,
    t_diag: Vec<f64>,
    u_bar: Vec<f64>,
    varsigma: Vec<f64>,
}

fn rzf_cell(scenario: &Scenario, fp: &FixedPointSolution) -> Result<RzfCell> {
    let l = fp.cell;
    let users = scenario.users();
    if !(fp.big_delta > 0.0) {
        return Err(Error::DegenerateDelta {
            cell: l,
            delta: fp.big_delta,
        });
    }
    let lambda = fp.lambda;
    let gram = scenario.los_gram(l);
    let tt = &fp.t_tilde;
    let phi = scenario.phi_diag(l);
    let phi_m = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        users,
        phi.iter().map(|p| C64::new(*p, 0.0)),
    ));
    let tgt = tt * gram * tt;
    let tpt = tt * &phi_m * tt;
    let nu_bar = fp.nu_bar();
    let one_minus_f = 1.0 - fp.f;
    let opd2 = (1.0 + fp.delta_tilde).powi(2);

    let tr_phi_tt2 = trace_of_product(&(&phi_m * tt), tt).re;
    let tr_tgt = real_trace(&tgt);
    let kf = users as f64;
    let inv_psi = lambda * lambda * fp.theta_aux / fp.big_delta * tr_phi_tt2 / kf
        + one_minus_f / (fp.big_delta * opd2) * tr_tgt / kf;

    let t_diag: Vec<f64> = (0..users).map(|k| tt[(k, k)].re).collect();
    let u_bar = t_diag.iter().map(|t| 1.0 / (lambda * t) - 1.0).collect();
    let varsigma = (0..users)
        .map(|k| {
            let t = t_diag[k];
            one_minus_f / fp.big_delta * tgt[(k, k)].re / (lambda * lambda * t * t * opd2)
                + nu_bar * (tpt[(k, k)].re / (t * t) - phi[k])
        })
        .collect();
    Ok(RzfCell {
        lambda,
        delta: fp.delta,
        nu_bar,
        psi_bar: 1.0 / inv_psi,
        t_diag,
        u_bar,
        varsigma,
    })
}

/// RZF deterministic equivalent from converged per-cell fixed points.
pub fn rzf_det_sinr(scenario: &Scenario, fixed_points: &[FixedPointSolution]) -> Result<DetEquivReport> {
    let (cells, users) = (scenario.cells(), scenario.users());
    if fixed_points.len() != cells || fixed_points.iter().enumerate().any(|(j, fp)| fp.cell != j) {
        return Err(Error::InvalidArgument("need one fixed point per cell, in cell order".into()));
    }
    let n = scenario.antennas() as f64;
    let (d, phi) = (scenario.d(), scenario.phi());
    let per_cell = fixed_points
        .iter()
        .map(|fp| rzf_cell(scenario, fp))
        .collect::<Result<Vec<_>>>()?;
    let noise = 1.0 / (n * scenario.rho_dl());

    let mut xi = GainTable::zeros(cells, users);
    let mut mu = GainTable::zeros(cells, users);
    let mut sinr = Vec::with_capacity(cells * users);
    let mut signal_v = Vec::with_capacity(cells * users);
    let mut s_bar_v = Vec::with_capacity(cells * users);
    let mut contamination_v = Vec::with_capacity(cells * users);
    for j in 0..cells {
        for k in 0..users {
            let mut total = 0.0;
            let mut contamination = 0.0;
            for (l, c) in per_cell.iter().enumerate() {
                let t = c.t_diag[k];
                let lt = c.lambda * t;
                let (x, m) = if l == j {
                    let x = c.delta * (d[(j, j, k)] - phi[(j, j, k)]) + 1.0 - lt;
                    let m = c.nu_bar * (d[(j, j, k)] - phi[(j, j, k)] * (1.0 - lt * lt)) + lt * lt * c.varsigma[k];
                    (x, m)
                } else {
                    let p = phi[(l, j, k)];
                    let x = d[(l, j, k)] * c.delta - lt * (p * c.delta).powi(2);
                    let m = d[(l, j, k)] * c.nu_bar
                        - p * p * c.delta * lt
                            * (2.0 * c.nu_bar - c.delta * lt * (phi[(l, l, k)] * c.nu_bar + c.varsigma[k]));
                    contamination += scaled(c.psi_bar, (p * c.delta / (1.0 + c.u_bar[k])).powi(2));
                    (x, m)
                };
                xi[(l, j, k)] = x;
                mu[(l, j, k)] = m;
                total += scaled(c.psi_bar, x - c.lambda * m);
            }
            let own = &per_cell[j];
            let ratio = own.u_bar[k] / (1.0 + own.u_bar[k]);
            let signal = scaled(own.psi_bar, ratio * ratio);
            let s_bar = total - signal - contamination;
            signal_v.push(signal);
            s_bar_v.push(s_bar);
            contamination_v.push(contamination);
            sinr.push(signal / (noise + s_bar + contamination));
        }
    }
    Ok(DetEquivReport {
        scheme: Scheme::Rzf,
        provenance: Provenance::DeterministicEquivalent,
        users,
        unbounded: vec![false; sinr.len()],
        sinr,
        signal: signal_v,
        s_bar: s_bar_v,
        contamination: contamination_v,
        noise,
        normalizer: per_cell.iter().map(|c| c.psi_bar).collect(),
        rzf: Some(RzfTerms {
            u_bar: per_cell.iter().flat_map(|c| c.u_bar.iter().copied()).collect(),
            xi,
            mu,
            nu_bar: per_cell.iter().map(|c| c.nu_bar).collect(),
            varsigma: per_cell.iter().flat_map(|c| c.varsigma.iter().copied()).collect(),
        }),
    })
}

/// Solves all fixed points with `options` and evaluates the RZF equivalent.
pub fn rzf_det_sinr_solved(scenario: &Scenario, options: &FixedPointOptions) -> Result<DetEquivReport> {
    let fps = solve_all(scenario, options)?;
    rzf_det_sinr(scenario, &fps)
}
