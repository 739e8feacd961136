//! Limiting SINR expressions for `N -> inf` with `K/N -> 0`, their
//! favorable-propagation versions, and the symmetric Rician case study.
//!
//! Limits carry no noise term. When the interference in a denominator
//! vanishes the SINR is reported as unbounded rather than as a raw infinity.

use nalgebra::DVector;

use crate::detequiv::{estimate_energy, mrt_normalizers, scaled, DetEquivReport, RzfTerms};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_inverse, hermitian_part, real_trace, CMat, C64};
use crate::montecarlo::Provenance;
use crate::precoding::Scheme;
use crate::scenario::{db_to_linear, GainTable, Geometry, KappaRule, LambdaRule, LosModel, Scenario, ScenarioConfig};

/// Largest LOS cross product accepted as favorable propagation.
pub const FAVORABLE_TOL: f64 = 1e-8;

/// Denominators at or below this fraction of their scale count as zero.
const UNBOUNDED_REL: f64 = 1e-12;

fn ratio(signal: f64, denominator: f64, scale: f64) -> (f64, bool) {
    if signal == 0.0 {
        (0.0, false)
    } else if denominator <= UNBOUNDED_REL * scale {
        (f64::INFINITY, true)
    } else {
        (signal / denominator, false)
    }
}

fn empty_report(scheme: Scheme, scenario: &Scenario, normalizer: Vec<f64>) -> DetEquivReport {
    let n = scenario.cells() * scenario.users();
    DetEquivReport {
        scheme,
        provenance: Provenance::Limit,
        users: scenario.users(),
        sinr: Vec::with_capacity(n),
        unbounded: Vec::with_capacity(n),
        signal: Vec::with_capacity(n),
        s_bar: Vec::with_capacity(n),
        contamination: Vec::with_capacity(n),
        noise: 0.0,
        normalizer,
        rzf: None,
    }
}

fn push(report: &mut DetEquivReport, signal: f64, s_bar: f64, contamination: f64, scale: f64) {
    let (g, unbounded) = ratio(signal, s_bar + contamination, scale);
    report.signal.push(signal);
    report.s_bar.push(s_bar);
    report.contamination.push(contamination);
    report.sinr.push(g);
    report.unbounded.push(unbounded);
}

fn check_premise(scenario: &Scenario) -> Result<()> {
    for j in 0..scenario.cells() {
        let max_cross = scenario.max_los_cross_product(j);
        if max_cross >= FAVORABLE_TOL {
            return Err(Error::PremiseViolation { cell: j, max_cross });
        }
    }
    Ok(())
}

/// MRT limit: intracell LOS cross terms plus pilot contamination.
pub fn mrt_limit_sinr(scenario: &Scenario) -> DetEquivReport {
    mrt_limit(scenario, true)
}

/// MRT limit under favorable propagation: pilot contamination only.
pub fn favorable_mrt(scenario: &Scenario) -> Result<DetEquivReport> {
    check_premise(scenario)?;
    Ok(mrt_limit(scenario, false))
}

fn mrt_limit(scenario: &Scenario, cross_terms: bool) -> DetEquivReport {
    let (cells, users) = (scenario.cells(), scenario.users());
    let phi = scenario.phi();
    let energy = estimate_energy(scenario);
    let theta = mrt_normalizers(&energy);
    let mut report = empty_report(Scheme::Mrt, scenario, theta.clone());
    for j in 0..cells {
        let g = scenario.los_gram(j);
        for k in 0..users {
            let signal = scaled(theta[j], energy[j][k].powi(2));
            let cross: f64 = if cross_terms {
                (0..users).filter(|&i| i != k).map(|i| g[(i, k)].norm_sqr()).sum()
            } else {
                0.0
            };
            let s_bar = scaled(theta[j], cross);
            let contamination: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| scaled(theta[l], phi[(l, j, k)].powi(2)))
                .sum();
            push(&mut report, signal, s_bar, contamination, signal);
        }
    }
    report
}

/// `(lambda I + Phi + G)^-1`.
fn limit_t_tilde(scenario: &Scenario, j: usize) -> Result<CMat> {
    let lambda = scenario.lambda()[j];
    let mut m = scenario.los_gram(j).clone();
    for (k, p) in scenario.phi_diag(j).iter().enumerate() {
        m[(k, k)] += C64::new(lambda + p, 0.0);
    }
    hermitian_inverse(m).map(|t| hermitian_part(&t))
}

/// RZF limit with `Ttilde = (lambda I + Phi + G)^-1`.
pub fn rzf_limit_sinr(scenario: &Scenario) -> Result<DetEquivReport> {
    let (cells, users) = (scenario.cells(), scenario.users());
    let kf = users as f64;
    let (d, phi) = (scenario.d(), scenario.phi());

    let mut t_diag = Vec::with_capacity(cells);
    let mut psi = Vec::with_capacity(cells);
    let mut varsigma = Vec::with_capacity(cells * users);
    // sum_{i != k} |[Ttilde_l]_ki|^2, what is left of x - lambda mu after
    // the signal and contamination parts cancel.
    let mut off_energy = Vec::with_capacity(cells * users);
    for l in 0..cells {
        let lambda = scenario.lambda()[l];
        let tt = limit_t_tilde(scenario, l)?;
        let p = scenario.phi_diag(l);
        let phi_m = CMat::from_diagonal(&DVector::from_iterator(users, p.iter().map(|x| C64::new(*x, 0.0))));
        let tgt = &tt * scenario.los_gram(l) * &tt;
        let tpt = &tt * &phi_m * &tt;
        psi.push(kf / (real_trace(&tpt) + real_trace(&tgt)));
        let diag: Vec<f64> = (0..users).map(|k| tt[(k, k)].re).collect();
        off_energy.extend(
            (0..users).map(|k| (0..users).filter(|&i| i != k).map(|i| tt[(k, i)].norm_sqr()).sum::<f64>()),
        );
        for k in 0..users {
            let t2 = diag[k] * diag[k];
            varsigma.push(tgt[(k, k)].re / (lambda * lambda * t2) + (tpt[(k, k)].re / t2 - p[k]) / (lambda * lambda));
        }
        t_diag.push(diag);
    }

    let mut xi = GainTable::zeros(cells, users);
    let mut mu = GainTable::zeros(cells, users);
    let mut report = empty_report(Scheme::Rzf, scenario, psi.clone());
    for j in 0..cells {
        for k in 0..users {
            let mut s_bar = 0.0;
            for l in 0..cells {
                let lambda = scenario.lambda()[l];
                let t = t_diag[l][k];
                let vs = varsigma[l * users + k];
                let (x, m) = if l == j {
                    let x = (d[(j, j, k)] - phi[(j, j, k)]) / lambda + 1.0 - lambda * t;
                    let m = (d[(j, j, k)] - phi[(j, j, k)] * (1.0 - lambda * lambda * t * t)) / (lambda * lambda)
                        + lambda * lambda * t * t * vs;
                    (x, m)
                } else {
                    let p2 = phi[(l, j, k)].powi(2);
                    let x = d[(l, j, k)] / lambda - t * p2 / lambda;
                    let m = (d[(l, j, k)] - 2.0 * p2 * t) / (lambda * lambda)
                        + p2 * (phi[(l, l, k)] / (lambda * lambda) + vs) * t * t;
                    (x, m)
                };
                xi[(l, j, k)] = x;
                mu[(l, j, k)] = m;
                let weight = if l == j { lambda * lambda } else { phi[(l, j, k)].powi(2) };
                s_bar += scaled(psi[l], weight * off_energy[l * users + k]);
            }
            let lt = scenario.lambda()[j] * t_diag[j][k];
            let signal = scaled(psi[j], (1.0 - lt).powi(2));
            let contamination: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| scaled(psi[l], (phi[(l, j, k)] * t_diag[l][k]).powi(2)))
                .sum();
            push(&mut report, signal, s_bar, contamination, signal);
        }
    }
    let nu_bar = scenario.lambda().iter().map(|l| 1.0 / (l * l)).collect();
    report.rzf = Some(RzfTerms {
        u_bar: t_diag
            .iter()
            .enumerate()
            .flat_map(|(l, t)| {
                let lambda = scenario.lambda()[l];
                t.iter().map(move |t| 1.0 / (lambda * t) - 1.0).collect::<Vec<_>>()
            })
            .collect(),
        xi,
        mu,
        nu_bar,
        varsigma,
    });
    Ok(report)
}

/// `phi_jjk + ||hbar_jjk||^2 / N` and `lambda_j + phi_jjk + ||hbar_jjk||^2 / N`.
fn favorable_terms(scenario: &Scenario) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let energy = estimate_energy(scenario);
    let shifted = energy
        .iter()
        .enumerate()
        .map(|(j, e)| e.iter().map(|x| scenario.lambda()[j] + x).collect())
        .collect();
    (energy, shifted)
}

fn favorable_psi(energy: &[Vec<f64>], shifted: &[Vec<f64>]) -> Vec<f64> {
    energy
        .iter()
        .zip(shifted)
        .map(|(e, s)| {
            let k = e.len() as f64;
            k / e.iter().zip(s).map(|(e, s)| e / (s * s)).sum::<f64>()
        })
        .collect()
}

/// RZF limit under favorable propagation, where `Ttilde` is diagonal.
pub fn favorable_rzf(scenario: &Scenario) -> Result<DetEquivReport> {
    check_premise(scenario)?;
    let (cells, users) = (scenario.cells(), scenario.users());
    let phi = scenario.phi();
    let (energy, shifted) = favorable_terms(scenario);
    let psi = favorable_psi(&energy, &shifted);
    let mut report = empty_report(Scheme::Rzf, scenario, psi.clone());
    for j in 0..cells {
        for k in 0..users {
            let signal = scaled(psi[j], (energy[j][k] / shifted[j][k]).powi(2));
            let contamination: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| scaled(psi[l], (phi[(l, j, k)] / shifted[l][k]).powi(2)))
                .sum();
            push(&mut report, signal, 0.0, contamination, signal);
        }
    }
    Ok(report)
}

/// The favorable RZF SINR with numerator and denominator both multiplied
/// by `(lambda_j + phi_jjk + ||hbar_jjk||^2 / N)^2`. Unbounded entries are +inf.
pub fn favorable_rzf_rescaled(scenario: &Scenario) -> Result<Vec<f64>> {
    check_premise(scenario)?;
    let (cells, users) = (scenario.cells(), scenario.users());
    let phi = scenario.phi();
    let (energy, shifted) = favorable_terms(scenario);
    let psi = favorable_psi(&energy, &shifted);
    let mut out = Vec::with_capacity(cells * users);
    for j in 0..cells {
        for k in 0..users {
            let num = scaled(psi[j], energy[j][k].powi(2));
            let den: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| scaled(psi[l], (shifted[j][k] / shifted[l][k]).powi(2) * phi[(l, j, k)].powi(2)))
                .sum();
            out.push(ratio(num, den, num).0);
        }
    }
    Ok(out)
}

/// Symmetric setup: intracell gain 1, intercell gain `alpha_x`, one Rician
/// factor, LOS directions orthogonal within each cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricCaseParams {
    pub kappa: f64,
    pub alpha_x: f64,
    pub cells: usize,
    pub users: usize,
    pub antennas: usize,
    /// Linear training SNR.
    pub rho_tr: f64,
    /// Linear downlink SNR.
    pub rho_dl: f64,
}

impl SymmetricCaseParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa.is_finite()
            && self.kappa >= 0.0
            && self.alpha_x.is_finite()
            && self.alpha_x >= 0.0
            && self.rho_tr > 0.0
            && self.rho_dl > 0.0
            && self.cells >= 1
            && self.users >= 1
            && self.antennas > self.users;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid symmetric case {self:?}")))
        }
    }

    /// `alpha (L - 1) + 1/(1 + kappa)`.
    pub fn l_bar(&self) -> f64 {
        self.alpha_x * (self.cells as f64 - 1.0) + 1.0 / (1.0 + self.kappa)
    }

    /// `rho_tr / (1 + rho_tr Lbar)`.
    pub fn nu(&self) -> f64 {
        self.rho_tr / (1.0 + self.rho_tr * self.l_bar())
    }

    /// `1/(1 + kappa) + kappa / nu`.
    pub fn tau(&self) -> f64 {
        1.0 / (1.0 + self.kappa) + self.kappa / self.nu()
    }

    fn k_over_n(&self) -> f64 {
        self.users as f64 / self.antennas as f64
    }

    pub fn a(&self) -> f64 {
        let (k, t, n) = (self.kappa, self.tau(), self.antennas as f64);
        (self.k_over_n() * self.l_bar() + 1.0 / (n * self.rho_dl)) * (1.0 + k) / t
            + self.k_over_n() / (t * t) * k / (1.0 + k)
    }

    pub fn b(&self) -> f64 {
        let (k, t) = (self.kappa, self.tau());
        self.l_bar() * (1.0 + k) / t + k / ((1.0 + k) * t * t)
    }

    /// `(Lbar / (N rho_dl)) (1 + kappa) / tau`.
    pub fn noise_term(&self) -> f64 {
        self.l_bar() / (self.antennas as f64 * self.rho_dl) * (1.0 + self.kappa) / self.tau()
    }

    /// `A / rho_tr + (K/N) Lbar B`.
    pub fn interference_term(&self) -> f64 {
        self.a() / self.rho_tr + self.k_over_n() * self.l_bar() * self.b()
    }

    /// `(alpha / tau^2)(Lbar - 1/(1 + kappa))`.
    pub fn contamination_term(&self) -> f64 {
        let t = self.tau();
        self.alpha_x / (t * t) * (self.l_bar() - 1.0 / (1.0 + self.kappa))
    }

    /// The same scenario expressed through the general model.
    pub fn instantiate(&self) -> Result<Scenario> {
        self.validate()?;
        let alpha = self.alpha_x;
        let gains = GainTable::from_fn(self.cells, self.users, |j, l, _| if j == l { 1.0 } else { alpha });
        Scenario::build(ScenarioConfig {
            cells: self.cells,
            users: self.users,
            antennas: self.antennas,
            pathloss_exponent: 0.0,
            rho_tr_db: 10.0 * self.rho_tr.log10(),
            rho_dl_db: 10.0 * self.rho_dl.log10(),
            kappa: KappaRule::Uniform(self.kappa),
            lambda: LambdaRule::KOverNRho,
            los_model: LosModel::DftOrthogonal,
            geometry: Geometry::ExplicitGains(gains),
            min_distance: 0.0,
            seed: 0,
        })
    }

    /// Reference parameters at SNRs given in dB.
    pub fn from_db(kappa: f64, alpha_x: f64, cells: usize, users: usize, antennas: usize, rho_tr_db: f64, rho_dl_db: f64) -> Self {
        Self {
            kappa,
            alpha_x,
            cells,
            users,
            antennas,
            rho_tr: db_to_linear(rho_tr_db),
            rho_dl: db_to_linear(rho_dl_db),
        }
    }
}

/// MRT SINR of every UE in the symmetric case, split as noise,
/// interference and pilot contamination.
pub fn symmetric_mrt_closed_form(params: &SymmetricCaseParams) -> f64 {
    1.0 / (params.noise_term() + params.interference_term() + params.contamination_term())
}

/// The same quantity written in terms of `nu` without `A` and `B`.
pub fn symmetric_mrt_compact_form(params: &SymmetricCaseParams) -> f64 {
    let (k, t, nu) = (params.kappa, params.tau(), params.nu());
    let n = params.antennas as f64;
    let noise = 1.0 / (nu * n * params.rho_dl) * (1.0 + k) / t;
    let interference = params.k_over_n() / nu * (params.l_bar() * (1.0 + k) / t + k / ((1.0 + k) * t * t));
    1.0 / (noise + interference + params.contamination_term())
}
