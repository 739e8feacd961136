//! Simulation of the per-UE downlink SINR
//!
//! ```text
//! gamma_jk = |E[h_jjk^H g_jk]|^2
//!            / (1/rho_dl + sum_{l,i} E|h_ljk^H g_li|^2 - |E[h_jjk^H g_jk]|^2)
//! ```
//!
//! and the ergodic rate `log2(1 + gamma_jk)`. Each trial is one coherence
//! block with fresh channels, pilots and noise. Trials run in parallel but
//! every trial has its own generator stream and results are reduced in trial
//! order, so reports are bit-identical for a given seed.

use rayon::prelude::*;

use crate::channel::{draw_block, ChannelRealization};
use crate::error::{Error, Result};
use crate::linalg::{CompensatedSum, C64};
use crate::precoding::{estimate_normalizer, mrt_precoder, rzf_precoder, Normalizer, PrecoderSet, Scheme};
use crate::rng::{self, Domain};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub trials: usize,
    /// Trials per batch for batch-means standard errors.
    pub batch_size: usize,
    /// Draws for the power-normalizer pass.
    pub normalizer_samples: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            trials: 2000,
            batch_size: 50,
            normalizer_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    MonteCarlo,
    DeterministicEquivalent,
    Limit,
}

/// Per-UE entry of a [`RateReport`]. Powers are in the normalized units of
/// the SINR expression (signal and interference share the `1/rho_dl` scale).
#[derive(Debug, Clone, PartialEq)]
pub struct UeRate {
    pub cell: usize,
    pub ue: usize,
    pub sinr: f64,
    pub rate: f64,
    pub signal_power: f64,
    pub interference_power: f64,
    /// Interference-free limit (empty denominator); `sinr` and `rate` are +inf.
    pub unbounded: bool,
    pub sinr_stderr: Option<f64>,
    pub rate_stderr: Option<f64>,
    pub signal_stderr: Option<f64>,
    pub interference_stderr: Option<f64>,
}

impl UeRate {
    pub fn new(cell: usize, ue: usize, sinr: f64, signal_power: f64, interference_power: f64) -> Self {
        Self {
            cell,
            ue,
            sinr,
            rate: f64::NAN,
            signal_power,
            interference_power,
            unbounded: false,
            sinr_stderr: None,
            rate_stderr: None,
            signal_stderr: None,
            interference_stderr: None,
        }
    }

    pub fn unbounded(cell: usize, ue: usize, signal_power: f64) -> Self {
        Self {
            unbounded: true,
            sinr: f64::INFINITY,
            ..Self::new(cell, ue, f64::INFINITY, signal_power, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub provenance: Provenance,
    pub n_trials: Option<usize>,
    /// Cell-major: `users[j * K + k]`.
    pub users: Vec<UeRate>,
    pub average_rate: f64,
    pub sum_rate: f64,
    pub average_rate_stderr: Option<f64>,
}

impl RateReport {
    pub fn new(scheme: Scheme, provenance: Provenance, users: Vec<UeRate>) -> Self {
        Self {
            scheme,
            provenance,
            n_trials: None,
            users,
            average_rate: f64::NAN,
            sum_rate: f64::NAN,
            average_rate_stderr: None,
        }
    }

    pub fn user(&self, cell: usize, ue: usize) -> &UeRate {
        self.users
            .iter()
            .find(|u| u.cell == cell && u.ue == ue)
            .expect("no such UE in report")
    }

    pub fn sinrs(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.sinr).collect()
    }
}

/// Fills `rate = log2(1 + sinr)` per UE and the aggregates.
pub fn ergodic_rates(mut report: RateReport) -> RateReport {
    for u in &mut report.users {
        u.rate = if u.unbounded {
            f64::INFINITY
        } else {
            (1.0 + u.sinr).log2()
        };
        if let Some(se) = u.sinr_stderr {
            u.rate_stderr = Some(se / ((1.0 + u.sinr) * std::f64::consts::LN_2));
        }
    }
    report.sum_rate = if report.users.iter().any(|u| u.unbounded) {
        f64::INFINITY
    } else {
        report.users.iter().map(|u| u.rate).collect::<CompensatedSum>().value()
    };
    report.average_rate = report.sum_rate / report.users.len() as f64;
    report
}

/// Per-UE outcome of one trial: signal `h_jjk^H g_jk` and total received
/// power `sum_{l,i} |h_ljk^H g_li|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSample {
    pub signal: C64,
    pub power: f64,
}

/// Evaluates one block's per-UE samples for a precoder set.
pub fn trial_samples(realization: &ChannelRealization, precoders: &PrecoderSet) -> Vec<TrialSample> {
    let cells = precoders.g.len();
    let users = precoders.g.first().map_or(0, |g| g.ncols());
    let mut out = Vec::with_capacity(cells * users);
    for j in 0..cells {
        for k in 0..users {
            let mut power = CompensatedSum::default();
            let mut signal = C64::new(0.0, 0.0);
            for (l, g) in precoders.g.iter().enumerate() {
                // g^H h gives conj(h^H g_li); magnitudes agree.
                let v = g.ad_mul(realization.h(l, j, k));
                for (i, x) in v.iter().enumerate() {
                    power.add(x.norm_sqr());
                    if l == j && i == k {
                        signal = x.conj();
                    }
                }
            }
            out.push(TrialSample {
                signal,
                power: power.value(),
            });
        }
    }
    out
}

fn precoders_for(
    scenario: &Scenario,
    scheme: Scheme,
    normalizer: &[f64],
    est: &crate::channel::EstimatedChannels,
) -> Result<PrecoderSet> {
    match scheme {
        Scheme::Mrt => mrt_precoder(est, normalizer),
        Scheme::Rzf => rzf_precoder(est, scenario.lambda(), normalizer),
    }
}

/// Samples of all trials, trial-major.
pub fn collect_trials(
    scenario: &Scenario,
    scheme: Scheme,
    normalizer: &[f64],
    trials: usize,
) -> Result<Vec<Vec<TrialSample>>> {
    let seed = scenario.config().seed;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, Domain::Trials, t as u64);
            let (realization, est) = draw_block(scenario, &mut rng);
            let p = precoders_for(scenario, scheme, normalizer, &est)?;
            Ok(trial_samples(&realization, &p))
        })
        .collect()
}

struct Moments {
    /// `(Re s, Im s, p)` per UE, as compensated means.
    mean: Vec<[f64; 3]>,
    /// Sample variance of the complex signal, `E|s - E s|^2`.
    signal_var: Vec<f64>,
    /// Batch means, batch-major, then UE, then component.
    batches: Vec<Vec<[f64; 3]>>,
}

fn moments(samples: &[Vec<TrialSample>], batch_size: usize) -> Moments {
    let n = samples.len();
    let ues = samples[0].len();
    let mut mean = Vec::with_capacity(ues);
    let mut signal_var = Vec::with_capacity(ues);
    for u in 0..ues {
        let mut acc = [CompensatedSum::default(); 3];
        for t in samples {
            acc[0].add(t[u].signal.re);
            acc[1].add(t[u].signal.im);
            acc[2].add(t[u].power);
        }
        let m = acc.map(|a| a.value() / n as f64);
        let ms = C64::new(m[0], m[1]);
        let var: CompensatedSum = samples.iter().map(|t| (t[u].signal - ms).norm_sqr()).collect();
        mean.push(m);
        signal_var.push(var.value() / (n as f64 - 1.0));
    }
    // Fewer than two full batches: fall back to per-trial batches.
    let bs = if n / batch_size.max(1) >= 2 { batch_size.max(1) } else { 1 };
    let batches = samples
        .chunks_exact(bs)
        .map(|chunk| {
            (0..ues)
                .map(|u| {
                    let mut acc = [0.0; 3];
                    for t in chunk {
                        acc[0] += t[u].signal.re;
                        acc[1] += t[u].signal.im;
                        acc[2] += t[u].power;
                    }
                    acc.map(|a| a / bs as f64)
                })
                .collect()
        })
        .collect();
    Moments {
        mean,
        signal_var,
        batches,
    }
}

/// Standard error of a linear functional `sum_u grad_u . mean_u` from the
/// spread of batch means.
fn batch_stderr(batches: &[Vec<[f64; 3]>], grad: &[(usize, [f64; 3])]) -> f64 {
    let nb = batches.len() as f64;
    let z: Vec<f64> = batches
        .iter()
        .map(|b| {
            grad.iter()
                .map(|(u, g)| g[0] * b[*u][0] + g[1] * b[*u][1] + g[2] * b[*u][2])
                .sum()
        })
        .collect();
    let m = z.iter().sum::<f64>() / nb;
    let var = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1.0);
    (var / nb).sqrt()
}

/// Builds a report from raw trial samples.
///
/// The numerator `|E s|^2` is estimated as `|mean s|^2 - var(s)/n`, which
/// removes the upward bias of the squared sample mean; its positive part is
/// used. Standard errors come from batch means through the delta method.
pub fn report_from_samples(
    scenario: &Scenario,
    scheme: Scheme,
    samples: &[Vec<TrialSample>],
    batch_size: usize,
) -> Result<RateReport> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument("at least two trials are required".into()));
    }
    let users = scenario.users();
    let noise = 1.0 / scenario.rho_dl();
    let m = moments(samples, batch_size);
    let mut out = Vec::with_capacity(m.mean.len());
    let mut rate_grads = Vec::with_capacity(m.mean.len());
    for (u, ([a, b, p], var)) in m.mean.iter().zip(&m.signal_var).enumerate() {
        let (cell, ue) = (u / users, u % users);
        let num = (a * a + b * b - var / n as f64).max(0.0);
        let interference = p - num;
        let denom = noise + interference;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::UnstableEstimate {
                cell,
                ue,
                diagnostics: format!(
                    "denominator {denom:e} (noise {noise:e}, mean power {p:e}, signal {num:e}, trials {n})"
                ),
            });
        }
        let sinr = num / denom;
        let g_sinr = [
            2.0 * a * (denom + num) / (denom * denom),
            2.0 * b * (denom + num) / (denom * denom),
            -num / (denom * denom),
        ];
        let mut r = UeRate::new(cell, ue, sinr, num, interference);
        r.sinr_stderr = Some(batch_stderr(&m.batches, &[(u, g_sinr)]));
        r.signal_stderr = Some(batch_stderr(&m.batches, &[(u, [2.0 * a, 2.0 * b, 0.0])]));
        r.interference_stderr = Some(batch_stderr(&m.batches, &[(u, [-2.0 * a, -2.0 * b, 1.0])]));
        let scale = 1.0 / ((1.0 + sinr) * std::f64::consts::LN_2);
        rate_grads.push((u, g_sinr.map(|g| g * scale)));
        out.push(r);
    }
    let ues = out.len() as f64;
    let avg_grads: Vec<_> = rate_grads.into_iter().map(|(u, g)| (u, g.map(|x| x / ues))).collect();
    let mut report = RateReport::new(scheme, Provenance::MonteCarlo, out);
    report.n_trials = Some(n);
    report.average_rate_stderr = Some(batch_stderr(&m.batches, &avg_grads));
    Ok(ergodic_rates(report))
}

/// SINR simulation with frozen normalizers (second pass of the two-pass scheme).
pub fn sinr_montecarlo(
    scenario: &Scenario,
    scheme: Scheme,
    normalizer: &Normalizer,
    options: &McOptions,
) -> Result<RateReport> {
    if normalizer.scheme != scheme {
        return Err(Error::InvalidArgument(format!(
            "normalizer was estimated for {}, not {scheme}",
            normalizer.scheme
        )));
    }
    if options.trials < 2 {
        return Err(Error::InvalidArgument("n_trials must be at least 2".into()));
    }
    let samples = collect_trials(scenario, scheme, &normalizer.values, options.trials)?;
    report_from_samples(scenario, scheme, &samples, options.batch_size)
}

/// Both passes: normalizer estimation, then SINR simulation.
pub fn simulate(scenario: &Scenario, scheme: Scheme, options: &McOptions) -> Result<RateReport> {
    let normalizer = estimate_normalizer(scenario, scheme, options.normalizer_samples)?;
    sinr_montecarlo(scenario, scheme, &normalizer, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::EstimatedChannels;
    use crate::linalg::{CMat, CVec};
    use crate::scenario::{GainTable, Geometry, LosModel, ScenarioConfig};
    use approx::assert_relative_eq;

    #[test]
    fn rates_from_sinr() {
        let users = vec![
            UeRate::new(0, 0, 1.0, 1.0, 0.0),
            UeRate::new(0, 1, 0.0, 0.0, 0.0),
            UeRate::new(0, 2, 3.0, 3.0, 0.0),
        ];
        let r = ergodic_rates(RateReport::new(Scheme::Mrt, Provenance::DeterministicEquivalent, users));
        assert_eq!(r.users[0].rate, 1.0);
        assert_eq!(r.users[1].rate, 0.0);
        assert_eq!(r.users[2].rate, 2.0);
        assert_eq!(r.sum_rate, 3.0);
        assert_eq!(r.average_rate, 1.0);
    }

    fn single_user(rho_dl_db: f64) -> Scenario {
        let mut c = ScenarioConfig::reference(1, 2, 1e12);
        c.cells = 1;
        c.rho_dl_db = rho_dl_db;
        c.los_model = LosModel::DftOrthogonal;
        c.geometry = Geometry::ExplicitGains(GainTable::from_fn(1, 1, |_, _, _| 1.0));
        Scenario::build(c).unwrap()
    }

    #[test]
    fn deterministic_channel_with_perfect_csi() {
        // ||h||^2 = 2 and g = h / ||h||: gamma = ||h||^2 rho_dl.
        let s = single_user(10.0);
        let h = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let realization = ChannelRealization::from_vectors(1, 1, vec![h.clone()]);
        let est = EstimatedChannels::from_matrices(vec![CMat::from_columns(std::slice::from_ref(&h))]);
        let p = mrt_precoder(&est, &[0.5]).unwrap();
        let samples = vec![trial_samples(&realization, &p); 4];
        let report = report_from_samples(&s, Scheme::Mrt, &samples, 1).unwrap();
        assert_relative_eq!(report.users[0].sinr, 2.0 * s.rho_dl(), max_relative = 1e-12);
    }

    #[test]
    fn noise_dominated_limit() {
        let s = single_user(-200.0);
        let r = simulate(
            &s,
            Scheme::Mrt,
            &McOptions {
                trials: 50,
                batch_size: 10,
                normalizer_samples: 10,
            },
        )
        .unwrap();
        assert!(r.users[0].sinr < 1e-15);
    }

    #[test]
    fn unstable_denominator_reported() {
        let s = single_user(10.0);
        let samples = vec![
            vec![TrialSample {
                signal: C64::new(1.0, 0.0),
                power: -5.0,
            }];
            4
        ];
        match report_from_samples(&s, Scheme::Mrt, &samples, 2) {
            Err(Error::UnstableEstimate { cell: 0, ue: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let s = Scenario::build(ScenarioConfig::reference(3, 16, 2.0)).unwrap();
        let o = McOptions {
            trials: 40,
            batch_size: 10,
            normalizer_samples: 50,
        };
        for scheme in [Scheme::Mrt, Scheme::Rzf] {
            let a = simulate(&s, scheme, &o).unwrap();
            let b = simulate(&s, scheme, &o).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let s = single_user(10.0);
        let norm = estimate_normalizer(&s, Scheme::Mrt, 5).unwrap();
        let o = McOptions {
            trials: 1,
            ..McOptions::default()
        };
        assert!(sinr_montecarlo(&s, Scheme::Mrt, &norm, &o).is_err());
        assert!(sinr_montecarlo(&s, Scheme::Rzf, &norm, &McOptions::default()).is_err());
    }
}
