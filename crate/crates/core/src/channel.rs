//! Channel draws, uplink pilot observations and single-cell MMSE estimation.
//!
//! UE `k` of every cell uses pilot `k`, so the observation at BS `j` for
//! pilot `k` superimposes the channels of all UEs with index `k`.

use rand_chacha::ChaCha8Rng;

use crate::linalg::{CMat, CVec, C64};
use crate::rng::complex_gaussian_vec;
use crate::scenario::Scenario;

/// Where a realization's generator stood before drawing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    /// Generator positioned exactly where the snapshot was taken.
    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// One draw of every `h_jlk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    cells: usize,
    users: usize,
    h: Vec<CVec>,
    pub rng_state: RngSnapshot,
}

impl ChannelRealization {
    /// Channel from BS `j` to UE `k` of cell `l`.
    pub fn h(&self, j: usize, l: usize, k: usize) -> &CVec {
        &self.h[(j * self.cells + l) * self.users + k]
    }

    /// Realization from explicit vectors ordered `(j * L + l) * K + k`.
    pub fn from_vectors(cells: usize, users: usize, h: Vec<CVec>) -> Self {
        assert_eq!(h.len(), cells * cells * users, "wrong number of channel vectors");
        Self {
            cells,
            users,
            h,
            rng_state: RngSnapshot {
                seed: [0; 32],
                stream: 0,
                word_pos: 0,
            },
        }
    }

    /// Diffuse part `h_jlk - hbar_jlk` (the LOS part is zero for `l != j`).
    pub fn diffuse(&self, scenario: &Scenario, j: usize, l: usize, k: usize) -> CVec {
        if l == j {
            self.h(j, l, k) - scenario.los(j, k)
        } else {
            self.h(j, l, k).clone()
        }
    }
}

/// Draws `h_jjk = sqrt(d_jjk) z + hbar_jjk` and `h_jlk = sqrt(d_jlk) z`.
pub fn draw_channels(scenario: &Scenario, rng: &mut ChaCha8Rng) -> ChannelRealization {
    let rng_state = RngSnapshot::of(rng);
    let (cells, users, n) = (scenario.cells(), scenario.users(), scenario.antennas());
    let d = scenario.d();
    let mut h = Vec::with_capacity(cells * cells * users);
    for j in 0..cells {
        for l in 0..cells {
            for k in 0..users {
                let mut v = complex_gaussian_vec(rng, n, d[(j, l, k)].sqrt());
                if l == j {
                    v += scenario.los(j, k);
                }
                h.push(v);
            }
        }
    }
    ChannelRealization {
        cells,
        users,
        h,
        rng_state,
    }
}

/// Training observations `y_jk`, indexed `j * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservations {
    users: usize,
    y: Vec<CVec>,
}

impl PilotObservations {
    pub fn y(&self, j: usize, k: usize) -> &CVec {
        &self.y[j * self.users + k]
    }

    pub fn from_vectors(users: usize, y: Vec<CVec>) -> Self {
        Self { users, y }
    }
}

/// `y_jk = sum_l h_jlk + n_jk / sqrt(rho_tr)` with one noise vector per `(j, k)`.
pub fn pilot_observation(
    realization: &ChannelRealization,
    scenario: &Scenario,
    rng: &mut ChaCha8Rng,
) -> PilotObservations {
    let (cells, users, n) = (scenario.cells(), scenario.users(), scenario.antennas());
    let noise_scale = 1.0 / scenario.rho_tr().sqrt();
    let mut y = Vec::with_capacity(cells * users);
    for j in 0..cells {
        for k in 0..users {
            let noise = complex_gaussian_vec(rng, n, 1.0);
            let mut acc = noise * C64::new(noise_scale, 0.0);
            for l in 0..cells {
                acc += realization.h(j, l, k);
            }
            y.push(acc);
        }
    }
    PilotObservations { users, y }
}

/// Per-cell estimates of the own-cell channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedChannels {
    users: usize,
    /// `Hhat_jj`, N x K, one per cell.
    pub hhat: Vec<CMat>,
    /// `d_jjk - phi_jjk`, indexed `j * K + k`.
    pub error_var: Vec<f64>,
}

impl EstimatedChannels {
    pub fn cells(&self) -> usize {
        self.hhat.len()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.hhat.first().map_or(0, |m| m.nrows())
    }

    pub fn hhat(&self, j: usize, k: usize) -> CVec {
        self.hhat[j].column(k).into_owned()
    }

    pub fn from_matrices(hhat: Vec<CMat>) -> Self {
        let users = hhat.first().map_or(0, |m| m.ncols());
        let error_var = vec![0.0; hhat.len() * users];
        Self {
            users,
            hhat,
            error_var,
        }
    }
}

/// `hhat_jjk = hbar_jjk + c_jk (y_jk - hbar_jjk)`, `c_jk = d_jjk / (1/rho_tr + sum_n d_jnk)`.
pub fn mmse_estimate(y: &PilotObservations, scenario: &Scenario) -> EstimatedChannels {
    let (cells, users, n) = (scenario.cells(), scenario.users(), scenario.antennas());
    let mut hhat = Vec::with_capacity(cells);
    let mut error_var = Vec::with_capacity(cells * users);
    for j in 0..cells {
        let mut m = CMat::zeros(n, users);
        for k in 0..users {
            let c = scenario.estimator_gain(j, k);
            let los = scenario.los(j, k);
            let col = los + (y.y(j, k) - los) * C64::new(c, 0.0);
            m.set_column(k, &col);
            error_var.push(scenario.d()[(j, j, k)] - scenario.phi()[(j, j, k)]);
        }
        hhat.push(m);
    }
    EstimatedChannels {
        users,
        hhat,
        error_var,
    }
}

/// Channels, pilots and estimates for one coherence block.
pub fn draw_block(scenario: &Scenario, rng: &mut ChaCha8Rng) -> (ChannelRealization, EstimatedChannels) {
    let realization = draw_channels(scenario, rng);
    let y = pilot_observation(&realization, scenario, rng);
    let est = mmse_estimate(&y, scenario);
    (realization, est)
}
