//! System description: cell geometry, path loss, Rician factors, LOS
//! directions, effective diffuse gains `d` and estimate-quality table `phi`.
//!
//! Gain tables are indexed `(j, l, k)`: `j` is the base station, `l` the cell
//! the UE belongs to and `k` the UE index inside that cell.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use nalgebra::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMat, CVec, C64};
use crate::rng::{self, Domain};

/// Cross products of LOS directions below this fraction of the geometric
/// mean of the two norms are rounding noise and are stored as exact zeros.
const GRAM_ZERO_TOL: f64 = 1e-12;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Real-valued table over `(j, l, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    cells: usize,
    users: usize,
    data: Vec<f64>,
}

impl GainTable {
    pub fn zeros(cells: usize, users: usize) -> Self {
        Self {
            cells,
            users,
            data: vec![0.0; cells * cells * users],
        }
    }

    pub fn from_fn(cells: usize, users: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(cells, users);
        for j in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    t[(j, l, k)] = f(j, l, k);
                }
            }
        }
        t
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, (j, l, k): (usize, usize, usize)) -> usize {
        assert!(j < self.cells && l < self.cells && k < self.users, "gain table index out of range");
        (j * self.cells + l) * self.users + k
    }
}

impl Index<(usize, usize, usize)> for GainTable {
    type Output = f64;
    fn index(&self, idx: (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(idx)]
    }
}

impl IndexMut<(usize, usize, usize)> for GainTable {
    fn index_mut(&mut self, idx: (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(idx);
        &mut self.data[o]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KappaRule {
    Uniform(f64),
    /// One value per UE, cell-major (`j * K + k`).
    PerUser(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    PerCell(Vec<f64>),
    /// `lambda_j = K / (N * rho_dl)`.
    KOverNRho,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LosModel {
    /// Half-wavelength ULA steered to the BS-to-UE azimuth.
    Ula,
    /// Columns of the N-point DFT scaled by sqrt(N); mutually orthogonal.
    DftOrthogonal,
    /// Directions per UE (`j * K + k`), rescaled to unit average power.
    Explicit(Vec<CVec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Unit-radius cells whose BSs sit on a regular polygon of side 2
    /// (three mutually tangent cells for L = 3).
    TriangleDefault,
    /// BS coordinates per cell and UE coordinates cell-major.
    ExplicitPositions { bs: Vec<[f64; 2]>, ue: Vec<[f64; 2]> },
    /// Large-scale gains given directly; no coordinates.
    ExplicitGains(GainTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub users: usize,
    pub antennas: usize,
    pub pathloss_exponent: f64,
    pub rho_tr_db: f64,
    pub rho_dl_db: f64,
    pub kappa: KappaRule,
    pub lambda: LambdaRule,
    pub los_model: LosModel,
    pub geometry: Geometry,
    pub min_distance: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Three cells, alpha = 2.5, 6 dB training SNR, 10 dB downlink SNR,
    /// `lambda = K/(N rho_dl)`, ULA LOS.
    pub fn reference(users: usize, antennas: usize, kappa: f64) -> Self {
        Self {
            cells: 3,
            users,
            antennas,
            pathloss_exponent: 2.5,
            rho_tr_db: 6.0,
            rho_dl_db: 10.0,
            kappa: KappaRule::Uniform(kappa),
            lambda: LambdaRule::KOverNRho,
            los_model: LosModel::Ula,
            geometry: Geometry::TriangleDefault,
            min_distance: 0.1,
            seed: 1,
        }
    }

    pub fn rho_tr(&self) -> f64 {
        db_to_linear(self.rho_tr_db)
    }

    pub fn rho_dl(&self) -> f64 {
        db_to_linear(self.rho_dl_db)
    }

    pub fn kappa_of(&self, j: usize, k: usize) -> f64 {
        match &self.kappa {
            KappaRule::Uniform(v) => *v,
            KappaRule::PerUser(v) => v[j * self.users + k],
        }
    }

    /// Per-cell regularizers after applying the rule.
    pub fn resolved_lambda(&self) -> Vec<f64> {
        match &self.lambda {
            LambdaRule::Fixed(v) => vec![*v; self.cells],
            LambdaRule::PerCell(v) => v.clone(),
            LambdaRule::KOverNRho => {
                vec![self.users as f64 / (self.antennas as f64 * self.rho_dl()); self.cells]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.cells == 0 || self.users == 0 || self.antennas == 0 {
            return bad("L, K and N must all be at least 1".into());
        }
        if self.users >= self.antennas {
            return bad(format!(
                "K/N must be below 1 (K = {}, N = {})",
                self.users, self.antennas
            ));
        }
        if !self.pathloss_exponent.is_finite() {
            return bad("pathloss_exponent must be finite".into());
        }
        if !self.rho_tr_db.is_finite() || !self.rho_dl_db.is_finite() {
            return bad("SNRs must be finite".into());
        }
        match &self.kappa {
            KappaRule::Uniform(v) if !(v.is_finite() && *v >= 0.0) => {
                return bad(format!("kappa must be finite and >= 0, got {v}"))
            }
            KappaRule::PerUser(v) => {
                if v.len() != self.cells * self.users {
                    return bad(format!(
                        "per-UE kappa needs L*K = {} values, got {}",
                        self.cells * self.users,
                        v.len()
                    ));
                }
                if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                    return bad(format!("kappa must be finite and >= 0, got {x}"));
                }
            }
            _ => {}
        }
        if let LambdaRule::PerCell(v) = &self.lambda {
            if v.len() != self.cells {
                return bad(format!("per-cell lambda needs {} values", self.cells));
            }
        }
        if let Some(x) = self.resolved_lambda().iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return bad(format!("lambda must be positive, got {x}"));
        }
        if !(self.min_distance >= 0.0 && self.min_distance < 1.0) {
            return bad(format!("min_distance must lie in [0, 1), got {}", self.min_distance));
        }
        match &self.geometry {
            Geometry::TriangleDefault => {}
            Geometry::ExplicitPositions { bs, ue } => {
                if bs.len() != self.cells || ue.len() != self.cells * self.users {
                    return bad("explicit positions need L BS and L*K UE coordinates".into());
                }
            }
            Geometry::ExplicitGains(t) => {
                if t.cells() != self.cells || t.users() != self.users {
                    return bad("explicit gain table has the wrong shape".into());
                }
                if t.values().iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                    return bad("explicit gains must be finite and >= 0".into());
                }
                if self.los_model == LosModel::Ula {
                    return bad("ula LOS needs coordinates; use dft_orthogonal or explicit".into());
                }
            }
        }
        if let LosModel::Explicit(v) = &self.los_model {
            if v.len() != self.cells * self.users || v.iter().any(|a| a.len() != self.antennas) {
                return bad("explicit LOS needs L*K vectors of length N".into());
            }
            if v.iter().any(|a| a.norm() == 0.0) {
                return bad("explicit LOS directions must be nonzero".into());
            }
        }
        Ok(())
    }
}

/// BS and UE coordinates, unit cell radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    pub bs: Vec<[f64; 2]>,
    /// Cell-major: `ue[j * K + k]`.
    pub ue: Vec<[f64; 2]>,
}

impl Positions {
    fn distance(&self, bs: usize, ue: usize) -> f64 {
        let [x0, y0] = self.bs[bs];
        let [x1, y1] = self.ue[ue];
        (x1 - x0).hypot(y1 - y0)
    }

    /// Azimuth of UE `k` in cell `j` as seen from BS `j`.
    pub fn azimuth(&self, j: usize, users: usize, k: usize) -> f64 {
        let [x0, y0] = self.bs[j];
        let [x1, y1] = self.ue[j * users + k];
        (y1 - y0).atan2(x1 - x0)
    }
}

fn default_bs_positions(cells: usize) -> Vec<[f64; 2]> {
    if cells == 1 {
        return vec![[0.0, 0.0]];
    }
    // Regular polygon with unit-radius cells touching their neighbours.
    let radius = 1.0 / (PI / cells as f64).sin();
    (0..cells)
        .map(|j| {
            let a = PI / 2.0 + 2.0 * PI * j as f64 / cells as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn drop_users(config: &ScenarioConfig, bs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut rng = rng::stream(config.seed, Domain::Geometry, 0);
    let r0 = config.min_distance;
    let mut ue = Vec::with_capacity(config.cells * config.users);
    for centre in bs {
        for _ in 0..config.users {
            // Uniform over the annulus area.
            let u: f64 = rng.random();
            let r = (r0 * r0 + u * (1.0 - r0 * r0)).sqrt();
            let a = 2.0 * PI * rng.random::<f64>();
            ue.push([centre[0] + r * a.cos(), centre[1] + r * a.sin()]);
        }
    }
    ue
}

/// LOS direction for the UE with index `k` (DFT model) or azimuth `theta`
/// (ULA model), normalized so that `(1/N) |a|^2 = 1`.
pub fn los_vector(antennas: usize, model: &LosModel, k: usize, theta: f64) -> Result<CVec> {
    if antennas == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    match model {
        LosModel::Ula => {
            let s = theta.sin();
            Ok(CVec::from_fn(antennas, |n, _| {
                Complex::from_polar(1.0, PI * n as f64 * s)
            }))
        }
        LosModel::DftOrthogonal => {
            if k >= antennas {
                return Err(Error::InvalidArgument(format!(
                    "dft_orthogonal LOS needs K <= N (column {k} of {antennas})"
                )));
            }
            Ok(CVec::from_fn(antennas, |n, _| {
                // Reduce n*k mod N first so the phase stays exact for large N.
                let m = (n * k) % antennas;
                Complex::from_polar(1.0, -2.0 * PI * m as f64 / antennas as f64)
            }))
        }
        LosModel::Explicit(v) => {
            let a = v
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("no explicit LOS vector {k}")))?;
            let scale = (antennas as f64).sqrt() / a.norm();
            Ok(a * C64::new(scale, 0.0))
        }
    }
}

/// Estimate-quality table `phi_jlk = d_jjk d_jlk / (1/rho_tr + sum_n d_jnk)`.
pub fn estimation_quality(d: &GainTable, rho_tr: f64) -> GainTable {
    let (cells, users) = (d.cells(), d.users());
    GainTable::from_fn(cells, users, |j, l, k| {
        let total: f64 = (0..cells).map(|n| d[(j, n, k)]).sum();
        d[(j, j, k)] * d[(j, l, k)] / (1.0 / rho_tr + total)
    })
}

/// Immutable, validated system description.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    rho_tr: f64,
    rho_dl: f64,
    lambda: Vec<f64>,
    kappa: Vec<f64>,
    beta: GainTable,
    d: GainTable,
    phi: GainTable,
    /// `d_jjk / (1/rho_tr + sum_n d_jnk)`, indexed `j * K + k`.
    estimator_gain: Vec<f64>,
    /// `hbar_jjk`, indexed `j * K + k`.
    los: Vec<CVec>,
    /// `Hbar_jj^H Hbar_jj / N` per cell.
    los_gram: Vec<CMat>,
    positions: Option<Positions>,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let (cells, users, antennas) = (config.cells, config.users, config.antennas);

        let (positions, beta) = match &config.geometry {
            Geometry::ExplicitGains(t) => (None, t.clone()),
            geometry => {
                let positions = match geometry {
                    Geometry::ExplicitPositions { bs, ue } => Positions {
                        bs: bs.clone(),
                        ue: ue.clone(),
                    },
                    _ => {
                        let bs = default_bs_positions(cells);
                        let ue = drop_users(&config, &bs);
                        Positions { bs, ue }
                    }
                };
                let alpha = config.pathloss_exponent;
                let beta = GainTable::from_fn(cells, users, |j, l, k| {
                    positions.distance(j, l * users + k).powf(-alpha)
                });
                if beta.values().iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidConfig("a UE sits on a BS location".into()));
                }
                (Some(positions), beta)
            }
        };

        let kappa: Vec<f64> = (0..cells)
            .flat_map(|j| (0..users).map(move |k| (j, k)))
            .map(|(j, k)| config.kappa_of(j, k))
            .collect();
        let d = GainTable::from_fn(cells, users, |j, l, k| {
            if l == j {
                beta[(j, j, k)] / (1.0 + kappa[j * users + k])
            } else {
                beta[(j, l, k)]
            }
        });
        let rho_tr = config.rho_tr();
        let phi = estimation_quality(&d, rho_tr);
        let estimator_gain = (0..cells)
            .flat_map(|j| (0..users).map(move |k| (j, k)))
            .map(|(j, k)| {
                let total: f64 = (0..cells).map(|n| d[(j, n, k)]).sum();
                d[(j, j, k)] / (1.0 / rho_tr + total)
            })
            .collect();

        let mut los = Vec::with_capacity(cells * users);
        for j in 0..cells {
            for k in 0..users {
                let theta = positions
                    .as_ref()
                    .map(|p| p.azimuth(j, users, k))
                    .unwrap_or(0.0);
                let idx = match config.los_model {
                    LosModel::Explicit(_) => j * users + k,
                    _ => k,
                };
                let a = los_vector(antennas, &config.los_model, idx, theta)?;
                let amp = (d[(j, j, k)] * kappa[j * users + k]).sqrt();
                los.push(a * C64::new(amp, 0.0));
            }
        }
        let los_gram = (0..cells)
            .map(|j| gram_of(&los[j * users..(j + 1) * users], antennas))
            .collect();

        Ok(Self {
            rho_tr,
            rho_dl: config.rho_dl(),
            lambda: config.resolved_lambda(),
            config,
            kappa,
            beta,
            d,
            phi,
            estimator_gain,
            los,
            los_gram,
            positions,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn cells(&self) -> usize {
        self.config.cells
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    pub fn antennas(&self) -> usize {
        self.config.antennas
    }

    pub fn rho_tr(&self) -> f64 {
        self.rho_tr
    }

    pub fn rho_dl(&self) -> f64 {
        self.rho_dl
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn kappa(&self, j: usize, k: usize) -> f64 {
        self.kappa[j * self.users() + k]
    }

    pub fn beta(&self) -> &GainTable {
        &self.beta
    }

    pub fn d(&self) -> &GainTable {
        &self.d
    }

    pub fn phi(&self) -> &GainTable {
        &self.phi
    }

    pub fn estimator_gain(&self, j: usize, k: usize) -> f64 {
        self.estimator_gain[j * self.users() + k]
    }

    /// LOS component `hbar_jjk`.
    pub fn los(&self, j: usize, k: usize) -> &CVec {
        &self.los[j * self.users() + k]
    }

    /// `Hbar_jj^H Hbar_jj / N`, a K x K Hermitian matrix.
    pub fn los_gram(&self, j: usize) -> &CMat {
        &self.los_gram[j]
    }

    /// `Hbar_jj` as an N x K matrix.
    pub fn los_matrix(&self, j: usize) -> CMat {
        let k = self.users();
        CMat::from_columns(&self.los[j * k..(j + 1) * k])
    }

    pub fn positions(&self) -> Option<&Positions> {
        self.positions.as_ref()
    }

    /// `Phi_jj` diagonal.
    pub fn phi_diag(&self, j: usize) -> Vec<f64> {
        (0..self.users()).map(|k| self.phi[(j, j, k)]).collect()
    }

    /// `(1/sqrt(N)) ||Hbar_jj||` for every cell.
    pub fn los_spectral_norms(&self) -> Vec<f64> {
        let n = self.antennas() as f64;
        (0..self.cells())
            .map(|j| spectral_norm(&self.los_matrix(j)) / n.sqrt())
            .collect()
    }

    /// Largest `|(1/N) hbar_jji^H hbar_jjk|` over `i != k` in cell `j`.
    pub fn max_los_cross_product(&self, j: usize) -> f64 {
        let g = &self.los_gram[j];
        let mut m: f64 = 0.0;
        for i in 0..g.nrows() {
            for k in 0..g.ncols() {
                if i != k {
                    m = m.max(g[(i, k)].norm());
                }
            }
        }
        m
    }

    /// Copy with a different antenna count (lambda rule re-resolved).
    pub fn with_antennas(&self, antennas: usize) -> Result<Self> {
        let mut c = self.config.clone();
        c.antennas = antennas;
        Self::build(c)
    }

    /// Copy with a scalar Rician factor for every UE.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let mut c = self.config.clone();
        c.kappa = KappaRule::Uniform(kappa);
        Self::build(c)
    }

    /// Copy with fixed per-cell regularizers.
    pub fn with_lambda(&self, lambda: LambdaRule) -> Result<Self> {
        let mut c = self.config.clone();
        c.lambda = lambda;
        Self::build(c)
    }
}

fn gram_of(cols: &[CVec], antennas: usize) -> CMat {
    let k = cols.len();
    let n = antennas as f64;
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for m in i..k {
            let v = cols[i].dotc(&cols[m]) / n;
            g[(i, m)] = v;
            g[(m, i)] = v.conj();
        }
        g[(i, i)] = C64::new(g[(i, i)].re, 0.0);
    }
    for i in 0..k {
        for m in 0..k {
            if i != m {
                let scale = (g[(i, i)].re * g[(m, m)].re).sqrt();
                if g[(i, m)].norm() <= GRAM_ZERO_TOL * scale {
                    g[(i, m)] = C64::new(0.0, 0.0);
                }
            }
        }
    }
    g
}
