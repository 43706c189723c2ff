//! Motion prediction and measurement update.
//!
//! State (11-D): `[x, y, z, yaw, vx, vy, ax, ay, w, l, h]`.
//! Measurement (7-D): `[x, y, z, yaw, w, l, h]`.
//!
//! The motion model is constant acceleration in the ground plane with every
//! other component held constant. Three variants share it:
//! - [`FilterVariant::Kf`]: textbook linear Kalman filter, fixed `R`.
//! - [`FilterVariant::Ukf`]: unscented filter, fixed `R`.
//! - [`FilterVariant::DUkf`]: unscented filter whose measurement covariance
//!   adapts every update from the innovation and the detection confidence:
//!   `R_k = (1/c)·[(1−α)·R_{k−1} + α·(ν νᵀ − S_k)]`, with
//!   `S_k = Σ Wᵢ (γᵢ − ẑ)(γᵢ − ẑ)ᵀ + R_init`, then projected back to SPD.

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Box3D};

pub const STATE_DIM: usize = 11;
pub const MEAS_DIM: usize = 7;
pub const SIGMA_COUNT: usize = 2 * STATE_DIM + 1;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type StateCov = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type MeasVec = SVector<f64, MEAS_DIM>;
pub type MeasCov = SMatrix<f64, MEAS_DIM, MEAS_DIM>;
pub type CrossCov = SMatrix<f64, STATE_DIM, MEAS_DIM>;

pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const YAW: usize = 3;
    pub const VX: usize = 4;
    pub const VY: usize = 5;
    pub const AX: usize = 6;
    pub const AY: usize = 7;
    pub const W: usize = 8;
    pub const L: usize = 9;
    pub const H: usize = 10;
}

/// State components observed by the detector, in measurement order.
pub const MEASURED: [usize; MEAS_DIM] = [idx::X, idx::Y, idx::Z, idx::YAW, idx::W, idx::L, idx::H];

/// Measurement index of the yaw residual.
const MEAS_YAW: usize = 3;

/// Lower bound on filtered box dimensions, meters.
pub const MIN_DIMENSION: f64 = 0.05;

/// Floor applied to detection confidence before it divides `R`.
pub const CONFIDENCE_FLOOR: f64 = 0.05;

/// Smallest eigenvalue kept by the SPD projection of the adapted `R`.
pub const R_EIGEN_FLOOR: f64 = 1e-9;

const CHOLESKY_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState(pub StateVec);

impl TrackState {
    pub fn from_box(b: &Box3D) -> Self {
        let mut v = StateVec::zeros();
        v[idx::X] = b.x;
        v[idx::Y] = b.y;
        v[idx::Z] = b.z;
        v[idx::YAW] = b.yaw;
        v[idx::W] = b.w;
        v[idx::L] = b.l;
        v[idx::H] = b.h;
        Self(v)
    }

    pub fn to_box(&self) -> Box3D {
        let v = &self.0;
        Box3D {
            x: v[idx::X],
            y: v[idx::Y],
            z: v[idx::Z],
            yaw: normalize_angle(v[idx::YAW]),
            w: v[idx::W].max(MIN_DIMENSION),
            l: v[idx::L].max(MIN_DIMENSION),
            h: v[idx::H].max(MIN_DIMENSION),
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.0[idx::X], self.0[idx::Y], self.0[idx::Z]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.0[idx::VX], self.0[idx::VY]]
    }

    fn normalize(&mut self) {
        self.0[idx::YAW] = normalize_angle(self.0[idx::YAW]);
        for i in [idx::W, idx::L, idx::H] {
            self.0[i] = self.0[i].max(MIN_DIMENSION);
        }
    }
}

/// Measurement vector for a detected box.
pub fn measurement_of(b: &Box3D) -> MeasVec {
    MeasVec::from([b.x, b.y, b.z, b.yaw, b.w, b.l, b.h])
}

fn observe(s: &StateVec) -> MeasVec {
    MeasVec::from_fn(|i, _| s[MEASURED[i]])
}

fn motion(s: &StateVec, dt: f64) -> StateVec {
    let mut out = *s;
    let half_dt2 = 0.5 * dt * dt;
    out[idx::X] += s[idx::VX] * dt + s[idx::AX] * half_dt2;
    out[idx::Y] += s[idx::VY] * dt + s[idx::AY] * half_dt2;
    out[idx::VX] += s[idx::AX] * dt;
    out[idx::VY] += s[idx::AY] * dt;
    out
}

/// Linear transition matrix equivalent to the motion model.
pub fn transition_matrix(dt: f64) -> StateCov {
    let mut f = StateCov::identity();
    let half_dt2 = 0.5 * dt * dt;
    f[(idx::X, idx::VX)] = dt;
    f[(idx::X, idx::AX)] = half_dt2;
    f[(idx::Y, idx::VY)] = dt;
    f[(idx::Y, idx::AY)] = half_dt2;
    f[(idx::VX, idx::AX)] = dt;
    f[(idx::VY, idx::AY)] = dt;
    f
}

/// Selection matrix `H` with `z = H x`.
pub fn observation_matrix() -> SMatrix<f64, MEAS_DIM, STATE_DIM> {
    let mut h = SMatrix::<f64, MEAS_DIM, STATE_DIM>::zeros();
    for (row, &col) in MEASURED.iter().enumerate() {
        h[(row, col)] = 1.0;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FilterVariant {
    Kf,
    #[default]
    Ukf,
    #[serde(rename = "dukf")]
    DUkf,
}

impl FilterVariant {
    pub fn name(self) -> &'static str {
        match self {
            FilterVariant::Kf => "kf",
            FilterVariant::Ukf => "ukf",
            FilterVariant::DUkf => "dukf",
        }
    }
}

/// Lower bound applied to the adapted `R` of the D-UKF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RFloor {
    /// Only keep `R` positive definite (eigenvalues at least [`R_EIGEN_FLOOR`]).
    #[default]
    Spd,
    /// Keep `R - r_init` positive semidefinite, so adaptation can only
    /// inflate the configured noise.
    Init,
}

impl RFloor {
    pub fn name(self) -> &'static str {
        match self {
            RFloor::Spd => "spd",
            RFloor::Init => "init",
        }
    }
}

impl std::str::FromStr for RFloor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "spd" => Ok(RFloor::Spd),
            "init" => Ok(RFloor::Init),
            _ => Err(format!("unknown R floor `{s}` (spd, init)")),
        }
    }
}

impl std::str::FromStr for FilterVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "kf" => Ok(FilterVariant::Kf),
            "ukf" => Ok(FilterVariant::Ukf),
            "dukf" => Ok(FilterVariant::DUkf),
            _ => Err(format!("unknown filter variant `{s}` (kf, ukf, dukf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    /// Unscented-transform spread.
    pub kappa: f64,
    /// Forgetting factor of the adaptive `R` update, in `(0, 1)`.
    pub alpha_adapt: f64,
    pub r_floor: RFloor,
    pub r_init: MeasCov,
    /// Process noise per second of prediction; one step adds `q · dt`.
    pub q: StateCov,
    /// Covariance assigned to a freshly born track.
    pub p_init: StateCov,
    /// Seconds per prediction step.
    pub dt: f64,
}

impl FilterConfig {
    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        NoiseParams::default().filter_config(FilterVariant::Ukf, 0.0, 0.5, 0.1)
    }
}

/// Diagonal noise model, standard deviations per component group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub r_pos: f64,
    pub r_yaw: f64,
    pub r_dim: f64,
    pub q_pos: f64,
    pub q_yaw: f64,
    pub q_vel: f64,
    pub q_acc: f64,
    pub q_dim: f64,
    pub p0_pos: f64,
    pub p0_yaw: f64,
    pub p0_vel: f64,
    pub p0_acc: f64,
    pub p0_dim: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            r_pos: 0.05,
            r_yaw: 0.1,
            r_dim: 0.05,
            q_pos: 0.05,
            q_yaw: 0.3,
            q_vel: 0.5,
            q_acc: 1.0,
            q_dim: 0.01,
            p0_pos: 0.1,
            p0_yaw: 0.2,
            p0_vel: 1.0,
            p0_acc: 1.0,
            p0_dim: 0.05,
        }
    }
}

impl NoiseParams {
    pub fn r_init(&self) -> MeasCov {
        let p = self.r_pos.powi(2);
        let d = self.r_dim.powi(2);
        MeasCov::from_diagonal(&MeasVec::from([p, p, p, self.r_yaw.powi(2), d, d, d]))
    }

    fn state_diag(pos: f64, yaw: f64, vel: f64, acc: f64, dim: f64) -> StateCov {
        let (p, y, v, a, d) = (pos * pos, yaw * yaw, vel * vel, acc * acc, dim * dim);
        StateCov::from_diagonal(&StateVec::from([p, p, p, y, v, v, a, a, d, d, d]))
    }

    pub fn q(&self) -> StateCov {
        Self::state_diag(self.q_pos, self.q_yaw, self.q_vel, self.q_acc, self.q_dim)
    }

    pub fn p_init(&self) -> StateCov {
        Self::state_diag(
            self.p0_pos,
            self.p0_yaw,
            self.p0_vel,
            self.p0_acc,
            self.p0_dim,
        )
    }

    pub fn filter_config(
        &self,
        variant: FilterVariant,
        kappa: f64,
        alpha_adapt: f64,
        dt: f64,
    ) -> FilterConfig {
        FilterConfig {
            variant,
            kappa,
            alpha_adapt,
            r_floor: RFloor::default(),
            r_init: self.r_init(),
            q: self.q(),
            p_init: self.p_init(),
            dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: TrackState,
    pub p: StateCov,
    /// Current measurement covariance; constant unless the variant adapts it.
    pub r: MeasCov,
}

impl FilterState {
    /// Initial state for a track born from `b`, at rest.
    pub fn from_detection(b: &Box3D, cfg: &FilterConfig) -> Self {
        Self {
            mean: TrackState::from_box(b),
            p: cfg.p_init,
            r: cfg.r_init,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: [StateVec; SIGMA_COUNT],
    pub weights: [f64; SIGMA_COUNT],
}

/// Lower-triangular `L` with `L Lᵀ = m` for positive semi-definite `m`.
///
/// Zero pivots are accepted (their column is zeroed), so singular PSD
/// matrices such as the zero matrix factor without jitter.
fn psd_cholesky(m: &StateCov) -> Option<StateCov> {
    let n = STATE_DIM;
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let tol = 1e-12 * scale;
    let mut l = StateCov::zeros();
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d >= -tol {
            // Zero pivot: the remaining column must vanish for a PSD input.
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-9 * scale {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

pub fn sigma_points(mean: &TrackState, p: &StateCov, kappa: f64) -> Result<SigmaSet> {
    let lk = STATE_DIM as f64 + kappa;
    if lk <= 0.0 {
        return Err(Error::CholeskyFailure);
    }
    let scaled = p * lk;
    let root = match psd_cholesky(&scaled) {
        Some(l) => l,
        None => psd_cholesky(&(scaled + StateCov::identity() * CHOLESKY_JITTER))
            .ok_or(Error::CholeskyFailure)?,
    };
    let mut points = [mean.0; SIGMA_COUNT];
    for i in 0..STATE_DIM {
        let col = root.column(i);
        points[1 + i] = mean.0 + col;
        points[1 + STATE_DIM + i] = mean.0 - col;
    }
    let mut weights = [0.5 / lk; SIGMA_COUNT];
    weights[0] = kappa / lk;
    Ok(SigmaSet { points, weights })
}

/// `p` symmetrized; if it no longer factors, negative eigenvalues from
/// round-off are clipped to zero. Factorable matrices pass unchanged.
fn repair_state_cov(p: &StateCov) -> StateCov {
    let sym = symmetrize(p);
    if psd_cholesky(&sym).is_some() {
        return sym;
    }
    let eig = SymmetricEigen::new(sym);
    let v = eig.eigenvectors;
    let clipped = eig.eigenvalues.map(|e| e.max(0.0));
    symmetrize(&(v * StateCov::from_diagonal(&clipped) * v.transpose()))
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Nearest symmetric matrix with eigenvalues at least [`R_EIGEN_FLOOR`].
/// Matrices already satisfying the floor are returned unchanged
/// (after symmetrization).
pub fn project_spd(m: &MeasCov) -> MeasCov {
    project_above(m, &(MeasCov::identity() * R_EIGEN_FLOOR))
}

/// Nearest symmetric `X` with `X − floor` positive semi-definite.
/// Matrices already above the floor are returned unchanged (after
/// symmetrization).
pub fn project_above(m: &MeasCov, floor: &MeasCov) -> MeasCov {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(symmetrize(&(sym - floor)));
    if eig.eigenvalues.iter().all(|&e| e >= 0.0) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|e| e.max(0.0));
    let v = eig.eigenvectors;
    symmetrize(&(floor + v * MeasCov::from_diagonal(&clipped) * v.transpose()))
}

/// Propagate the state one step of `cfg.dt`.
pub fn predict(fs: &FilterState, cfg: &FilterConfig) -> Result<FilterState> {
    if cfg.variant == FilterVariant::Kf {
        return Ok(kf_predict(fs, cfg));
    }
    let sigma = sigma_points(&fs.mean, &fs.p, cfg.kappa)?;
    let propagated = sigma.points.map(|s| motion(&s, cfg.dt));
    let mut mean = StateVec::zeros();
    for (w, s) in sigma.weights.iter().zip(&propagated) {
        mean += s * *w;
    }
    let mut p = cfg.q * cfg.dt;
    for (w, s) in sigma.weights.iter().zip(&propagated) {
        let d = s - mean;
        p += d * d.transpose() * *w;
    }
    let mut mean = TrackState(mean);
    mean.normalize();
    Ok(FilterState {
        mean,
        p: repair_state_cov(&p),
        r: fs.r,
    })
}

fn innovation(z: &MeasVec, z_hat: &MeasVec) -> MeasVec {
    let mut nu = z - z_hat;
    nu[MEAS_YAW] = normalize_angle(nu[MEAS_YAW]);
    nu
}

fn check_measurement(z: &MeasVec) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput("measurement"))
    }
}

/// The adapted measurement covariance for one update.
pub fn adapt_r(
    r_prev: &MeasCov,
    nu: &MeasVec,
    s_k: &MeasCov,
    confidence: f64,
    alpha: f64,
    floor: Option<&MeasCov>,
) -> MeasCov {
    let c = confidence.max(CONFIDENCE_FLOOR);
    let raw = (r_prev * (1.0 - alpha) + (nu * nu.transpose() - s_k) * alpha) * (1.0 / c);
    match floor {
        Some(f) => project_above(&raw, f),
        None => project_spd(&raw),
    }
}

/// Correct the state with measurement `z` reported at `confidence`.
pub fn update(
    fs: &FilterState,
    z: &MeasVec,
    confidence: f64,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    check_measurement(z)?;
    if !confidence.is_finite() {
        return Err(Error::NonFiniteInput("confidence"));
    }
    if cfg.variant == FilterVariant::Kf {
        return Ok(kf_update(fs, z, cfg));
    }
    let sigma = sigma_points(&fs.mean, &fs.p, cfg.kappa)?;
    let observed = sigma.points.map(|s| observe(&s));

    let mut z_hat = MeasVec::zeros();
    let mut x_bar = StateVec::zeros();
    for ((w, g), s) in sigma.weights.iter().zip(&observed).zip(&sigma.points) {
        z_hat += g * *w;
        x_bar += s * *w;
    }
    let mut spread = MeasCov::zeros();
    let mut cross = CrossCov::zeros();
    for ((w, g), s) in sigma.weights.iter().zip(&observed).zip(&sigma.points) {
        let dz = g - z_hat;
        let dx = s - x_bar;
        spread += dz * dz.transpose() * *w;
        cross += dx * dz.transpose() * *w;
    }
    let s_k = spread + cfg.r_init;
    let nu = innovation(z, &z_hat);

    let r = match cfg.variant {
        FilterVariant::DUkf => {
            let floor = match cfg.r_floor {
                RFloor::Spd => None,
                RFloor::Init => Some(&cfg.r_init),
            };
            adapt_r(&fs.r, &nu, &s_k, confidence, cfg.alpha_adapt, floor)
        }
        _ => cfg.r_init,
    };
    let s_gain = symmetrize(&(spread + r));
    let s_inv = s_gain
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s_gain.try_inverse())
        .ok_or(Error::CholeskyFailure)?;
    let gain = cross * s_inv;

    let mut mean = TrackState(fs.mean.0 + gain * nu);
    mean.normalize();
    let p = repair_state_cov(&(fs.p - gain * s_gain * gain.transpose()));
    Ok(FilterState { mean, p, r })
}

fn kf_predict(fs: &FilterState, cfg: &FilterConfig) -> FilterState {
    let f = transition_matrix(cfg.dt);
    let mut mean = TrackState(f * fs.mean.0);
    mean.normalize();
    let p = symmetrize(&(f * fs.p * f.transpose() + cfg.q * cfg.dt));
    FilterState { mean, p, r: fs.r }
}

fn kf_update(fs: &FilterState, z: &MeasVec, cfg: &FilterConfig) -> FilterState {
    let h = observation_matrix();
    let s = symmetrize(&(h * fs.p * h.transpose() + cfg.r_init));
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s.try_inverse())
        .unwrap_or_else(MeasCov::zeros);
    let gain = fs.p * h.transpose() * s_inv;
    let nu = innovation(z, &observe(&fs.mean.0));
    let mut mean = TrackState(fs.mean.0 + gain * nu);
    mean.normalize();
    let p = symmetrize(&(fs.p - gain * s * gain.transpose()));
    FilterState {
        mean,
        p,
        r: cfg.r_init,
    }
}

/// One predict + update cycle of the linear Kalman filter with fixed `R`.
pub fn baseline_kf_step(fs: &FilterState, z: &MeasVec, cfg: &FilterConfig) -> Result<FilterState> {
    check_measurement(z)?;
    Ok(kf_update(&kf_predict(fs, cfg), z, cfg))
}
