//! Closed-form radio physics: geometry, 3GPP-style sector antenna gains,
//! Rician fading, received power and throughput.
//!
//! Angles are degrees at the API boundary. Powers are linear watts; the
//! [`dbm_to_watts`] / [`db_to_linear`] helpers convert config-side values.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant used by the fading-averaged rate approximation.
pub const EULER_GAMMA: f64 = 0.5772156649;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_2d(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// How the distance term enters SINR and the approximated rate.
///
/// `Literal` divides by `d^alpha` a second time on top of the path loss
/// already inside the received power; `Single` counts path loss once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathlossMode {
    #[default]
    Literal,
    Single,
}

impl std::str::FromStr for PathlossMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "literal" => Ok(PathlossMode::Literal),
            "single" => Ok(PathlossMode::Single),
            other => Err(format!("unknown pathloss mode `{other}` (expected literal|single)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Noise power in watts.
    pub sigma2: f64,
    /// Residual-interference coefficient in `[0, 1]`.
    pub phi_ric: f64,
    /// Rician K-factor (linear). `f64::INFINITY` is pure line of sight.
    pub rician_k: f64,
    /// MU receive gain (linear).
    pub rx_gain: f64,
    pub pathloss_mode: PathlossMode,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            sigma2: dbm_to_watts(-104.0),
            phi_ric: 0.1,
            rician_k: 3.0,
            rx_gain: 1.0,
            pathloss_mode: PathlossMode::Literal,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("channel.alpha", "must be a finite value > 0"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("channel.sigma2", "must be a finite value > 0"));
        }
        if !(0.0..=1.0).contains(&self.phi_ric) {
            return Err(Error::config("channel.phi_ric", "must lie in [0, 1]"));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::config("channel.rician_k", "must be >= 0"));
        }
        if !(self.rx_gain > 0.0 && self.rx_gain.is_finite()) {
            return Err(Error::config("channel.rx_gain", "must be a finite value > 0"));
        }
        Ok(())
    }

    /// `d^alpha` when the distance term is counted a second time, else 1.
    fn extra_distance_factor(&self, d3d: f64) -> f64 {
        match self.pathloss_mode {
            PathlossMode::Literal => d3d.powf(self.alpha),
            PathlossMode::Single => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaParams {
    pub g_max_dbi: f64,
    pub psi_3db_deg: f64,
    /// Azimuth front-back ratio (dB).
    pub front_back_f_db: f64,
    pub theta_3db_deg: f64,
    /// Elevation side-lobe clamp (dB).
    pub elev_floor_db: f64,
    pub elev_peak_dbi: f64,
}

impl Default for AntennaParams {
    fn default() -> Self {
        Self {
            g_max_dbi: 14.0,
            psi_3db_deg: 70.0,
            front_back_f_db: 20.0,
            theta_3db_deg: 65.0,
            elev_floor_db: 20.0,
            elev_peak_dbi: 0.0,
        }
    }
}

impl AntennaParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("antenna.psi_3db_deg", self.psi_3db_deg),
            ("antenna.theta_3db_deg", self.theta_3db_deg),
            ("antenna.front_back_f_db", self.front_back_f_db),
            ("antenna.elev_floor_db", self.elev_floor_db),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be a finite value > 0"));
            }
        }
        if !self.g_max_dbi.is_finite() || !self.elev_peak_dbi.is_finite() {
            return Err(Error::config("antenna", "gains must be finite"));
        }
        Ok(())
    }
}

/// Elevation and (boresight-relative) azimuth of an MU seen from a sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleGeometry {
    pub theta_elev_deg: f64,
    /// In `(-180, 180]`.
    pub psi_azim_deg: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w <= -180.0 {
        w + 360.0
    } else {
        w
    }
}

pub fn distance_3d(gbs_pos: Position, h_k: f64, mu_pos: Position, h_u: f64) -> f64 {
    let dh = h_k - h_u;
    let d2 = gbs_pos.distance_2d(&mu_pos);
    (dh * dh + d2 * d2).sqrt()
}

pub fn compute_angles(
    gbs_pos: Position,
    h_k: f64,
    mu_pos: Position,
    h_u: f64,
    sector_azimuth_deg: f64,
) -> Result<AngleGeometry> {
    let dx = mu_pos.x - gbs_pos.x;
    let dy = mu_pos.y - gbs_pos.y;
    let d2 = dx.hypot(dy);
    if d2 == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let theta_elev_deg = ((h_k - h_u) / d2).atan().to_degrees();
    let bearing = dy.atan2(dx).to_degrees();
    Ok(AngleGeometry {
        theta_elev_deg,
        psi_azim_deg: wrap_degrees(bearing - sector_azimuth_deg),
    })
}

pub fn azimuth_gain_db(psi_azim_deg: f64, p: &AntennaParams) -> f64 {
    let r = psi_azim_deg / p.psi_3db_deg;
    -(12.0 * r * r).min(p.front_back_f_db) + p.g_max_dbi
}

pub fn elevation_gain_db(theta_elev_deg: f64, tilt_deg: f64, p: &AntennaParams) -> f64 {
    let r = (theta_elev_deg - tilt_deg) / p.theta_3db_deg;
    -(12.0 * r * r).min(p.elev_floor_db) + p.elev_peak_dbi
}

/// Plain dB sum of the azimuth and elevation patterns.
pub fn combined_gain_db(g: &AngleGeometry, tilt_deg: f64, p: &AntennaParams) -> f64 {
    azimuth_gain_db(g.psi_azim_deg, p) + elevation_gain_db(g.theta_elev_deg, tilt_deg, p)
}

/// Draws a unit-mean Rician power gain `|h|^2`.
pub fn sample_rician_power<R: Rng + ?Sized>(k_factor: f64, rng: &mut R) -> f64 {
    if k_factor.is_infinite() {
        return 1.0;
    }
    let los = (k_factor / (k_factor + 1.0)).sqrt();
    let nlos = (1.0 / (k_factor + 1.0)).sqrt();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    // CN(0, 1): each quadrature carries variance 1/2.
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let hr = los * phase.cos() + nlos * re * s;
    let hi = los * phase.sin() + nlos * im * s;
    hr * hr + hi * hi
}

pub fn received_power(p_tx: f64, h2: f64, d3d: f64, gain_db: f64, ch: &ChannelParams) -> f64 {
    p_tx * h2 * d3d.powf(-ch.alpha) * db_to_linear(gain_db) * ch.rx_gain
}

pub fn sinr(signal_rx: f64, interferer_rx: &[f64], d3d: f64, ch: &ChannelParams) -> f64 {
    let residual: f64 = interferer_rx.iter().sum::<f64>() * ch.phi_ric;
    signal_rx / (ch.extra_distance_factor(d3d) * (residual + ch.sigma2))
}

pub fn instantaneous_rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Fading-averaged throughput approximation, `log2(1 + e^-E * snr_hat)`.
///
/// `p_hat` is the fading-free received power and `denom_nu` the residual
/// interference plus noise seen by the MU.
pub fn approx_rate(p_hat: f64, denom_nu: f64, d3d: f64, ch: &ChannelParams) -> f64 {
    let snr = p_hat / (ch.extra_distance_factor(d3d) * denom_nu);
    (1.0 + (-EULER_GAMMA).exp() * snr).log2()
}
