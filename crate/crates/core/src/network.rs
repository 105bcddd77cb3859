//! Topology, GBS on/off state, MU association, the served-ness indicators
//! and the constraint ledger of the sum-rate problem.

use serde::{Deserialize, Serialize};

use crate::radio::{
    self, approx_rate, combined_gain_db, compute_angles, dbm_to_watts, distance_3d,
    AngleGeometry, AntennaParams, ChannelParams, Position,
};

/// Sector boresights (degrees from the x-axis), one antenna each.
pub const SECTOR_BORESIGHTS_DEG: [f64; 3] = [0.0, 120.0, -120.0];
pub const SECTORS_PER_GBS: usize = 3;
pub const TILT_MIN_DEG: f64 = 0.0;
pub const TILT_MAX_DEG: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorState {
    pub tilt_deg: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gbs {
    /// Index of this GBS within its scenario.
    pub id: usize,
    pub position: Position,
    pub height: f64,
    pub active: bool,
    pub sectors: [SectorState; SECTORS_PER_GBS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mu {
    pub id: usize,
    pub position: Position,
    pub height: f64,
    /// Rate requirement in bits/s/Hz.
    pub rate_threshold: f64,
    /// RSRP requirement in watts.
    pub rsrp_threshold: f64,
    /// GBS the MU was dropped around.
    pub anchor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Minimum number of served MUs.
    pub pi_thresh: usize,
    /// Per-GBS cap on attached MUs.
    pub pi_k_max: usize,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl ConstraintConfig {
    /// Default served-count threshold: half the MUs, rounded up.
    pub fn default_pi_thresh(user_count: usize) -> usize {
        user_count.div_ceil(2)
    }

    /// Default per-GBS capacity: twice an even share of the MUs.
    pub fn default_pi_k_max(user_count: usize, active_gbs: usize) -> usize {
        (user_count.div_ceil(active_gbs.max(1)) * 2).max(1)
    }
}

/// A tentatively attached (MU, GBS, sector) link and its indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub gbs: usize,
    pub sector: usize,
    pub rsrp: f64,
    pub d3d: f64,
    /// Approximated rate in bits/s/Hz.
    pub rate: f64,
    /// RSRP gate.
    pub vartheta: bool,
    /// Rate gate.
    pub gamma_ind: bool,
    /// Served: `vartheta && gamma_ind`.
    pub pi_ind: bool,
}

/// Per-MU serving link, `None` for unserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub links: Vec<Option<Link>>,
}

impl Assignment {
    pub fn served(&self) -> impl Iterator<Item = &Link> {
        self.links.iter().flatten().filter(|l| l.pi_ind)
    }

    pub fn served_count(&self) -> usize {
        self.served().count()
    }

    pub fn served_per_gbs(&self, gbs_count: usize) -> Vec<usize> {
        let mut counts = vec![0; gbs_count];
        for l in self.served() {
            counts[l.gbs] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    /// Served count reaches `pi_thresh`.
    pub min_served: bool,
    /// No GBS serves more than `pi_k_max`.
    pub capacity: bool,
    /// Every served MU meets its rate requirement.
    pub rate: bool,
    /// Every rate requirement lies in the configured band.
    pub rate_band: bool,
    pub power: bool,
    pub distance: bool,
    pub tilt: bool,
}

impl ConstraintReport {
    pub fn all(&self) -> bool {
        self.min_served
            && self.capacity
            && self.rate
            && self.rate_band
            && self.power
            && self.distance
            && self.tilt
    }
}

fn geometry(gbs: &Gbs, sector: usize, mu: &Mu) -> AngleGeometry {
    compute_angles(
        gbs.position,
        gbs.height,
        mu.position,
        mu.height,
        SECTOR_BORESIGHTS_DEG[sector],
    )
    // An MU directly below the mast sees every sector at boresight.
    .unwrap_or(AngleGeometry {
        theta_elev_deg: 90.0,
        psi_azim_deg: 0.0,
    })
}

fn sector_gain_db(gbs: &Gbs, sector: usize, mu: &Mu, ap: &AntennaParams) -> f64 {
    combined_gain_db(&geometry(gbs, sector, mu), gbs.sectors[sector].tilt_deg, ap)
}

/// Fading-free received power at `mu` from one sector.
pub fn rsrp(gbs: &Gbs, sector: usize, mu: &Mu, ch: &ChannelParams, ap: &AntennaParams) -> f64 {
    let d = distance_3d(gbs.position, gbs.height, mu.position, mu.height);
    let gain = sector_gain_db(gbs, sector, mu, ap);
    radio::received_power(dbm_to_watts(gbs.sectors[sector].power_dbm), 1.0, d, gain, ch)
}

/// Received power from the sector of `gbs` with the highest antenna gain
/// toward `mu`. Used as that GBS's interference contribution.
fn interference_from(gbs: &Gbs, mu: &Mu, ch: &ChannelParams, ap: &AntennaParams) -> f64 {
    let mut best = 0;
    let mut best_gain = f64::NEG_INFINITY;
    for s in 0..SECTORS_PER_GBS {
        let g = sector_gain_db(gbs, s, mu, ap);
        if g > best_gain {
            best_gain = g;
            best = s;
        }
    }
    rsrp(gbs, best, mu, ch, ap)
}

/// Best-RSRP association with per-GBS capacity eviction, followed by the
/// RSRP / rate / served indicators for every attached MU.
///
/// Ties go to the lowest (gbs, sector); eviction keeps the highest RSRP,
/// then the lowest MU id.
pub fn associate(
    gbss: &[Gbs],
    mus: &[Mu],
    ch: &ChannelParams,
    ap: &AntennaParams,
    cfg: &ConstraintConfig,
) -> Assignment {
    // Attach each MU to its strongest active sector.
    let mut attached: Vec<Option<(usize, usize, f64)>> = mus
        .iter()
        .map(|mu| {
            let mut best: Option<(usize, usize, f64)> = None;
            for gbs in gbss.iter().filter(|g| g.active) {
                for s in 0..SECTORS_PER_GBS {
                    let p = rsrp(gbs, s, mu, ch, ap);
                    if best.is_none_or(|(_, _, bp)| p > bp) {
                        best = Some((gbs.id, s, p));
                    }
                }
            }
            best
        })
        .collect();

    for gbs in gbss.iter().filter(|g| g.active) {
        let mut members: Vec<(usize, f64)> = attached
            .iter()
            .enumerate()
            .filter_map(|(u, a)| a.filter(|(k, _, _)| *k == gbs.id).map(|(_, _, p)| (u, p)))
            .collect();
        if members.len() <= cfg.pi_k_max {
            continue;
        }
        members.sort_by(|a, b| b.1.total_cmp(&a.1).then(mus[a.0].id.cmp(&mus[b.0].id)));
        for &(u, _) in &members[cfg.pi_k_max..] {
            attached[u] = None;
        }
    }

    let links = attached
        .into_iter()
        .zip(mus)
        .map(|(a, mu)| {
            let (k, s, p) = a?;
            let serving = &gbss[k];
            let interference: f64 = gbss
                .iter()
                .filter(|g| g.active && g.id != k)
                .map(|g| interference_from(g, mu, ch, ap))
                .sum();
            let nu = ch.phi_ric * interference + ch.sigma2;
            let d3d = distance_3d(serving.position, serving.height, mu.position, mu.height);
            let rate = approx_rate(p, nu, d3d, ch);
            let vartheta = p >= mu.rsrp_threshold;
            let gamma_ind = rate >= mu.rate_threshold;
            Some(Link {
                gbs: k,
                sector: s,
                rsrp: p,
                d3d,
                rate,
                vartheta,
                gamma_ind,
                pi_ind: vartheta && gamma_ind,
            })
        })
        .collect();
    Assignment { links }
}

/// Sum of approximated rates over served links.
pub fn objective_value(a: &Assignment) -> f64 {
    a.served().map(|l| l.rate).sum()
}

pub fn check_constraints(
    a: &Assignment,
    gbss: &[Gbs],
    mus: &[Mu],
    cfg: &ConstraintConfig,
) -> ConstraintReport {
    const EPS: f64 = 1e-9;
    let served_per_gbs = a.served_per_gbs(gbss.len());
    let rate = a
        .links
        .iter()
        .zip(mus)
        .all(|(l, mu)| l.is_none_or(|l| !l.pi_ind || l.rate >= mu.rate_threshold));
    let rate_band = mus
        .iter()
        .all(|m| m.rate_threshold >= cfg.rate_min && m.rate_threshold <= cfg.rate_max);
    let sectors = || gbss.iter().flat_map(|g| g.sectors.iter());
    let power = sectors().all(|s| s.power_dbm >= cfg.p_min_dbm && s.power_dbm <= cfg.p_max_dbm);
    let tilt = sectors().all(|s| (TILT_MIN_DEG..=TILT_MAX_DEG).contains(&s.tilt_deg));
    let distance = mus.iter().all(|m| {
        let d = gbss[m.anchor].position.distance_2d(&m.position);
        d >= cfg.d_min - EPS && d <= cfg.d_max + EPS
    });
    ConstraintReport {
        min_served: a.served_count() >= cfg.pi_thresh,
        capacity: served_per_gbs.iter().all(|&n| n <= cfg.pi_k_max),
        rate,
        rate_band,
        power,
        distance,
        tilt,
    }
}
