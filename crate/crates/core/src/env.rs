//! The decision process around the network: per-sector (tilt, power) state,
//! the joint `9^S` action space, clipped transitions and the gated reward.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{
    associate, check_constraints, objective_value, Assignment, ConstraintConfig, ConstraintReport,
    Gbs, Mu, SectorState, SECTORS_PER_GBS, TILT_MAX_DEG, TILT_MIN_DEG,
};
use crate::radio::{
    self, distance_3d, instantaneous_rate, sample_rician_power, AntennaParams, ChannelParams,
    Position,
};

pub const ACTIONS_PER_SECTOR: usize = 9;
pub const TILT_STEP_DEG: f64 = 1.0;
pub const POWER_STEP_DB: f64 = 5.0;
pub const DEFAULT_SECTOR_LIMIT: usize = 6;
pub const DEFAULT_HORIZON: usize = 100;
pub const INITIAL_TILT_DEG: f64 = 7.0;

/// One row per controllable sector plus the step index within the episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState {
    pub rows: Vec<SectorState>,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvAction(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorDelta {
    pub tilt_deg: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub constraints: ConstraintReport,
    /// Ungated sum of served rates.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub served_count: usize,
    pub done: bool,
    pub diagnostics: StepDiagnostics,
    pub assignment: Assignment,
}

/// Network, users, and every knob of one simulated episode family.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gbss: Vec<Gbs>,
    pub mus: Vec<Mu>,
    pub user_count: usize,
    pub mu_height: f64,
    /// Per-MU RSRP requirement in watts.
    pub rsrp_threshold: f64,
    pub constraints: ConstraintConfig,
    pub channel: ChannelParams,
    pub antenna: AntennaParams,
    pub horizon: usize,
    pub sector_limit: usize,
    /// Keep the current MUs across resets instead of resampling them.
    pub freeze_users: bool,
    pub seed: u64,
}

impl Scenario {
    /// Ids of the GBSs whose sectors the agent controls (the active ones).
    pub fn controllable(&self) -> impl Iterator<Item = &Gbs> {
        self.gbss.iter().filter(|g| g.active)
    }

    pub fn sector_count(&self) -> usize {
        self.controllable().count() * SECTORS_PER_GBS
    }

    pub fn action_count(&self) -> usize {
        ACTIONS_PER_SECTOR.pow(self.sector_count() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gbss.is_empty() {
            return Err(Error::InvalidScenario("no GBS in layout".into()));
        }
        if !self.gbss.iter().any(|g| g.active) {
            return Err(Error::InvalidScenario("no active GBS".into()));
        }
        if self.gbss.iter().enumerate().any(|(i, g)| g.id != i) {
            return Err(Error::InvalidScenario("GBS ids must match their index".into()));
        }
        let s = self.sector_count();
        if s > self.sector_limit {
            return Err(Error::InvalidScenario(format!(
                "{s} controllable sectors exceed the limit of {}",
                self.sector_limit
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidScenario("horizon must be >= 1".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> EnvState {
        let c = &self.constraints;
        let row = SectorState {
            tilt_deg: INITIAL_TILT_DEG,
            power_dbm: 0.5 * (c.p_min_dbm + c.p_max_dbm),
        };
        EnvState {
            rows: vec![row; self.sector_count()],
            t: 0,
        }
    }

    /// Layout with the state's tilts and powers applied to the active sectors.
    pub fn configured_gbss(&self, state: &EnvState) -> Vec<Gbs> {
        let mut gbss = self.gbss.clone();
        let mut rows = state.rows.iter();
        for g in gbss.iter_mut().filter(|g| g.active) {
            for s in g.sectors.iter_mut() {
                if let Some(r) = rows.next() {
                    *s = *r;
                }
            }
        }
        gbss
    }

    /// Redraws MU positions and rate requirements.
    pub fn sample_users<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let c = self.constraints;
        let (d_min, d_max) = (c.d_min, c.d_max);
        self.mus = (0..self.user_count)
            .map(|id| {
                let anchor = rng.random_range(0..self.gbss.len());
                let centre = self.gbss[anchor].position;
                // Uniform over the annulus area.
                let u: f64 = rng.random();
                let r = (d_min * d_min + u * (d_max * d_max - d_min * d_min)).sqrt();
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                let w: f64 = rng.random();
                Mu {
                    id,
                    position: Position::new(centre.x + r * phi.cos(), centre.y + r * phi.sin()),
                    height: self.mu_height,
                    rate_threshold: c.rate_min + w * (c.rate_max - c.rate_min),
                    rsrp_threshold: self.rsrp_threshold,
                    anchor,
                }
            })
            .collect();
    }
}

/// `9^s`, or `None` on overflow.
pub fn action_count(s_count: usize) -> Option<usize> {
    ACTIONS_PER_SECTOR.checked_pow(u32::try_from(s_count).ok()?)
}

/// Base-9 digits of an action, sector 0 least significant.
pub fn action_digits(a: EnvAction, s_count: usize) -> Result<Vec<usize>> {
    let limit = action_count(s_count).unwrap_or(usize::MAX);
    if a.0 >= limit {
        return Err(Error::IndexOutOfRange {
            index: a.0,
            sectors: s_count,
            limit,
        });
    }
    let mut rest = a.0;
    Ok((0..s_count)
        .map(|_| {
            let d = rest % ACTIONS_PER_SECTOR;
            rest /= ACTIONS_PER_SECTOR;
            d
        })
        .collect())
}

pub fn digit_delta(d: usize) -> SectorDelta {
    SectorDelta {
        tilt_deg: ((d / 3) as f64 - 1.0) * TILT_STEP_DEG,
        power_db: ((d % 3) as f64 - 1.0) * POWER_STEP_DB,
    }
}

pub fn decode_action(a: EnvAction, s_count: usize) -> Result<Vec<SectorDelta>> {
    Ok(action_digits(a, s_count)?.into_iter().map(digit_delta).collect())
}

/// Inverse of [`action_digits`].
pub fn encode_action(digits: &[usize]) -> EnvAction {
    EnvAction(digits.iter().rev().fold(0, |acc, &d| acc * ACTIONS_PER_SECTOR + d))
}

/// Resamples users (unless frozen) and returns the initial configuration.
pub fn reset<R: Rng + ?Sized>(scn: &mut Scenario, rng: &mut R) -> Result<EnvState> {
    scn.validate()?;
    if !scn.freeze_users || scn.mus.len() != scn.user_count {
        scn.sample_users(rng);
    }
    Ok(scn.initial_state())
}

fn clip_rows(state: &EnvState, deltas: &[SectorDelta], c: &ConstraintConfig) -> Vec<SectorState> {
    state
        .rows
        .iter()
        .zip(deltas)
        .map(|(row, d)| SectorState {
            tilt_deg: (row.tilt_deg + d.tilt_deg).clamp(TILT_MIN_DEG, TILT_MAX_DEG),
            power_dbm: (row.power_dbm + d.power_db).clamp(c.p_min_dbm, c.p_max_dbm),
        })
        .collect()
}

/// Association, constraint report, and gated reward for a configuration.
pub fn evaluate_state(state: &EnvState, scn: &Scenario) -> (f64, Assignment, StepDiagnostics) {
    let gbss = scn.configured_gbss(state);
    let a = associate(&gbss, &scn.mus, &scn.channel, &scn.antenna, &scn.constraints);
    let constraints = check_constraints(&a, &gbss, &scn.mus, &scn.constraints);
    let objective = objective_value(&a);
    let reward = if a.served_count() >= scn.constraints.pi_thresh {
        objective
    } else {
        0.0
    };
    (
        reward,
        a,
        StepDiagnostics {
            constraints,
            objective,
        },
    )
}

pub fn step(state: &EnvState, a: EnvAction, scn: &Scenario) -> Result<StepResult> {
    let s = scn.sector_count();
    if state.rows.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: state.rows.len(),
        });
    }
    let deltas = decode_action(a, s)?;
    let next_state = EnvState {
        rows: clip_rows(state, &deltas, &scn.constraints),
        t: state.t + 1,
    };
    let (reward, assignment, diagnostics) = evaluate_state(&next_state, scn);
    Ok(StepResult {
        done: next_state.t >= scn.horizon,
        served_count: assignment.served_count(),
        next_state,
        reward,
        diagnostics,
        assignment,
    })
}

/// Normalised network input: `tilt / 14` and the power position in its band.
pub fn encode_features(state: &EnvState, scn: &Scenario) -> Vec<f64> {
    let c = &scn.constraints;
    let span = c.p_max_dbm - c.p_min_dbm;
    state
        .rows
        .iter()
        .flat_map(|r| {
            [
                (r.tilt_deg - TILT_MIN_DEG) / (TILT_MAX_DEG - TILT_MIN_DEG),
                (r.power_dbm - c.p_min_dbm) / span,
            ]
        })
        .collect()
}

/// Faded instantaneous rates of attached MUs (diagnostics only).
pub fn faded_rates<R: Rng + ?Sized>(
    state: &EnvState,
    a: &Assignment,
    scn: &Scenario,
    rng: &mut R,
) -> Vec<Option<f64>> {
    let gbss = scn.configured_gbss(state);
    let ch = &scn.channel;
    a.links
        .iter()
        .zip(&scn.mus)
        .map(|(l, mu)| {
            let l = l.as_ref()?;
            let signal = l.rsrp * sample_rician_power(ch.rician_k, rng);
            let interferers: Vec<f64> = gbss
                .iter()
                .filter(|g| g.active && g.id != l.gbs)
                .map(|g| {
                    (0..SECTORS_PER_GBS)
                        .map(|s| crate::network::rsrp(g, s, mu, ch, &scn.antenna))
                        .fold(0.0, f64::max)
                })
                .collect();
            let d = distance_3d(gbss[l.gbs].position, gbss[l.gbs].height, mu.position, mu.height);
            Some(instantaneous_rate(radio::sinr(signal, &interferers, d, ch)))
        })
        .collect()
}

/// An environment instance: scenario plus the running state.
#[derive(Debug, Clone)]
pub struct Env {
    pub scenario: Scenario,
    state: EnvState,
}

impl Env {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let state = scenario.initial_state();
        Ok(Self { scenario, state })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn features(&self) -> Vec<f64> {
        encode_features(&self.state, &self.scenario)
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&EnvState> {
        self.state = reset(&mut self.scenario, rng)?;
        Ok(&self.state)
    }

    pub fn step(&mut self, a: EnvAction) -> Result<StepResult> {
        let r = step(&self.state, a, &self.scenario)?;
        self.state = r.next_state.clone();
        Ok(r)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::network::SectorState;
    use crate::radio::dbm_to_watts;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_scenario(users: usize, gbs_count: usize) -> Scenario {
        let gbss = (0..gbs_count)
            .map(|i| Gbs {
                id: i,
                position: Position::new(500.0 * i as f64, 0.0),
                height: 10.0,
                active: i == 0,
                sectors: [SectorState {
                    tilt_deg: INITIAL_TILT_DEG,
                    power_dbm: 22.5,
                }; 3],
            })
            .collect();
        Scenario {
            gbss,
            mus: Vec::new(),
            user_count: users,
            mu_height: 1.5,
            rsrp_threshold: dbm_to_watts(-100.0),
            constraints: ConstraintConfig {
                pi_thresh: users.div_ceil(2),
                pi_k_max: users.max(1) * 2,
                p_min_dbm: 0.0,
                p_max_dbm: 45.0,
                d_min: 20.0,
                d_max: 200.0,
                rate_min: 0.1,
                rate_max: 1.0,
            },
            channel: ChannelParams::default(),
            antenna: AntennaParams::default(),
            horizon: DEFAULT_HORIZON,
            sector_limit: DEFAULT_SECTOR_LIMIT,
            freeze_users: false,
            seed: 0,
        }
    }

    fn delta(t: f64, p: f64) -> SectorDelta {
        SectorDelta {
            tilt_deg: t,
            power_db: p,
        }
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_action(EnvAction(4), 1).unwrap(), vec![delta(0.0, 0.0)]);
        assert_eq!(decode_action(EnvAction(0), 1).unwrap(), vec![delta(-1.0, -5.0)]);
        assert_eq!(
            decode_action(EnvAction(80), 2).unwrap(),
            vec![delta(1.0, 5.0), delta(1.0, 5.0)]
        );
        assert!(matches!(
            decode_action(EnvAction(81), 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn decode_encode_roundtrip_exhaustive() {
        for s in 1..=3 {
            for i in 0..action_count(s).unwrap() {
                let digits = action_digits(EnvAction(i), s).unwrap();
                assert_eq!(encode_action(&digits), EnvAction(i));
            }
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = small_scenario(10, 2);
        let mut b = small_scenario(10, 2);
        reset(&mut a, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        reset(&mut b, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.mus, b.mus);
    }

    #[test]
    fn degenerate_annulus_places_on_circle() {
        let mut s = small_scenario(20, 2);
        s.constraints.d_min = 75.0;
        s.constraints.d_max = 75.0;
        reset(&mut s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for m in &s.mus {
            let d = s.gbss[m.anchor].position.distance_2d(&m.position);
            assert!((d - 75.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_network_rewards_nothing() {
        let mut s = small_scenario(0, 1);
        let st = reset(&mut s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.constraints.pi_thresh, 0);
        let r = step(&st, EnvAction(4 + 9 * 4 + 81 * 4), &s).unwrap();
        assert_eq!(r.reward, 0.0);
        s.constraints.pi_thresh = 1;
        let r = step(&st, EnvAction(0), &s).unwrap();
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn reset_rejects_all_off() {
        let mut s = small_scenario(3, 2);
        s.gbss[0].active = false;
        assert!(matches!(
            reset(&mut s, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn sector_limit_enforced() {
        let mut s = small_scenario(3, 3);
        for g in &mut s.gbss {
            g.active = true;
        }
        assert!(s.validate().is_err());
        s.sector_limit = 9;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn tilt_clamps_at_upper_bound() {
        let mut s = small_scenario(5, 1);
        let mut st = reset(&mut s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        st.rows[0].tilt_deg = 14.0;
        // digit 7 = (+1 deg, 0 dB) on sector 0, identity elsewhere
        let a = encode_action(&[7, 4, 4]);
        let r = step(&st, a, &s).unwrap();
        assert_eq!(r.next_state.rows[0].tilt_deg, 14.0);
    }

    #[test]
    fn unserved_network_rewards_zero() {
        let mut s = small_scenario(6, 2);
        reset(&mut s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // Push everyone out of reach of the RSRP gate.
        s.rsrp_threshold = 1.0;
        for m in &mut s.mus {
            m.rsrp_threshold = 1.0;
        }
        let st = s.initial_state();
        let r = step(&st, EnvAction(0), &s).unwrap();
        assert!(r.served_count < s.constraints.pi_thresh);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn identity_action_is_a_fixed_point() {
        let mut s = small_scenario(8, 2);
        let st = reset(&mut s, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let r = step(&st, encode_action(&[4, 4, 4]), &s).unwrap();
        assert_eq!(r.next_state.rows, st.rows);
        let (expected, _, _) = evaluate_state(&st, &s);
        assert_eq!(r.reward, expected);
    }

    #[test]
    fn horizon_sets_done() {
        let mut s = small_scenario(4, 1);
        s.horizon = 3;
        let mut env = Env::new(s).unwrap();
        env.reset(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let id = encode_action(&[4, 4, 4]);
        assert!(!env.step(id).unwrap().done);
        assert!(!env.step(id).unwrap().done);
        assert!(env.step(id).unwrap().done);
    }

    #[test]
    fn feature_examples() {
        let s = small_scenario(1, 1);
        let row = |t, p| SectorState {
            tilt_deg: t,
            power_dbm: p,
        };
        let st = EnvState {
            rows: vec![row(0.0, 0.0), row(14.0, 45.0), row(7.0, 22.5)],
            t: 0,
        };
        assert_eq!(
            encode_features(&st, &s),
            vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5]
        );
    }

    #[test]
    fn single_sector_bounds_exhaustive_from_corners() {
        let s = small_scenario(3, 1);
        let c = s.constraints;
        for tilt in [TILT_MIN_DEG, TILT_MAX_DEG] {
            for p in [c.p_min_dbm, c.p_max_dbm] {
                let st = EnvState {
                    rows: vec![SectorState { tilt_deg: tilt, power_dbm: p }],
                    t: 0,
                };
                for d in 0..9 {
                    let rows = clip_rows(&st, &[digit_delta(d)], &c);
                    assert!((TILT_MIN_DEG..=TILT_MAX_DEG).contains(&rows[0].tilt_deg));
                    assert!((c.p_min_dbm..=c.p_max_dbm).contains(&rows[0].power_dbm));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn trajectories_stay_in_bounds_and_replay(seed in 0u64..1000, actions in prop::collection::vec(0usize..729, 1..40)) {
            let mut s = small_scenario(6, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = reset(&mut s, &mut rng).unwrap();
            let mut rewards = Vec::new();
            for &a in &actions {
                let r = step(&st, EnvAction(a), &s).unwrap();
                for row in &r.next_state.rows {
                    prop_assert!((0.0..=14.0).contains(&row.tilt_deg));
                    prop_assert!((0.0..=45.0).contains(&row.power_dbm));
                }
                prop_assert!(r.reward >= 0.0);
                if r.reward > 0.0 {
                    prop_assert!(r.served_count >= s.constraints.pi_thresh);
                }
                rewards.push(r.reward);
                st = r.next_state;
            }
            // same seed and actions replay bit-for-bit
            let mut s2 = small_scenario(6, 2);
            let mut st2 = reset(&mut s2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (&a, &r0) in actions.iter().zip(&rewards) {
                let r = step(&st2, EnvAction(a), &s2).unwrap();
                prop_assert_eq!(r.reward.to_bits(), r0.to_bits());
                st2 = r.next_state;
            }
        }

        #[test]
        fn reward_bounded_by_unconstrained_peak(seed in 0u64..200, a in 0usize..729) {
            let mut s = small_scenario(6, 1);
            let st = reset(&mut s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let r = step(&st, EnvAction(a), &s).unwrap();
            // Peak per-MU rate: max power, peak gain, no interference.
            let c = s.constraints;
            let ch = s.channel;
            let g = &s.gbss[0];
            let bound: f64 = s.mus.iter().map(|m| {
                let d = distance_3d(g.position, g.height, m.position, m.height);
                let p = radio::received_power(dbm_to_watts(c.p_max_dbm), 1.0, d, s.antenna.g_max_dbi + s.antenna.elev_peak_dbi, &ch);
                radio::approx_rate(p, ch.sigma2, d, &ch)
            }).sum();
            prop_assert!(r.reward <= bound + 1e-9);
        }
    }
}
