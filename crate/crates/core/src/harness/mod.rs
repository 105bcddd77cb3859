//! Scenario generation, training / evaluation / sweep orchestration and
//! file output.

mod output;

pub use output::{
    format_sig, sweep_csv, sweep_svg, training_csv, training_svg, write_outputs, write_training,
    Output, EVAL_HEADER, SWEEP_HEADER, TRAINING_HEADER,
};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{max_policy, random_policy};
use crate::dqn::{self, AgentConfig, Agent, Mlp};
use crate::env::{Env, EnvAction, Scenario, DEFAULT_HORIZON, DEFAULT_SECTOR_LIMIT};
use crate::error::{Error, Result};
use crate::metrics::{EvalSummary, MetricsLog};
use crate::network::{ConstraintConfig, Gbs, SectorState, SECTORS_PER_GBS};
use crate::radio::{dbm_to_watts, AntennaParams, ChannelParams, PathlossMode, Position};

/// RNG stream ids; one seed fans out into independent streams.
const STREAM_SCENARIO: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EVAL: u64 = 3;

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Channel knobs as they appear in config files (dB-side units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub alpha: f64,
    pub noise_dbm: f64,
    pub phi_ric: f64,
    pub rician_k: f64,
    pub rx_gain_dbi: f64,
    pub pathloss_mode: PathlossMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            noise_dbm: -104.0,
            phi_ric: 0.1,
            rician_k: 3.0,
            rx_gain_dbi: 0.0,
            pathloss_mode: PathlossMode::Literal,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            alpha: self.alpha,
            sigma2: dbm_to_watts(self.noise_dbm),
            phi_ric: self.phi_ric,
            rician_k: self.rician_k,
            rx_gain: 10f64.powf(self.rx_gain_dbi / 10.0),
            pathloss_mode: self.pathloss_mode,
        }
    }
}

/// Everything one experiment needs. Every field has a default, so a config
/// file may name only the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gbs_count: usize,
    /// Indices of GBSs switched off for energy saving.
    pub off_gbs: Vec<usize>,
    pub inter_site_distance: f64,
    pub gbs_height: f64,
    pub mu_height: f64,
    pub user_count: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub rsrp_threshold_dbm: f64,
    /// Defaults to half the MUs, rounded up.
    pub pi_thresh: Option<usize>,
    /// Defaults to twice an even share of MUs per active GBS.
    pub pi_k_max: Option<usize>,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub channel: ChannelConfig,
    pub antenna: AntennaParams,
    pub agent: AgentConfig,
    pub iterations: usize,
    pub horizon: usize,
    pub sector_limit: usize,
    pub freeze_users: bool,
    pub eval_episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mu_grid: Vec<usize>,
    pub distance_grid: Vec<f64>,
    /// Width of a distance band; the band for grid value `g` is
    /// `[max(g - width, floor), g]`.
    pub distance_band_width: f64,
    pub distance_band_floor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gbs_count: 2,
            off_gbs: vec![1],
            inter_site_distance: 500.0,
            gbs_height: 10.0,
            mu_height: 1.5,
            user_count: 15,
            d_min: 20.0,
            d_max: 200.0,
            rate_min: 0.5,
            rate_max: 2.0,
            rsrp_threshold_dbm: -100.0,
            pi_thresh: None,
            pi_k_max: None,
            p_min_dbm: 0.0,
            p_max_dbm: 45.0,
            channel: ChannelConfig::default(),
            antenna: AntennaParams::default(),
            agent: AgentConfig::default(),
            iterations: 20_000,
            horizon: DEFAULT_HORIZON,
            sector_limit: DEFAULT_SECTOR_LIMIT,
            freeze_users: false,
            eval_episodes: 20,
            seed: 0,
            output_dir: PathBuf::from("out"),
            mu_grid: vec![200, 500, 1000, 1500, 2000],
            distance_grid: vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0],
            distance_band_width: 50.0,
            distance_band_floor: 20.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let req = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, reason))
            }
        };
        req(self.gbs_count >= 1, "gbs_count", "must be >= 1")?;
        if let Some(&k) = self.off_gbs.iter().find(|&&k| k >= self.gbs_count) {
            return Err(Error::config("off_gbs", format!("index {k} >= gbs_count")));
        }
        let mut off = self.off_gbs.clone();
        off.sort_unstable();
        off.dedup();
        req(off.len() < self.gbs_count, "off_gbs", "at least one GBS must stay active")?;
        let active = self.gbs_count - off.len();
        req(
            active * SECTORS_PER_GBS <= self.sector_limit,
            "sector_limit",
            "active sectors exceed the configured limit",
        )?;
        req(self.inter_site_distance > 0.0, "inter_site_distance", "must be > 0")?;
        req(self.mu_height >= 0.0, "mu_height", "must be >= 0")?;
        req(self.gbs_height >= self.mu_height, "gbs_height", "must be >= mu_height")?;
        req(self.d_min > 0.0, "d_min", "must be > 0")?;
        req(self.d_min <= self.d_max, "d_max", "must be >= d_min")?;
        req(self.rate_min >= 0.0, "rate_min", "must be >= 0")?;
        req(self.rate_min <= self.rate_max, "rate_max", "must be >= rate_min")?;
        req(self.p_min_dbm < self.p_max_dbm, "p_max_dbm", "must exceed p_min_dbm")?;
        req(self.rsrp_threshold_dbm.is_finite(), "rsrp_threshold_dbm", "must be finite")?;
        if let Some(k) = self.pi_k_max {
            req(k >= 1, "pi_k_max", "must be >= 1")?;
        }
        req(self.horizon >= 1, "horizon", "must be >= 1")?;
        req(self.distance_band_width > 0.0, "distance_band_width", "must be > 0")?;
        req(self.distance_band_floor > 0.0, "distance_band_floor", "must be > 0")?;
        self.channel.params().validate()?;
        self.antenna.validate()?;
        self.agent.validate()?;
        Ok(())
    }

    pub fn active_gbs_count(&self) -> usize {
        (0..self.gbs_count).filter(|k| !self.off_gbs.contains(k)).count()
    }

    pub fn constraints(&self) -> ConstraintConfig {
        let u = self.user_count;
        ConstraintConfig {
            pi_thresh: self.pi_thresh.unwrap_or_else(|| ConstraintConfig::default_pi_thresh(u)),
            pi_k_max: self
                .pi_k_max
                .unwrap_or_else(|| ConstraintConfig::default_pi_k_max(u, self.active_gbs_count())),
            p_min_dbm: self.p_min_dbm,
            p_max_dbm: self.p_max_dbm,
            d_min: self.d_min,
            d_max: self.d_max,
            rate_min: self.rate_min,
            rate_max: self.rate_max,
        }
    }

    /// The `[d_min, d_max]` band a distance-grid value stands for.
    pub fn distance_band(&self, grid_value: f64) -> (f64, f64) {
        let lo = (grid_value - self.distance_band_width).max(self.distance_band_floor);
        (lo.min(grid_value), grid_value)
    }
}

/// Square-lattice layout, designated GBSs off, MUs drawn per the reset rule.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let cols = (cfg.gbs_count as f64).sqrt().ceil() as usize;
    let gbss = (0..cfg.gbs_count)
        .map(|i| Gbs {
            id: i,
            position: Position::new(
                (i % cols) as f64 * cfg.inter_site_distance,
                (i / cols) as f64 * cfg.inter_site_distance,
            ),
            height: cfg.gbs_height,
            active: !cfg.off_gbs.contains(&i),
            sectors: [SectorState {
                tilt_deg: crate::env::INITIAL_TILT_DEG,
                power_dbm: 0.5 * (cfg.p_min_dbm + cfg.p_max_dbm),
            }; SECTORS_PER_GBS],
        })
        .collect();
    let mut scn = Scenario {
        gbss,
        mus: Vec::new(),
        user_count: cfg.user_count,
        mu_height: cfg.mu_height,
        rsrp_threshold: dbm_to_watts(cfg.rsrp_threshold_dbm),
        constraints: cfg.constraints(),
        channel: cfg.channel.params(),
        antenna: cfg.antenna,
        horizon: cfg.horizon,
        sector_limit: cfg.sector_limit,
        freeze_users: cfg.freeze_users,
        seed: cfg.seed,
    };
    scn.validate()?;
    scn.sample_users(rng);
    Ok(scn)
}

/// Policies the harness can evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Greedy (ε = 0) action from a trained network.
    Dqn(&'a Mlp),
    Random,
    Max,
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Dqn(_) => "dqn",
            Policy::Random => "random",
            Policy::Max => "max",
        }
    }

    pub fn choose<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        s_count: usize,
        rng: &mut R,
    ) -> Result<EnvAction> {
        Ok(match self {
            Policy::Dqn(net) => EnvAction(dqn::argmax(&net.forward(features)?)),
            Policy::Random => random_policy(s_count, rng),
            Policy::Max => max_policy(s_count),
        })
    }
}

/// First step of the terminal window over which evaluation rewards are
/// averaged: the second half of the episode.
pub fn terminal_window_start(horizon: usize) -> usize {
    horizon / 2
}

/// Runs `episodes` fresh episodes and averages rewards over each episode's
/// terminal window.
pub fn evaluate_policy<R: Rng + ?Sized>(
    policy: Policy<'_>,
    scn: &Scenario,
    episodes: usize,
    rng: &mut R,
) -> Result<EvalSummary> {
    let mut env = Env::new(scn.clone())?;
    let s_count = scn.sector_count();
    let start = terminal_window_start(scn.horizon);
    let users = scn.user_count.max(1) as f64;
    let (mut reward_sum, mut served_sum, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..episodes {
        env.reset(rng)?;
        for t in 0..scn.horizon {
            let a = policy.choose(&env.features(), s_count, rng)?;
            let r = env.step(a)?;
            if t >= start {
                reward_sum += r.reward;
                served_sum += r.served_count as f64 / users;
                n += 1;
            }
        }
    }
    let n = n.max(1) as f64;
    let mean_reward = reward_sum / n;
    Ok(EvalSummary {
        policy: policy.name().to_string(),
        mean_reward,
        mean_reward_per_mu: mean_reward / scn.user_count.max(1) as f64,
        served_fraction: served_sum / n,
    })
}

/// Outcome of one training run.
pub struct TrainingRun {
    pub scenario: Scenario,
    pub agent: Agent,
    pub log: MetricsLog,
}

/// Generates the scenario from the config seed and trains a fresh agent.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingRun> {
    let scenario = generate_scenario(cfg, &mut rng_stream(cfg.seed, STREAM_SCENARIO))?;
    let mut env = Env::new(scenario.clone())?;
    let (agent, log) = dqn::train(&mut env, &cfg.agent, cfg.iterations, &mut rng_stream(cfg.seed, STREAM_TRAIN))?;
    Ok(TrainingRun {
        scenario,
        agent,
        log,
    })
}

/// Evaluates the trained network and both baselines on `scn`, each with
/// the same evaluation stream.
pub fn evaluate_all(net: &Mlp, scn: &Scenario, episodes: usize, seed: u64) -> Result<Vec<EvalSummary>> {
    [Policy::Dqn(net), Policy::Random, Policy::Max]
        .into_iter()
        .map(|p| evaluate_policy(p, scn, episodes, &mut rng_stream(seed, STREAM_EVAL)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    MuCount,
    DistanceBand,
}

impl SweepKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepKind::MuCount => "mu_count",
            SweepKind::DistanceBand => "distance_band",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
}

impl SweepSpec {
    pub fn mu_count(grid: &[usize]) -> Self {
        Self {
            kind: SweepKind::MuCount,
            grid: grid.iter().map(|&u| u as f64).collect(),
        }
    }

    pub fn distance(grid: &[f64]) -> Self {
        Self {
            kind: SweepKind::DistanceBand,
            grid: grid.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub value: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub users: usize,
    pub summary: EvalSummary,
}

/// The config a sweep uses at one grid point (seed offset by the index).
pub fn sweep_point(spec: &SweepSpec, cfg: &ExperimentConfig, index: usize) -> Result<ExperimentConfig> {
    let value = *spec
        .grid
        .get(index)
        .ok_or_else(|| Error::config("grid", "index out of range"))?;
    let mut c = cfg.clone();
    c.seed = cfg.seed.wrapping_add(index as u64);
    match spec.kind {
        SweepKind::MuCount => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::config("mu_grid", format!("{value} is not a user count")));
            }
            c.user_count = value as usize;
        }
        SweepKind::DistanceBand => {
            let (lo, hi) = cfg.distance_band(value);
            c.d_min = lo;
            c.d_max = hi;
        }
    }
    Ok(c)
}

/// For each grid value: regenerate, train fresh, evaluate all policies.
pub fn run_sweep(spec: &SweepSpec, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() {
        return Err(Error::config("grid", "sweep grid is empty"));
    }
    let mut rows = Vec::new();
    for (i, &value) in spec.grid.iter().enumerate() {
        let c = sweep_point(spec, cfg, i)?;
        let run = run_training(&c)?;
        for summary in evaluate_all(&run.agent.online, &run.scenario, c.eval_episodes, c.seed)? {
            rows.push(SweepRow {
                kind: spec.kind,
                value,
                d_min: c.d_min,
                d_max: c.d_max,
                users: c.user_count,
                summary,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_gbs_at_origin() {
        let cfg = ExperimentConfig {
            gbs_count: 1,
            off_gbs: vec![],
            ..ExperimentConfig::default()
        };
        let s = generate_scenario(&cfg, &mut rng_stream(0, 1)).unwrap();
        assert_eq!(s.gbss.len(), 1);
        assert_eq!(s.gbss[0].position, Position::ORIGIN);
        assert!(s.gbss[0].active);
    }

    #[test]
    fn all_off_is_a_config_error() {
        let cfg = ExperimentConfig {
            gbs_count: 2,
            off_gbs: vec![0, 1],
            ..ExperimentConfig::default()
        };
        match generate_scenario(&cfg, &mut rng_stream(0, 1)) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "off_gbs"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ExperimentConfig::default();
        let a = generate_scenario(&cfg, &mut rng_stream(9, 1)).unwrap();
        let b = generate_scenario(&cfg, &mut rng_stream(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lattice_layout() {
        let cfg = ExperimentConfig {
            gbs_count: 4,
            off_gbs: vec![3],
            sector_limit: 9,
            ..ExperimentConfig::default()
        };
        let s = generate_scenario(&cfg, &mut rng_stream(0, 1)).unwrap();
        let pos: Vec<(f64, f64)> = s.gbss.iter().map(|g| (g.position.x, g.position.y)).collect();
        assert_eq!(pos, vec![(0.0, 0.0), (500.0, 0.0), (0.0, 500.0), (500.0, 500.0)]);
        assert_eq!(s.sector_count(), 9);
    }

    #[test]
    fn distance_bands_follow_grid_convention() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.distance_band(50.0), (20.0, 50.0));
        assert_eq!(cfg.distance_band(100.0), (50.0, 100.0));
        assert_eq!(cfg.distance_band(200.0), (150.0, 200.0));
        assert_eq!(cfg.distance_band(400.0), (350.0, 400.0));
    }

    #[test]
    fn config_json_roundtrip_and_partial_files() {
        let cfg = ExperimentConfig::from_json(r#"{"user_count": 40, "channel": {"pathloss_mode": "single"}}"#).unwrap();
        assert_eq!(cfg.user_count, 40);
        assert_eq!(cfg.channel.pathloss_mode, PathlossMode::Single);
        assert_eq!(cfg.channel.alpha, 3.0);
        assert_eq!(cfg.agent.batch_size, 32);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"user_count": "many"}"#).is_err());
    }

    #[test]
    fn unreachable_users_earn_nothing_under_any_policy() {
        let cfg = ExperimentConfig {
            rsrp_threshold_dbm: 60.0,
            horizon: 10,
            ..ExperimentConfig::default()
        };
        let scn = generate_scenario(&cfg, &mut rng_stream(1, 1)).unwrap();
        let net = Mlp::new(&[6, 8, 729], &mut rng_stream(1, 2)).unwrap();
        for s in evaluate_all(&net, &scn, 2, 1).unwrap() {
            assert_eq!(s.mean_reward, 0.0, "{}", s.policy);
        }
    }

    #[test]
    fn max_policy_evaluation_is_reproducible() {
        let cfg = ExperimentConfig {
            gbs_count: 1,
            off_gbs: vec![],
            horizon: 20,
            ..ExperimentConfig::default()
        };
        let scn = generate_scenario(&cfg, &mut rng_stream(4, 1)).unwrap();
        let run = || evaluate_policy(Policy::Max, &scn, 3, &mut rng_stream(4, 3)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn small_sweep_has_one_row_per_value_and_policy() {
        let mut cfg = ExperimentConfig {
            iterations: 60,
            eval_episodes: 1,
            horizon: 10,
            ..ExperimentConfig::default()
        };
        cfg.agent.hidden_sizes = vec![8];
        cfg.agent.warmup = 32;
        let rows = run_sweep(&SweepSpec::mu_count(&[20, 40]), &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.summary.mean_reward >= 0.0));
        assert!(run_sweep(&SweepSpec::mu_count(&[]), &cfg).is_err());
    }
}
