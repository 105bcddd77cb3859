//! From-scratch deep Q-learning: network, replay, ε-greedy behaviour,
//! target network and the Bellman-target training loop.

mod adam;
pub mod checkpoint;
mod mlp;
mod replay;

pub use adam::Adam;
pub use mlp::{Gradients, Layer, Mlp};
pub use replay::{Experience, ReplayBuffer};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvAction, Env};
use crate::error::{Error, Result};
use crate::metrics::MetricsLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Discount factor in `(0, 1]`.
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub target_sync_period: usize,
    pub hidden_sizes: Vec<usize>,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    pub buffer_capacity: usize,
    /// Multiplier applied to environment rewards before they are stored.
    pub reward_scale: f64,
    /// Pick the bootstrap action with the online network and value it with
    /// the target network.
    pub double_q: bool,
    /// Trailing window of the logged moving-average reward.
    pub moving_average_window: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            target_sync_period: 200,
            hidden_sizes: vec![128, 128],
            warmup: 500,
            buffer_capacity: 20_000,
            reward_scale: 0.05,
            double_q: true,
            moving_average_window: 200,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, reason))
            }
        };
        check(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "agent.learning_rate", "must be > 0")?;
        check(self.batch_size >= 1, "agent.batch_size", "must be >= 1")?;
        check(self.discount > 0.0 && self.discount <= 1.0, "agent.discount", "must lie in (0, 1]")?;
        for (f, v) in [("agent.epsilon_start", self.epsilon_start), ("agent.epsilon_end", self.epsilon_end)] {
            check((0.0..=1.0).contains(&v), f, "must lie in [0, 1]")?;
        }
        check(self.target_sync_period >= 1, "agent.target_sync_period", "must be >= 1")?;
        check(self.buffer_capacity >= 1, "agent.buffer_capacity", "must be >= 1")?;
        check(!self.hidden_sizes.contains(&0), "agent.hidden_sizes", "layers must be non-empty")?;
        check(self.reward_scale > 0.0 && self.reward_scale.is_finite(), "agent.reward_scale", "must be > 0")?;
        check(self.moving_average_window >= 1, "agent.moving_average_window", "must be >= 1")?;
        Ok(())
    }

    pub fn layer_sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden_sizes);
        s.push(outputs);
        s
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_steps: self.epsilon_decay_steps,
        }
    }
}

/// Linear interpolation from `start` to `end`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, t: usize) -> f64 {
        if t >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * t as f64 / self.decay_steps as f64
    }
}

/// Lowest index among the maxima.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

fn explore_or<R: Rng + ?Sized>(
    n: usize,
    epsilon: f64,
    rng: &mut R,
    greedy: impl FnOnce() -> usize,
) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..n)
    } else {
        greedy()
    }
}

/// ε-greedy choice over `q_values`.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_values.is_empty(), "select_action needs at least one value");
    explore_or(q_values.len(), epsilon, rng, || argmax(q_values))
}

/// `r` for terminal items, else `r + discount * max_a' Q_target(s', a')`.
pub fn td_targets(batch: &[&Experience], target_net: &Mlp, discount: f64) -> Result<Vec<f64>> {
    let mut trace = mlp::Trace::default();
    batch
        .iter()
        .map(|e| {
            if e.done {
                return Ok(e.reward);
            }
            if e.next_state.len() != target_net.input_size() {
                return Err(Error::DimensionMismatch {
                    expected: target_net.input_size(),
                    got: e.next_state.len(),
                });
            }
            Ok(e.reward + discount * target_net.max_output(&e.next_state, &mut trace))
        })
        .collect()
}

/// `r` for terminal items, else `r + discount * Q_target(s', argmax_a' Q_online(s', a'))`.
pub fn double_td_targets(batch: &[&Experience], online: &Mlp, target_net: &Mlp, discount: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|e| {
            if e.done {
                return Ok(e.reward);
            }
            let a = argmax(&online.forward(&e.next_state)?);
            Ok(e.reward + discount * target_net.forward(&e.next_state)?[a])
        })
        .collect()
}

/// Online network, target network, optimiser state and replay memory.
#[derive(Debug, Clone)]
pub struct Agent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    pub buffer: ReplayBuffer,
    pub cfg: AgentConfig,
    grads: Gradients,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        cfg: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let online = Mlp::new(&cfg.layer_sizes(inputs, outputs), rng)?;
        Ok(Self::from_network(online, cfg))
    }

    pub fn from_network(online: Mlp, cfg: AgentConfig) -> Self {
        Self {
            target: online.clone(),
            optimizer: Adam::new(&online, cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            grads: Gradients::zeros_like(&online),
            online,
            cfg,
        }
    }

    pub fn min_buffer(&self) -> usize {
        self.cfg.batch_size.max(self.cfg.warmup)
    }

    /// ε-greedy action; the network runs only when exploiting.
    pub fn act<R: Rng + ?Sized>(&self, features: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        let n = self.online.output_size();
        let mut err = None;
        let a = explore_or(n, epsilon, rng, || match self.online.forward(features) {
            Ok(q) => argmax(&q),
            Err(e) => {
                err = Some(e);
                0
            }
        });
        err.map_or(Ok(a), Err)
    }

    pub fn greedy(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.online.forward(features)?))
    }

    /// One mini-batch regression step toward the Bellman targets; returns
    /// the loss before the update.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let need = self.min_buffer();
        if self.buffer.len() < need {
            return Err(Error::InsufficientData {
                have: self.buffer.len(),
                need,
            });
        }
        let batch = self.buffer.sample(self.cfg.batch_size, rng);
        let targets = if self.cfg.double_q {
            double_td_targets(&batch, &self.online, &self.target, self.cfg.discount)?
        } else {
            td_targets(&batch, &self.target, self.cfg.discount)?
        };
        let inputs: Vec<&[f64]> = batch.iter().map(|e| e.state.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let loss = self
            .online
            .taken_action_loss_and_grad(&inputs, &actions, &targets, &mut self.grads)?;
        self.optimizer.step(&mut self.online, &self.grads);
        Ok(loss)
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_from(&self.online)
    }
}

/// Runs the ε-greedy interaction / replay / target-sync loop for
/// `total_iterations` environment steps.
pub fn train<R: Rng + ?Sized>(
    env: &mut Env,
    cfg: &AgentConfig,
    total_iterations: usize,
    rng: &mut R,
) -> Result<(Agent, MetricsLog)> {
    let inputs = 2 * env.scenario.sector_count();
    let outputs = env.scenario.action_count();
    let mut agent = Agent::new(inputs, outputs, cfg.clone(), rng)?;
    let mut log = MetricsLog::new(cfg.moving_average_window);
    if total_iterations == 0 {
        return Ok((agent, log));
    }
    let schedule = cfg.epsilon();
    env.reset(rng)?;
    let mut features = env.features();
    for it in 0..total_iterations {
        let epsilon = schedule.value(it);
        let action = agent.act(&features, epsilon, rng)?;
        let r = env.step(EnvAction(action))?;
        let next = env.features();
        agent.buffer.push(Experience {
            state: std::mem::take(&mut features),
            action,
            reward: r.reward * cfg.reward_scale,
            next_state: next.clone(),
            done: r.done,
        });
        let loss = if agent.buffer.len() >= agent.min_buffer() {
            Some(agent.train_step(rng)?)
        } else {
            None
        };
        if (it + 1) % cfg.target_sync_period == 0 {
            agent.sync_target()?;
        }
        log.push(it, r.reward, loss, epsilon, r.served_count);
        features = if r.done {
            env.reset(rng)?;
            env.features()
        } else {
            next
        };
    }
    Ok((agent, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::small_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(reward: f64, done: bool, next: Vec<f64>) -> Experience {
        Experience {
            state: vec![0.0; next.len()],
            action: 0,
            reward,
            next_state: next,
            done,
        }
    }

    #[test]
    fn greedy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[5.0, 5.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[select_action(&[0.0, 9.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            let p = c as f64 / n as f64;
            assert!((p - 0.2).abs() / 0.2 < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn shifted_values_keep_the_argmax() {
        let q = [0.3, -1.0, 2.5, 2.4];
        let shifted: Vec<f64> = q.iter().map(|v| v + 100.0).collect();
        assert_eq!(argmax(&q), argmax(&shifted));
    }

    #[test]
    fn td_target_examples() {
        // Output fixed at 2 regardless of input.
        let mut net = Mlp::zeros(&[1, 2]).unwrap();
        net.layers[0].biases = vec![2.0, -1.0];
        let done = exp(2.0, true, vec![0.5]);
        let live = exp(1.0, false, vec![0.5]);
        assert_eq!(td_targets(&[&done], &net, 0.9).unwrap(), vec![2.0]);
        assert_eq!(td_targets(&[&live], &net, 0.0).unwrap(), vec![1.0]);
        let t = td_targets(&[&live], &net, 0.9).unwrap()[0];
        assert!((t - 2.8).abs() < 1e-12);
    }

    #[test]
    fn double_targets_value_the_online_choice() {
        let mut target = Mlp::zeros(&[1, 2]).unwrap();
        target.layers[0].biases = vec![2.0, -1.0];
        let live = exp(1.0, false, vec![0.5]);
        let done = exp(2.0, true, vec![0.5]);
        // Same network: identical to the plain target.
        assert_eq!(
            double_td_targets(&[&live, &done], &target, &target, 0.9).unwrap(),
            td_targets(&[&live, &done], &target, 0.9).unwrap()
        );
        // Online prefers action 1, which the target values at -1.
        let mut online = target.clone();
        online.layers[0].biases = vec![0.0, 5.0];
        let t = double_td_targets(&[&live], &online, &target, 0.9).unwrap()[0];
        assert!((t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn epsilon_schedule_shape() {
        let s = AgentConfig::default().epsilon();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(10_000), 0.05);
        assert_eq!(s.value(50_000), 0.05);
        let mut prev = s.value(0);
        for t in (0..12_000).step_by(37) {
            let v = s.value(t);
            assert!(v <= prev);
            prev = v;
        }
    }

    fn tiny_agent(rng: &mut ChaCha8Rng) -> Agent {
        let cfg = AgentConfig {
            hidden_sizes: vec![8],
            warmup: 1,
            batch_size: 4,
            ..AgentConfig::default()
        };
        Agent::new(2, 3, cfg, rng).unwrap()
    }

    #[test]
    fn train_step_needs_warmup() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = tiny_agent(&mut rng);
        assert!(matches!(
            agent.train_step(&mut rng),
            Err(Error::InsufficientData { have: 0, need: 4 })
        ));
    }

    #[test]
    fn fixed_point_targets_give_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = tiny_agent(&mut rng);
        let s = vec![0.2, 0.7];
        let q = agent.online.forward(&s).unwrap();
        for _ in 0..4 {
            agent.buffer.push(Experience {
                state: s.clone(),
                action: 1,
                reward: q[1],
                next_state: s.clone(),
                done: true,
            });
        }
        let before = agent.online.clone();
        let loss = agent.train_step(&mut rng).unwrap();
        assert!(loss < 1e-24);
        let drift = before
            .layers
            .iter()
            .zip(&agent.online.layers)
            .flat_map(|(a, b)| a.weights.iter().zip(&b.weights))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn single_transition_regression_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut agent = tiny_agent(&mut rng);
        let e = Experience {
            state: vec![0.5, 0.5],
            action: 2,
            reward: 3.0,
            next_state: vec![0.5, 0.5],
            done: true,
        };
        for _ in 0..agent.min_buffer() {
            agent.buffer.push(e.clone());
        }
        let mut last = f64::INFINITY;
        let mut losses = Vec::new();
        for _ in 0..2000 {
            last = agent.train_step(&mut rng).unwrap();
            losses.push(last);
        }
        assert!(last < 1e-6, "final loss {last}");
        assert!(losses[1999] < losses[0]);
    }

    #[test]
    fn sync_copies_and_target_stays_stale() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut agent = tiny_agent(&mut rng);
        let init = agent.target.clone();
        for i in 0..8 {
            agent.buffer.push(Experience {
                state: vec![i as f64 / 8.0, 0.1],
                action: i % 3,
                reward: 1.0,
                next_state: vec![0.0, 0.0],
                done: false,
            });
        }
        agent.train_step(&mut rng).unwrap();
        assert_eq!(agent.target, init);
        assert_ne!(agent.online, agent.target);
        agent.sync_target().unwrap();
        for f in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(agent.online.forward(&f).unwrap(), agent.target.forward(&f).unwrap());
        }
        agent.train_step(&mut rng).unwrap();
        assert_ne!(agent.online, agent.target);
    }

    #[test]
    fn sync_rejects_other_shapes() {
        let mut a = Mlp::zeros(&[2, 3]).unwrap();
        let b = Mlp::zeros(&[2, 4]).unwrap();
        assert!(matches!(a.copy_from(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_iterations_returns_fresh_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = Env::new(small_scenario(4, 1)).unwrap();
        let (agent, log) = train(&mut env, &AgentConfig::default(), 0, &mut rng).unwrap();
        assert!(log.rows.is_empty());
        assert_eq!(agent.online, agent.target);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = AgentConfig {
            hidden_sizes: vec![16, 16],
            warmup: 50,
            epsilon_decay_steps: 200,
            target_sync_period: 25,
            ..AgentConfig::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut env = Env::new(small_scenario(6, 2)).unwrap();
            train(&mut env, &cfg, 300, &mut rng).unwrap()
        };
        let (a1, l1) = run();
        let (a2, l2) = run();
        assert_eq!(l1, l2);
        assert_eq!(a1.online, a2.online);
        assert!(a1.online.is_finite());
        assert_eq!(l1.rows.len(), 300);
    }
}
