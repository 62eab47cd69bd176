//! The DQN learning loop: ε schedule, TD targets, gradient steps, target
//! syncing and periodic greedy evaluation.

use std::fmt::Write as _;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::network::{init_network, masked_argmax, select_action, Gradients, QNetwork, QValues};
use super::replay::{ReplayBuffer, Transition, REPLAY_CAPACITY};
use crate::dialog::{AgentAction, DialogContext, DialogEnv, DialogPolicy, EncoderMode, StateEncoder, UserModel};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::runner::{evaluate_policy, EvalMetrics, DEFAULT_FIRST_TIME_SHARE};
use crate::usersim::UserProfile;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub total_steps: u64,
    pub target_update_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub encoder: EncoderMode,
    pub first_time_share: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-5,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: 100_000,
            total_steps: 150_000,
            target_update_interval: 13_000,
            eval_interval: 10_000,
            eval_episodes: 3_000,
            batch_size: 64,
            replay_capacity: REPLAY_CAPACITY,
            encoder: EncoderMode::OneHot,
            first_time_share: DEFAULT_FIRST_TIME_SHARE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Laptop-sized run: 30,000 steps, 500 evaluation episodes.
    pub fn desk(seed: u64) -> Self {
        Self {
            total_steps: 30_000,
            eval_episodes: 500,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) || !(0.0..=1.0).contains(&self.epsilon_start) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end exceeds epsilon_start");
        }
        if self.epsilon_decay_steps == 0
            || self.target_update_interval == 0
            || self.eval_interval == 0
            || self.eval_episodes == 0
            || self.batch_size == 0
            || self.replay_capacity < self.batch_size
        {
            return bad("intervals, episode counts, batch size and capacity must be positive (capacity ≥ batch)");
        }
        if !(0.0..=1.0).contains(&self.first_time_share) {
            return bad("first_time_share must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over
/// `epsilon_decay_steps`, constant afterwards.
pub fn epsilon_at(step: u64, cfg: &TrainConfig) -> f64 {
    let frac = step as f64 / cfg.epsilon_decay_steps as f64;
    (cfg.epsilon_start - (cfg.epsilon_start - cfg.epsilon_end) * frac).max(cfg.epsilon_end)
}

/// y = r for terminal transitions, else r + γ·max over valid next actions
/// of the target network's eval-mode Q. Also returns how many next-state
/// evaluations were made.
pub fn td_targets_counted(batch: &[&Transition], target: &QNetwork, gamma: f64) -> Result<(Vec<f64>, usize)> {
    let mut evaluated = 0;
    let ys = batch
        .iter()
        .map(|t| {
            if t.done {
                return Ok(t.reward);
            }
            let q = target.q_values(&t.next_state);
            evaluated += 1;
            let best = masked_argmax(&q, &t.next_mask)?;
            Ok(t.reward + gamma * q[best])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((ys, evaluated))
}

pub fn td_targets(batch: &[&Transition], target: &QNetwork, gamma: f64) -> Result<Vec<f64>> {
    td_targets_counted(batch, target, gamma).map(|(y, _)| y)
}

/// Mean squared error on the taken actions and its gradient. Dropout is
/// active when `dropout_rng` is given.
pub fn loss_and_gradients(
    net: &QNetwork,
    batch: &[&Transition],
    targets: &[f64],
    mut dropout_rng: Option<&mut SimRng>,
) -> (f64, Gradients) {
    let mut grads = net.zero_grads();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        let cache = net.forward_cached(&t.state, dropout_rng.as_deref_mut());
        let err = cache.q[t.action] - y;
        loss += err * err / n;
        let mut dq: QValues = [0.0; AgentAction::COUNT];
        dq[t.action] = 2.0 * err / n;
        net.backward(&cache, &dq, &mut grads);
    }
    (loss, grads)
}

/// One optimizer update on `batch`; returns the pre-update loss.
pub fn train_step(
    net: &mut QNetwork,
    batch: &[&Transition],
    targets: &[f64],
    opt: &mut Adam,
    rng: &mut SimRng,
) -> Result<f64> {
    if batch.len() != targets.len() || batch.is_empty() {
        return Err(Error::Dimension {
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let (loss, grads) = loss_and_gradients(net, batch, targets, Some(rng));
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("loss {loss}")));
    }
    opt.update(net.params_mut(), &grads);
    Ok(loss)
}

/// Greedy policy over a trained network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub net: QNetwork,
    pub encoder: StateEncoder,
}

impl DqnPolicy {
    pub fn new(net: QNetwork, encoder: StateEncoder) -> Self {
        Self { net, encoder }
    }

    pub fn greedy(&self, env: &DialogEnv, ctx: &DialogContext) -> Result<AgentAction> {
        let f = self.encoder.features(&ctx.state, env.catalog());
        let a = masked_argmax(&self.net.q_values(&f), &env.action_mask(ctx))?;
        Ok(AgentAction::from_index(a).expect("network width matches action count"))
    }
}

impl DialogPolicy for DqnPolicy {
    fn act(&self, env: &DialogEnv, ctx: &DialogContext, _: &mut SimRng) -> AgentAction {
        // The mask always allows end-session, so argmax cannot fail.
        self.greedy(env, ctx).unwrap_or(AgentAction::EndSession)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub success_rate: f64,
    pub avg_dialog_length: f64,
    pub mean_episode_return: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    pub episodes: u64,
    pub target_syncs: u64,
}

impl TrainStats {
    /// Tab-separated table, one row per evaluation point.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seed\tstep\tsuccess_rate\tavg_dialog_length\tmean_episode_return\tmean_loss\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6e}",
                self.seed, r.step, r.success_rate, r.avg_dialog_length, r.mean_episode_return, r.mean_loss
            );
        }
        out
    }
}

/// Seed of the evaluation episodes for a training seed; shared with
/// baselines that should be compared on the same dialogs.
pub fn eval_seed(train_seed: u64) -> u64 {
    train_seed ^ 0x5eed_e7a1
}

/// Trains a Q-network against `user`. Returns the final network.
pub fn train(env: &DialogEnv, user: &dyn UserModel, cfg: &TrainConfig) -> Result<(QNetwork, TrainStats)> {
    cfg.validate()?;
    let encoder = StateEncoder::for_catalog(env.catalog());
    let mut net = init_network(&encoder, encoder.input_dim(cfg.encoder), cfg.seed)?;
    let mut target = net.clone();
    let mut opt = Adam::new(cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut stats = TrainStats {
        seed: cfg.seed,
        ..TrainStats::default()
    };
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;

    let new_episode = |rng: &mut SimRng| env.reset(UserProfile::sample(env.catalog(), cfg.first_time_share, rng));
    let mut ctx = new_episode(&mut rng);
    for t in 0..cfg.total_steps {
        let state = encoder.features(&ctx.state, env.catalog());
        let mask = env.action_mask(&ctx);
        let a = select_action(&net, &state, &mask, epsilon_at(t, cfg), &mut rng)?;
        let action = AgentAction::from_index(a).expect("valid action index");
        let out = env.step(&mut ctx, action, user, &mut rng)?;
        buffer.push(Transition {
            state,
            action: a,
            reward: out.reward,
            next_state: encoder.features(&ctx.state, env.catalog()),
            next_mask: env.action_mask(&ctx),
            done: out.done,
        });
        if out.done {
            stats.episodes += 1;
            ctx = new_episode(&mut rng);
        }
        if buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng)?;
            let ys = td_targets(&batch, &target, cfg.gamma)?;
            let loss = train_step(&mut net, &batch, &ys, &mut opt, &mut rng)
                .map_err(|e| Error::Divergence(format!("step {}: {e}", t + 1)))?;
            loss_sum += loss;
            loss_count += 1;
        }
        let done_steps = t + 1;
        if done_steps % cfg.target_update_interval == 0 {
            target.copy_from(&net)?;
            stats.target_syncs += 1;
        }
        if done_steps % cfg.eval_interval == 0 {
            let policy = DqnPolicy::new(net.clone(), encoder.clone());
            let m = evaluate_policy(env, &policy, user, cfg.eval_episodes, eval_seed(cfg.seed), cfg.first_time_share)?;
            tracing::info!(step = done_steps, success_rate = m.success_rate, avg_len = m.avg_dialog_length, "evaluation");
            stats.records.push(EvalRecord {
                step: done_steps,
                success_rate: m.success_rate,
                avg_dialog_length: m.avg_dialog_length,
                mean_episode_return: m.mean_return,
                mean_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok((net, stats))
}

/// Greedy evaluation of a trained network with the training seed's
/// evaluation episodes.
pub fn evaluate_network(env: &DialogEnv, net: &QNetwork, user: &dyn UserModel, episodes: usize, seed: u64, first_time_share: f64) -> Result<EvalMetrics> {
    let policy = DqnPolicy::new(net.clone(), StateEncoder::for_catalog(env.catalog()));
    evaluate_policy(env, &policy, user, episodes, seed, first_time_share)
}
