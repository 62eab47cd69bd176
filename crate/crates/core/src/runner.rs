//! Running whole episodes: bootstrap log generation and policy evaluation.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dialog::{DialogContext, DialogEnv, DialogPolicy, RulePolicy, UserModel};
use crate::error::{Error, Result};
use crate::logs::EpisodeLog;
use crate::usersim::UserProfile;
use crate::SimRng;

/// Share of first-time users in sampled populations.
pub const DEFAULT_FIRST_TIME_SHARE: f64 = 0.6;

/// Independent, reproducible random stream for episode `index`.
pub fn episode_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub launched: bool,
    pub user_turns: u32,
    pub total_reward: f64,
    pub context: DialogContext,
}

/// Plays one dialog to the end. The policy's action must satisfy the mask.
pub fn run_episode(
    env: &DialogEnv,
    policy: &dyn DialogPolicy,
    user: &dyn UserModel,
    profile: UserProfile,
    rng: &mut SimRng,
) -> Result<EpisodeResult> {
    let mut ctx = env.reset(profile);
    while !ctx.terminal {
        let action = policy.act(env, &ctx, rng);
        env.step(&mut ctx, action, user, rng)?;
    }
    Ok(EpisodeResult {
        launched: ctx.launched.is_some(),
        user_turns: ctx.user_turns(),
        total_reward: ctx.total_reward(),
        context: ctx,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub episodes: usize,
    pub launches: usize,
    pub total_turns: u64,
}

impl Bucket {
    fn add(&mut self, r: &EpisodeResult) {
        self.episodes += 1;
        self.launches += r.launched as usize;
        self.total_turns += u64::from(r.user_turns);
    }

    pub fn success_rate(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.launches as f64 / self.episodes as f64)
    }

    pub fn avg_dialog_length(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.total_turns as f64 / self.episodes as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub success_rate: f64,
    pub avg_dialog_length: f64,
    pub mean_return: f64,
    pub first_time: Bucket,
    pub returning: Bucket,
}

/// Plays `episodes` dialogs; episode `i` uses its own stream of `seed`, so
/// results do not depend on what other episodes did.
pub fn evaluate_policy(
    env: &DialogEnv,
    policy: &dyn DialogPolicy,
    user: &dyn UserModel,
    episodes: usize,
    seed: u64,
    first_time_share: f64,
) -> Result<EvalMetrics> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut first_time = Bucket::default();
    let mut returning = Bucket::default();
    let mut total_return = 0.0;
    for i in 0..episodes {
        let mut rng = episode_rng(seed, i as u64);
        let profile = UserProfile::sample(env.catalog(), first_time_share, &mut rng);
        let r = run_episode(env, policy, user, profile, &mut rng)?;
        total_return += r.total_reward;
        if r.context.state.first_time_user {
            first_time.add(&r);
        } else {
            returning.add(&r);
        }
    }
    let launches = first_time.launches + returning.launches;
    let turns = first_time.total_turns + returning.total_turns;
    Ok(EvalMetrics {
        episodes,
        success_rate: launches as f64 / episodes as f64,
        avg_dialog_length: turns as f64 / episodes as f64,
        mean_return: total_return / episodes as f64,
        first_time,
        returning,
    })
}

/// Rule policy against `user` on sampled profiles; one log per episode,
/// session ids `boot-{seed}-{i}`.
pub fn bootstrap_logs(
    env: &DialogEnv,
    user: &dyn UserModel,
    episodes: usize,
    seed: u64,
    first_time_share: f64,
) -> Result<Vec<EpisodeLog>> {
    (0..episodes)
        .map(|i| {
            let mut rng = episode_rng(seed, i as u64);
            let profile = UserProfile::sample(env.catalog(), first_time_share, &mut rng);
            let r = run_episode(env, &RulePolicy, user, profile, &mut rng)?;
            Ok(EpisodeLog::from_context(format!("boot-{seed}-{i}"), &r.context))
        })
        .collect()
}
