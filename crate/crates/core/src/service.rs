//! Live sessions: a human types utterances, the NLU turns them into
//! intents, and one of the dialog policies answers.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::catalog::Bindings;
use crate::dialog::{
    render_prompt, AgentAction, AgentMove, DialogContext, DialogEnv, DialogPolicy, MetadataType, PopularityBaseline,
    RulePolicy, UserIntent,
};
use crate::error::{Error, Result};
use crate::logs::{DialogLogRecord, LogWriter, ProfileSummary};
use crate::nlu::{Nlu, NluResult};
use crate::runner::episode_rng;
use crate::usersim::UserProfile;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Rule,
    Rl,
    BaselinePopularity,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Rule, PolicyKind::Rl, PolicyKind::BaselinePopularity];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Rule => "rule",
            PolicyKind::Rl => "rl",
            PolicyKind::BaselinePopularity => "baseline-popularity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Active,
    Ended,
    Launched,
}

/// The learner-visible part of a session after a turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub user_intent: UserIntent,
    pub turn_depth: u32,
    pub first_time_user: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_category: Option<String>,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOpened {
    pub session_id: String,
    #[serde(rename = "move")]
    pub agent_move: AgentMove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReply {
    #[serde(rename = "move")]
    pub agent_move: AgentMove,
    pub reward: f64,
    pub done: bool,
    pub state: StateSummary,
    /// How the utterance was understood.
    pub understood: NluResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub policy: PolicyKind,
    pub profile: UserProfile,
    pub status: SessionStatus,
    pub turns: u32,
    pub total_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launched_skill: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

/// Counts for one group of sessions. Rates cover finished sessions only
/// and are absent until one finishes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub sessions: usize,
    pub finished: usize,
    pub launched: usize,
    pub success_rate: Option<f64>,
    pub avg_dialog_length: Option<f64>,
    #[serde(skip)]
    turns: u64,
}

impl SessionStats {
    fn add(&mut self, status: SessionStatus, turns: u32) {
        self.sessions += 1;
        if status == SessionStatus::Active {
            return;
        }
        self.finished += 1;
        self.launched += (status == SessionStatus::Launched) as usize;
        self.turns += u64::from(turns);
        self.success_rate = Some(self.launched as f64 / self.finished as f64);
        self.avg_dialog_length = Some(self.turns as f64 / self.finished as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBucket {
    pub policy: PolicyKind,
    pub first_time: bool,
    #[serde(flatten)]
    pub stats: SessionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sessions_total: usize,
    #[serde(flatten)]
    pub overall: SessionStats,
    /// Every policy × user-type pair, empty ones included.
    pub buckets: Vec<MetricsBucket>,
}

struct Session {
    policy: PolicyKind,
    ctx: DialogContext,
    rng: SimRng,
    status: SessionStatus,
    /// Records of `ctx.episode_log` already written to the log.
    logged: usize,
    created_at: u64,
    updated_at: u64,
}

#[derive(Default)]
struct Inner {
    sessions: BTreeMap<String, Arc<Mutex<Session>>>,
    next_id: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic mid-turn leaves plain data behind; keep serving.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// In-memory session store. Sessions run independently; turns within one
/// session are serialized by its own lock.
pub struct SessionManager {
    env: DialogEnv,
    nlu: Nlu,
    policies: BTreeMap<PolicyKind, Arc<dyn DialogPolicy>>,
    log: Option<LogWriter>,
    seed: u64,
    inner: Mutex<Inner>,
}

impl SessionManager {
    /// Rule and baseline policies are always available; `rl` only when a
    /// trained policy is supplied.
    pub fn new(env: DialogEnv, nlu: Nlu, rl: Option<Arc<dyn DialogPolicy>>, log: Option<LogWriter>, seed: u64) -> Self {
        let mut policies: BTreeMap<PolicyKind, Arc<dyn DialogPolicy>> = BTreeMap::new();
        policies.insert(PolicyKind::Rule, Arc::new(RulePolicy));
        policies.insert(PolicyKind::BaselinePopularity, Arc::new(PopularityBaseline));
        if let Some(p) = rl {
            policies.insert(PolicyKind::Rl, p);
        }
        Self {
            env,
            nlu,
            policies,
            log,
            seed,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn env(&self) -> &DialogEnv {
        &self.env
    }

    pub fn available_policies(&self) -> Vec<PolicyKind> {
        self.policies.keys().copied().collect()
    }

    fn policy(&self, kind: PolicyKind) -> Result<Arc<dyn DialogPolicy>> {
        self.policies
            .get(&kind)
            .cloned()
            .ok_or_else(|| Error::PolicyUnavailable(kind.as_str().to_string()))
    }

    fn get(&self, session_id: &str) -> Result<Arc<Mutex<Session>>> {
        lock(&self.inner)
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))
    }

    /// Opens a session; the agent answers the implicit start intent at once.
    pub fn create_session(&self, policy: PolicyKind, profile: UserProfile, utterance: Option<&str>) -> Result<SessionOpened> {
        let agent = self.policy(policy)?;
        profile.validate()?;
        let index = {
            let mut inner = lock(&self.inner);
            inner.next_id += 1;
            inner.next_id - 1
        };
        let id = format!("s{index:06}");
        let now = now_ms();
        let mut session = Session {
            policy,
            ctx: self.env.reset_with_utterance(profile, utterance.unwrap_or_default()),
            rng: episode_rng(self.seed, index),
            status: SessionStatus::Active,
            logged: 0,
            created_at: now,
            updated_at: now,
        };
        let agent_move = self.agent_turn(&mut session, agent.as_ref())?;
        self.flush_log(&id, &mut session)?;
        lock(&self.inner).sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(SessionOpened {
            session_id: id,
            agent_move,
        })
    }

    /// Understands one user utterance and lets the policy answer it.
    pub fn post_utterance(&self, session_id: &str, utterance: &str) -> Result<TurnReply> {
        let handle = self.get(session_id)?;
        let mut guard = lock(&handle);
        let session = &mut *guard;
        if session.status != SessionStatus::Active {
            return Err(Error::SessionTerminal(session_id.to_string()));
        }
        let agent = self.policy(session.policy)?;
        let understood = self
            .nlu
            .classify_noisy(utterance, &session.ctx, self.env.catalog(), &mut session.rng);
        let (user_reward, done) = self.env.observe_user(&mut session.ctx, understood.to_user_turn(utterance))?;
        let (agent_move, reward) = if done {
            // The user left, or the turn cap forced the end.
            session.status = SessionStatus::Ended;
            (self.closing_move(&session.ctx), user_reward)
        } else {
            let mv = self.agent_turn(session, agent.as_ref())?;
            let r = match (mv.terminal, mv.launched.is_some()) {
                (true, true) => 1.0,
                (true, false) => -1.0,
                _ => 0.0,
            };
            (mv, r)
        };
        session.updated_at = now_ms();
        self.flush_log(session_id, session)?;
        Ok(TurnReply {
            agent_move,
            reward,
            done: session.status != SessionStatus::Active,
            state: StateSummary {
                user_intent: session.ctx.state.user_intent,
                turn_depth: session.ctx.state.turn_depth,
                first_time_user: session.ctx.state.first_time_user,
                target_category: session.ctx.state.target_category.clone(),
                status: session.status,
            },
            understood,
        })
    }

    fn closing_move(&self, ctx: &DialogContext) -> AgentMove {
        let last = ctx.episode_log.last().expect("a finished dialog has a logged turn");
        AgentMove {
            action: AgentAction::EndSession,
            prompt_id: last.prompt_id,
            metadata_type: MetadataType::NoMetadata,
            metadata: Bindings::new(),
            offered: Vec::new(),
            launched: None,
            terminal: true,
            text: render_prompt(self.env.prompts(), last.prompt_id, &Bindings::new()).unwrap_or_default(),
        }
    }

    fn agent_turn(&self, session: &mut Session, agent: &dyn DialogPolicy) -> Result<AgentMove> {
        let action = agent.act(&self.env, &session.ctx, &mut session.rng);
        let mv = self.env.apply_action(&mut session.ctx, action, &mut session.rng)?;
        if mv.terminal {
            session.status = if mv.launched.is_some() {
                SessionStatus::Launched
            } else {
                SessionStatus::Ended
            };
        }
        Ok(mv)
    }

    fn flush_log(&self, id: &str, s: &mut Session) -> Result<()> {
        let total = s.ctx.episode_log.len();
        if let Some(log) = &self.log {
            let profile = ProfileSummary {
                first_time: s.ctx.profile.first_time,
                style: s.ctx.profile.style,
            };
            let records: Vec<DialogLogRecord> = s.ctx.episode_log[s.logged..]
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let done = s.status != SessionStatus::Active && s.logged + k + 1 == total;
                    DialogLogRecord::from_turn(id, profile.clone(), t, done)
                })
                .collect();
            log.append_all(&records)?;
        }
        s.logged = total;
        Ok(())
    }

    pub fn session(&self, session_id: &str) -> Result<SessionSummary> {
        let handle = self.get(session_id)?;
        let s = lock(&handle);
        Ok(summary(session_id, &s))
    }

    pub fn metrics(&self) -> Metrics {
        let sessions: Vec<_> = lock(&self.inner).sessions.values().cloned().collect();
        let mut overall = SessionStats::default();
        let mut buckets: Vec<MetricsBucket> = PolicyKind::ALL
            .iter()
            .flat_map(|&policy| {
                [true, false].map(|first_time| MetricsBucket {
                    policy,
                    first_time,
                    stats: SessionStats::default(),
                })
            })
            .collect();
        for handle in sessions {
            let s = lock(&handle);
            let turns = s.ctx.user_turns();
            overall.add(s.status, turns);
            let b = buckets
                .iter_mut()
                .find(|b| b.policy == s.policy && b.first_time == s.ctx.profile.first_time)
                .expect("every policy and user type has a bucket");
            b.stats.add(s.status, turns);
        }
        Metrics {
            sessions_total: overall.sessions,
            overall,
            buckets,
        }
    }
}

fn summary(id: &str, s: &Session) -> SessionSummary {
    SessionSummary {
        session_id: id.to_string(),
        policy: s.policy,
        profile: s.ctx.profile.clone(),
        status: s.status,
        turns: s.ctx.user_turns(),
        total_reward: s.ctx.total_reward(),
        launched_skill: s.ctx.launched.clone(),
        created_at: s.created_at,
        updated_at: s.updated_at,
    }
}
