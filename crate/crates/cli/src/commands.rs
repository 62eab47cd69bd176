//! Subcommand implementations. Each returns what it printed so tests can
//! check it without a subprocess.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use skillscout_core::catalog::{generate_synthetic_catalog, Catalog};
use skillscout_core::dialog::{DialogEnv, DialogPolicy, OfferedItem, PopularityBaseline, PromptCatalog, RulePolicy, UserModel};
use skillscout_core::logs::{group_episodes, read_log, LogWriter};
use skillscout_core::nlu::Nlu;
use skillscout_core::rl::{train, PolicyCheckpoint};
use skillscout_core::runner::{bootstrap_logs, evaluate_policy, EvalMetrics};
use skillscout_core::service::{PolicyKind, SessionManager};
use skillscout_core::usersim::{
    extract_sequences, train_intent_model, BehavioralUser, IntentModel, IntentModelUser, Style, UserProfile,
    UtteranceBank,
};

use crate::config::Config;

pub fn load_catalog(cfg: &Config, path: Option<&Path>) -> anyhow::Result<Catalog> {
    match path.or(cfg.catalog.path.as_deref()) {
        Some(p) => Catalog::load(p).with_context(|| format!("loading catalog {}", p.display())),
        None => {
            let c = &cfg.catalog;
            Ok(generate_synthetic_catalog(c.seed, c.skills, c.roots, c.categories)?)
        }
    }
}

pub fn load_env(cfg: &Config, catalog: Option<&Path>) -> anyhow::Result<DialogEnv> {
    let prompts = match &cfg.prompts {
        Some(p) => PromptCatalog::load(p).with_context(|| format!("loading prompts {}", p.display()))?,
        None => PromptCatalog::default(),
    };
    Ok(DialogEnv::new(Arc::new(load_catalog(cfg, catalog)?), Arc::new(prompts)))
}

pub fn load_nlu(cfg: &Config) -> anyhow::Result<Nlu> {
    let nlu = match &cfg.rules {
        Some(p) => Nlu::load(p).with_context(|| format!("loading rules {}", p.display()))?,
        None => Nlu::default(),
    };
    Ok(nlu.with_noise(cfg.service.nlu_noise)?)
}

/// The learned simulator when a model is given, else the behavioral user.
pub fn load_user(intent_model: Option<&Path>) -> anyhow::Result<Box<dyn UserModel>> {
    Ok(match intent_model {
        Some(p) => {
            let model = IntentModel::load(p).with_context(|| format!("loading intent model {}", p.display()))?;
            Box::new(IntentModelUser::new(model, UtteranceBank::default()))
        }
        None => Box::new(BehavioralUser::default()),
    })
}

pub fn load_policy(
    kind: PolicyKind,
    checkpoint: Option<&Path>,
    catalog: &Catalog,
) -> anyhow::Result<Arc<dyn DialogPolicy>> {
    Ok(match kind {
        PolicyKind::Rule => Arc::new(RulePolicy),
        PolicyKind::BaselinePopularity => Arc::new(PopularityBaseline),
        PolicyKind::Rl => {
            let Some(p) = checkpoint else {
                bail!("policy `rl` needs --checkpoint (or service.checkpoint in the config)");
            };
            let ckpt = PolicyCheckpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            Arc::new(ckpt.policy_for(catalog)?)
        }
    })
}

pub fn generate_catalog(cfg: &Config, seed: Option<u64>, out: &Path) -> anyhow::Result<String> {
    let c = &cfg.catalog;
    let catalog = generate_synthetic_catalog(seed.unwrap_or(c.seed), c.skills, c.roots, c.categories)?;
    catalog.save(out)?;
    Ok(format!(
        "wrote {} skills, {} categories to {}\n",
        catalog.skill_count(),
        catalog.category_count(),
        out.display()
    ))
}

pub fn bootstrap(cfg: &Config, seed: u64, catalog: Option<&Path>, episodes: usize, out: &Path) -> anyhow::Result<String> {
    let env = load_env(cfg, catalog)?;
    let logs = bootstrap_logs(&env, &BehavioralUser::default(), episodes, seed, cfg.bootstrap.first_time_share)?;
    // Overwrite: a bootstrap run produces one self-contained file.
    std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let writer = LogWriter::open(out)?;
    let mut turns = 0;
    for log in &logs {
        let records = log.records(Style::Brief);
        turns += records.len();
        writer.append_all(&records)?;
    }
    Ok(format!("wrote {} episodes, {turns} turns to {}\n", logs.len(), out.display()))
}

pub fn train_sim(cfg: &Config, seed: u64, logs: &Path, out: &Path) -> anyhow::Result<String> {
    let contents = read_log(logs)?;
    let episodes = group_episodes(&contents.records);
    let data = extract_sequences(&episodes, cfg.bootstrap.held_out_fraction, seed)?;
    let hp = skillscout_core::usersim::IntentModelConfig {
        seed,
        ..cfg.intent_model.clone()
    };
    let trained = train_intent_model(&data, &hp)?;
    trained.model.save(out)?;
    Ok(format!(
        "episodes {}\ntrain_pairs {}\nheld_out_pairs {}\nheld_out_perplexity {:.4}\nepoch {}\nwrote {}\n",
        episodes.len(),
        data.train.len(),
        data.held_out.len(),
        trained.held_out_perplexity,
        trained.best_epoch,
        out.display()
    ))
}

pub struct TrainRlArgs<'a> {
    pub seed: u64,
    pub catalog: Option<&'a Path>,
    pub intent_model: Option<&'a Path>,
    pub steps: Option<u64>,
    pub out: &'a Path,
    pub stats: Option<&'a Path>,
}

pub fn train_rl(cfg: &Config, a: TrainRlArgs<'_>) -> anyhow::Result<String> {
    let env = load_env(cfg, a.catalog)?;
    let user = load_user(a.intent_model)?;
    let mut tc = cfg.train.clone();
    tc.seed = a.seed;
    if let Some(s) = a.steps {
        tc.total_steps = s;
    }
    let (net, stats) = train(&env, user.as_ref(), &tc)?;
    PolicyCheckpoint::new(net, tc).save(a.out)?;
    let table = stats.to_tsv();
    if let Some(p) = a.stats {
        std::fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(format!("{table}episodes {}\nwrote {}\n", stats.episodes, a.out.display()))
}

pub fn format_metrics(policy: PolicyKind, m: &EvalMetrics) -> String {
    let rate = |b: Option<f64>| b.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "policy {}\nepisodes {}\nsuccess_rate {:.4}\navg_dialog_length {:.4}\nmean_return {:.4}\nfirst_time_success_rate {}\nreturning_success_rate {}\n",
        policy.as_str(),
        m.episodes,
        m.success_rate,
        m.avg_dialog_length,
        m.mean_return,
        rate(m.first_time.success_rate()),
        rate(m.returning.success_rate()),
    )
}

pub struct EvaluateArgs<'a> {
    pub seed: u64,
    pub policy: PolicyKind,
    pub checkpoint: Option<&'a Path>,
    pub catalog: Option<&'a Path>,
    pub intent_model: Option<&'a Path>,
    pub episodes: usize,
}

pub fn evaluate(cfg: &Config, a: EvaluateArgs<'_>) -> anyhow::Result<String> {
    let env = load_env(cfg, a.catalog)?;
    let user = load_user(a.intent_model)?;
    let checkpoint = a.checkpoint.or(cfg.service.checkpoint.as_deref());
    let policy = load_policy(a.policy, checkpoint, env.catalog())?;
    let m = evaluate_policy(&env, policy.as_ref(), user.as_ref(), a.episodes, a.seed, cfg.train.first_time_share)?;
    Ok(format_metrics(a.policy, &m))
}

pub fn session_manager(
    cfg: &Config,
    seed: u64,
    catalog: Option<&Path>,
    checkpoint: Option<&Path>,
    log: Option<&Path>,
) -> anyhow::Result<SessionManager> {
    let env = load_env(cfg, catalog)?;
    let rl = match checkpoint.or(cfg.service.checkpoint.as_deref()) {
        Some(p) => Some(load_policy(PolicyKind::Rl, Some(p), env.catalog())?),
        None => None,
    };
    let log = match log.or(cfg.service.log.as_deref()) {
        Some(p) => Some(LogWriter::open(p)?),
        None => None,
    };
    Ok(SessionManager::new(env, load_nlu(cfg)?, rl, log, seed))
}

fn describe_offers(catalog: &Catalog, offered: &[OfferedItem]) -> String {
    offered
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let name = match item {
                OfferedItem::Skill(id) => catalog.skill(id).map(|s| s.name.clone()),
                OfferedItem::Category(id) => catalog.category(id).map(|c| c.name.clone()),
            };
            format!("  {}. {}\n", i + 1, name.unwrap_or_else(|| item.id().to_string()))
        })
        .collect()
}

/// Line-oriented chat against one policy; ends when the dialog does or
/// input runs out.
pub fn chat(
    manager: &SessionManager,
    policy: PolicyKind,
    profile: UserProfile,
    input: impl BufRead,
    mut out: impl Write,
) -> anyhow::Result<()> {
    let catalog = manager.env().catalog();
    let opened = manager.create_session(policy, profile, None)?;
    writeln!(out, "agent: {}", opened.agent_move.text)?;
    write!(out, "{}", describe_offers(catalog, &opened.agent_move.offered))?;
    let mut done = opened.agent_move.terminal;
    let mut lines = input.lines();
    while !done {
        write!(out, "you: ")?;
        out.flush()?;
        let Some(line) = lines.next() else { break };
        let reply = manager.post_utterance(&opened.session_id, line?.trim())?;
        writeln!(
            out,
            "[{} -> {}] agent: {}",
            reply.understood.intent, reply.agent_move.action, reply.agent_move.text
        )?;
        write!(out, "{}", describe_offers(catalog, &reply.agent_move.offered))?;
        done = reply.done;
        if done {
            let summary = manager.session(&opened.session_id)?;
            writeln!(out, "session {:?}, reward {:+}", summary.status, reply.reward)?;
        }
    }
    Ok(())
}

/// Distinct session ids in a log file.
pub fn count_sessions(path: &Path) -> anyhow::Result<usize> {
    let contents = read_log(path)?;
    Ok(contents
        .records
        .iter()
        .map(|r| r.session_id.as_str())
        .collect::<BTreeSet<_>>()
        .len())
}
