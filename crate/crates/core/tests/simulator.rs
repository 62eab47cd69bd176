use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use skillscout_core::catalog::{generate_synthetic_catalog, Catalog};
use skillscout_core::dialog::{AgentAction, DialogEnv, PromptCatalog, Slot, UserIntent, UserTurn, MAX_TURN_DEPTH};
use skillscout_core::logs::EpisodeLog;
use skillscout_core::runner::bootstrap_logs;
use skillscout_core::usersim::{
    episode_pairs, extract_sequences, intent_sequence, sample_intent, train_intent_model, BehavioralUser,
    IntentContext, IntentDataset, IntentModel, IntentModelConfig, NextIntent, UserProfile, NEXT_INTENT_COUNT,
};
use skillscout_core::SimRng;

fn small_env(seed: u64) -> DialogEnv {
    DialogEnv::new(
        Arc::new(generate_synthetic_catalog(seed, 200, 5, 20).unwrap()),
        Arc::new(PromptCatalog::default()),
    )
}

/// A model whose output ignores the context and equals `probs`.
fn fixed_model(probs: &[f64]) -> IntentModel {
    let mut model = IntentModel::init(1, 4, &mut SimRng::seed_from_u64(0));
    model.output.weights.fill(0.0);
    for (b, p) in model.output.bias.iter_mut().zip(probs) {
        *b = p.ln();
    }
    model
}

fn context() -> IntentContext {
    IntentContext::opening(true)
}

#[test]
fn draws_follow_a_thirty_percent_no() {
    let mut probs = vec![0.7 / (NEXT_INTENT_COUNT - 1) as f64; NEXT_INTENT_COUNT];
    probs[UserIntent::No.index()] = 0.3;
    let model = fixed_model(&probs);
    let mut rng = SimRng::seed_from_u64(1);
    let draws = 100_000;
    let no = (0..draws)
        .filter(|_| sample_intent(&model, &context(), &mut rng) == NextIntent::Intent(UserIntent::No))
        .count();
    let freq = no as f64 / draws as f64;
    assert!((freq - 0.3).abs() <= 0.01, "{freq}");
}

#[test]
fn sampled_distribution_matches_the_softmax() {
    let model = IntentModel::init(4, 16, &mut SimRng::seed_from_u64(2));
    let ctx = IntentContext {
        prev_user_intent: Some(UserIntent::CategoryName),
        prev_agent_action: Some(AgentAction::OfferOneSkill),
        prev_prompt: None,
        first_time: false,
        has_selected: true,
        turn_count: 3,
    };
    let probs = model.probabilities(&ctx);
    let mut counts = [0usize; NEXT_INTENT_COUNT];
    let mut rng = SimRng::seed_from_u64(3);
    let draws = 100_000;
    for _ in 0..draws {
        counts[sample_intent(&model, &ctx, &mut rng).index()] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn certain_model_always_says_yes() {
    let mut probs = vec![1e-300; NEXT_INTENT_COUNT];
    probs[UserIntent::Yes.index()] = 1.0;
    let model = fixed_model(&probs);
    let mut rng = SimRng::seed_from_u64(4);
    assert!((0..1000).all(|_| model.sample(&context(), &mut rng) == NextIntent::Intent(UserIntent::Yes)));
}

#[test]
fn uniform_model_has_perplexity_equal_to_the_vocabulary() {
    let env = small_env(1);
    let logs = bootstrap_logs(&env, &BehavioralUser::default(), 100, 1, 0.6).unwrap();
    let data = extract_sequences(&logs, 0.2, 1).unwrap();
    let mut model = IntentModel::init(1, 8, &mut SimRng::seed_from_u64(5));
    assert!(model.perplexity(&data.held_out) >= 1.0);
    model.output.weights.fill(0.0);
    model.output.bias.fill(0.0);
    let ppl = model.perplexity(&data.held_out);
    assert!((ppl - NEXT_INTENT_COUNT as f64).abs() < 1e-9, "{ppl}");
}

/// Next intent is a fixed function of the previous agent action.
fn deterministic_dataset() -> IntentDataset {
    let answer = |a: AgentAction| match a {
        AgentAction::OfferOneSkill | AgentAction::OfferOneSkillOrCategory => UserIntent::Yes,
        AgentAction::Execute => UserIntent::Help,
        AgentAction::EndSession | AgentAction::LaunchSkill => UserIntent::Stop,
        _ => UserIntent::CategoryName,
    };
    let pairs = |n: u32| -> Vec<_> {
        (0..n)
            .map(|i| {
                let action = AgentAction::ALL[i as usize % AgentAction::COUNT];
                let ctx = IntentContext {
                    prev_user_intent: UserIntent::from_index(i as usize % UserIntent::COUNT),
                    prev_agent_action: Some(action),
                    prev_prompt: None,
                    first_time: i % 2 == 0,
                    has_selected: i % 3 == 0,
                    turn_count: 1 + i % 20,
                };
                (ctx, NextIntent::Intent(answer(action)))
            })
            .collect()
    };
    IntentDataset {
        train: pairs(4_000),
        held_out: pairs(400),
    }
}

#[test]
fn deterministic_data_is_learned_almost_perfectly() {
    let hp = IntentModelConfig {
        epochs: 40,
        hidden_width: 64,
        ..IntentModelConfig::default()
    };
    let trained = train_intent_model(&deterministic_dataset(), &hp).unwrap();
    assert!((trained.held_out_perplexity - 1.0).abs() <= 0.1, "{}", trained.held_out_perplexity);
}

#[test]
fn keep_best_returns_the_lowest_held_out_perplexity() {
    let env = small_env(2);
    let logs = bootstrap_logs(&env, &BehavioralUser::default(), 400, 2, 0.6).unwrap();
    let data = extract_sequences(&logs, 0.2, 2).unwrap();
    let hp = IntentModelConfig {
        epochs: 12,
        hidden_width: 32,
        keep_best: true,
        ..IntentModelConfig::default()
    };
    let trained = train_intent_model(&data, &hp).unwrap();
    let best = trained.history.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(trained.held_out_perplexity <= best + 1e-12);
    assert!((trained.model.perplexity(&data.held_out) - trained.held_out_perplexity).abs() < 1e-9);
    assert_eq!(trained.history.len(), 12);
}

#[test]
fn table1_dialog_extracts_to_its_intent_sequence() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/table1_catalog.json");
    let env = DialogEnv::new(Arc::new(Catalog::load(path).unwrap()), Arc::new(PromptCatalog::default()));
    let mut rng = SimRng::seed_from_u64(6);
    let mut ctx = env.reset(UserProfile::new(true));
    let turns = [
        (AgentAction::OfferThreeCategories, UserTurn::with_slot(UserIntent::CategoryName, Slot::Category("history".into()))),
        (AgentAction::OfferOneSkill, UserTurn::with_slot(UserIntent::CategoryName, Slot::Category("word".into()))),
        (AgentAction::OfferOneSkill, UserTurn::new(UserIntent::GetRating)),
        (AgentAction::Execute, UserTurn::new(UserIntent::Yes)),
    ];
    for (action, turn) in turns {
        env.apply_action(&mut ctx, action, &mut rng).unwrap();
        env.observe_user(&mut ctx, turn).unwrap();
    }
    env.apply_action(&mut ctx, AgentAction::LaunchSkill, &mut rng).unwrap();
    let log = EpisodeLog::from_context("table1", &ctx);
    let want: Vec<NextIntent> = [
        UserIntent::Start,
        UserIntent::CategoryName,
        UserIntent::CategoryName,
        UserIntent::GetRating,
        UserIntent::Yes,
    ]
    .into_iter()
    .map(NextIntent::Intent)
    .chain([NextIntent::EndOfDialog])
    .collect();
    assert_eq!(intent_sequence(&log), want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extraction_is_lossless(seed in 0u64..10_000) {
        let env = small_env(seed % 7);
        let logs = bootstrap_logs(&env, &BehavioralUser::default(), 5, seed, 0.6).unwrap();
        for log in &logs {
            let pairs = episode_pairs(log);
            let intents: Vec<NextIntent> = log.turns.iter().map(|t| NextIntent::Intent(t.user_intent)).collect();
            prop_assert_eq!(&pairs[..intents.len()].iter().map(|(_, n)| *n).collect::<Vec<_>>(), &intents);
            // Each context carries the turn before it.
            for (k, (ctx, _)) in pairs.iter().enumerate() {
                prop_assert_eq!(ctx.first_time, log.first_time);
                prop_assert_eq!(ctx.turn_count, (k as u32 + 1).min(MAX_TURN_DEPTH));
                match k.checked_sub(1).map(|j| &log.turns[j]) {
                    None => prop_assert_eq!(*ctx, IntentContext::opening(log.first_time)),
                    Some(prev) => {
                        prop_assert_eq!(ctx.prev_user_intent, Some(prev.user_intent));
                        prop_assert_eq!(ctx.prev_agent_action, Some(prev.agent_action));
                        prop_assert_eq!(ctx.prev_prompt, Some(prev.prompt_id));
                    }
                }
            }
            let closes = pairs.len() == intents.len() + 1;
            prop_assert_eq!(closes, !log.turns.last().unwrap().user_intent.is_terminal());
        }
    }

    #[test]
    fn split_keeps_every_pair_exactly_once(seed in 0u64..10_000, fraction in 0.0f64..0.9) {
        let env = small_env(seed % 5);
        let logs = bootstrap_logs(&env, &BehavioralUser::default(), 30, seed, 0.6).unwrap();
        let data = extract_sequences(&logs, fraction, seed).unwrap();
        let total: usize = logs.iter().map(|l| episode_pairs(l).len()).sum();
        prop_assert_eq!(data.len(), total);
    }
}
