//! Flat dotted-key config files (`planner.bound = 2`) and `--key=value`
//! overrides. Every key maps to exactly one ExperimentConfig field; unknown
//! keys are hard errors so typos cannot silently fall back to defaults.

use crate::engine::{ExperimentConfig, ValueMode};
use crate::error::{Error, Result};
use crate::planner::{PlannerMode, ProfileEncoding};

pub const KEYS: &[&str] = &[
    "game.preset",
    "game.players",
    "game.greed",
    "game.fear",
    "game.reward_cc",
    "game.punishment",
    "game.all_coop",
    "game.all_defect",
    "game.sole_defector",
    "game.sole_cooperator",
    "episodes.phase1",
    "episodes.phase2",
    "value_mode",
    "seeds",
    "discount",
    "learner.step_size",
    "learner.initial_coop_prob",
    "learner.baseline_decay",
    "learner.batch",
    "planner.enabled",
    "planner.mode",
    "planner.encoding",
    "planner.bound",
    "planner.step_size",
    "planner.cost_weight",
    "planner.revenue_neutral",
    "planner.noise_sigma",
    "opponent_model.enabled",
    "opponent_model.window",
    "opponent_model.smoothing",
];

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{value}` is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{value}` is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("key `{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("key `seeds`: `{s}` is not an integer seed")))
        })
        .collect()
}

/// Sets one field by its dotted key. Used for both file lines and CLI
/// overrides; later applications win.
pub fn apply_override(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "game.preset" => cfg.game.preset = value.to_string(),
        "game.players" => cfg.game.players = parse_usize(key, value)?,
        "game.greed" => cfg.game.greed = parse_f64(key, value)?,
        "game.fear" => cfg.game.fear = parse_f64(key, value)?,
        "game.reward_cc" => cfg.game.reward_cc = parse_f64(key, value)?,
        "game.punishment" => cfg.game.punishment = parse_f64(key, value)?,
        "game.all_coop" => cfg.game.all_coop = parse_f64(key, value)?,
        "game.all_defect" => cfg.game.all_defect = parse_f64(key, value)?,
        "game.sole_defector" => cfg.game.sole_defector = parse_f64(key, value)?,
        "game.sole_cooperator" => cfg.game.sole_cooperator = parse_f64(key, value)?,
        "episodes.phase1" => cfg.phase1 = parse_usize(key, value)?,
        "episodes.phase2" => cfg.phase2 = parse_usize(key, value)?,
        "value_mode" => {
            cfg.value_mode = match value {
                "exact" => ValueMode::Exact,
                "estimated" => ValueMode::Estimated,
                _ => {
                    return Err(Error::Config(format!(
                        "key `value_mode`: expected exact or estimated, got `{value}`"
                    )))
                }
            }
        }
        "seeds" => cfg.seeds = parse_seeds(value)?,
        "discount" => cfg.discount = parse_f64(key, value)?,
        "learner.step_size" => cfg.learner_step = parse_f64(key, value)?,
        "learner.initial_coop_prob" => cfg.initial_coop_prob = parse_f64(key, value)?,
        "learner.baseline_decay" => cfg.baseline_decay = parse_f64(key, value)?,
        "learner.batch" => cfg.batch = parse_usize(key, value)?,
        "planner.enabled" => cfg.planner.enabled = parse_bool(key, value)?,
        "planner.mode" => {
            cfg.planner.mode = match value {
                "exact" => PlannerMode::Exact,
                "estimated" => PlannerMode::Estimated,
                _ => {
                    return Err(Error::Config(format!(
                        "key `planner.mode`: expected exact or estimated, got `{value}`"
                    )))
                }
            }
        }
        "planner.encoding" => {
            cfg.planner.encoding = match value {
                "joint_onehot" => ProfileEncoding::JointOnehot,
                "action_vector" => ProfileEncoding::ActionVector,
                _ => {
                    return Err(Error::Config(format!(
                        "key `planner.encoding`: expected joint_onehot or action_vector, got `{value}`"
                    )))
                }
            }
        }
        "planner.bound" => cfg.planner.bound = parse_f64(key, value)?,
        "planner.step_size" => cfg.planner.step_size = parse_f64(key, value)?,
        "planner.cost_weight" => cfg.planner.cost_weight = parse_f64(key, value)?,
        "planner.revenue_neutral" => cfg.planner.revenue_neutral = parse_bool(key, value)?,
        "planner.noise_sigma" => cfg.planner.noise_sigma = parse_f64(key, value)?,
        "opponent_model.enabled" => cfg.opponent.enabled = parse_bool(key, value)?,
        "opponent_model.window" => cfg.opponent.window = parse_usize(key, value)?,
        "opponent_model.smoothing" => cfg.opponent.smoothing = parse_f64(key, value)?,
        _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

/// Parses a config document: one `key = value` per line, `#` comments,
/// blank lines ignored. Missing keys keep their defaults; repeated keys in
/// one document are rejected as a likely editing mistake.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
        apply_override(&mut cfg, key, value)?;
    }
    Ok(cfg)
}

fn value_of(cfg: &ExperimentConfig, key: &str) -> String {
    match key {
        "game.preset" => cfg.game.preset.clone(),
        "game.players" => cfg.game.players.to_string(),
        "game.greed" => cfg.game.greed.to_string(),
        "game.fear" => cfg.game.fear.to_string(),
        "game.reward_cc" => cfg.game.reward_cc.to_string(),
        "game.punishment" => cfg.game.punishment.to_string(),
        "game.all_coop" => cfg.game.all_coop.to_string(),
        "game.all_defect" => cfg.game.all_defect.to_string(),
        "game.sole_defector" => cfg.game.sole_defector.to_string(),
        "game.sole_cooperator" => cfg.game.sole_cooperator.to_string(),
        "episodes.phase1" => cfg.phase1.to_string(),
        "episodes.phase2" => cfg.phase2.to_string(),
        "value_mode" => match cfg.value_mode {
            ValueMode::Exact => "exact".into(),
            ValueMode::Estimated => "estimated".into(),
        },
        "seeds" => cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        "discount" => cfg.discount.to_string(),
        "learner.step_size" => cfg.learner_step.to_string(),
        "learner.initial_coop_prob" => cfg.initial_coop_prob.to_string(),
        "learner.baseline_decay" => cfg.baseline_decay.to_string(),
        "learner.batch" => cfg.batch.to_string(),
        "planner.enabled" => cfg.planner.enabled.to_string(),
        "planner.mode" => match cfg.planner.mode {
            PlannerMode::Exact => "exact".into(),
            PlannerMode::Estimated => "estimated".into(),
        },
        "planner.encoding" => match cfg.planner.encoding {
            ProfileEncoding::JointOnehot => "joint_onehot".into(),
            ProfileEncoding::ActionVector => "action_vector".into(),
        },
        "planner.bound" => cfg.planner.bound.to_string(),
        "planner.step_size" => cfg.planner.step_size.to_string(),
        "planner.cost_weight" => cfg.planner.cost_weight.to_string(),
        "planner.revenue_neutral" => cfg.planner.revenue_neutral.to_string(),
        "planner.noise_sigma" => cfg.planner.noise_sigma.to_string(),
        "opponent_model.enabled" => cfg.opponent.enabled.to_string(),
        "opponent_model.window" => cfg.opponent.window.to_string(),
        "opponent_model.smoothing" => cfg.opponent.smoothing.to_string(),
        _ => unreachable!("serialize iterates KEYS only"),
    }
}

/// Emits every key in a stable order. f64 values use Rust's shortest
/// round-tripping decimal form, so parse(serialize(c)) == c.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for key in KEYS {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value_of(cfg, key));
        out.push('\n');
    }
    out
}
