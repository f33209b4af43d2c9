//! Single-parameter sigmoid learners and their update rules.
//!
//! Each learner holds one scalar parameter theta; it cooperates with
//! probability sigmoid(theta) and climbs the gradient of its own expected
//! reward (base game plus whatever the planner hands out).

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::Action;

/// Parameters are clamped to this magnitude after every update. sigmoid(20)
/// is within 2e-9 of 1, so the clamp never visibly distorts behaviour; it
/// only stops runaway drift once a policy has saturated.
pub const THETA_MAX: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerPolicy {
    pub theta: f64,
    /// Gradient-ascent step size. Zero freezes the learner, which some
    /// diagnostics rely on.
    pub step_size: f64,
}

pub fn coop_prob(theta: f64) -> f64 {
    debug_assert!(theta.is_finite());
    1.0 / (1.0 + (-theta).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// d log pi(action) / d theta for the sigmoid policy.
pub fn score(theta: f64, action: Action) -> f64 {
    let p = coop_prob(theta);
    if action.cooperates() {
        1.0 - p
    } else {
        -p
    }
}

pub fn sample_action<R: Rng + ?Sized>(policy: &LearnerPolicy, rng: &mut R) -> Action {
    if rng.gen::<f64>() < coop_prob(policy.theta) {
        Action::Cooperate
    } else {
        Action::Defect
    }
}

/// One gradient-ascent step, clamped into [-THETA_MAX, THETA_MAX].
pub fn learner_update(policy: &LearnerPolicy, grad: f64) -> Result<LearnerPolicy> {
    let theta = policy.theta + policy.step_size * grad;
    if !theta.is_finite() {
        return Err(Error::Numeric(format!(
            "learner update produced non-finite theta (theta {}, grad {grad})",
            policy.theta
        )));
    }
    Ok(LearnerPolicy { theta: theta.clamp(-THETA_MAX, THETA_MAX), ..*policy })
}

/// Everything observable about one played episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub profile: Vec<Action>,
    pub base_rewards: Vec<f64>,
    pub extra_rewards: Vec<f64>,
    /// Pre-squash Gaussian noise of a stochastic planner, kept so its
    /// score function can be evaluated later. None for deterministic play.
    pub planner_noise: Option<Vec<f64>>,
}

/// Sampled policy-gradient estimate of player i's total-reward gradient:
/// the batch mean of score * (reward - baseline).
pub fn reinforce_grad(
    player: usize,
    batch: &[EpisodeRecord],
    thetas: &[f64],
    baseline: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Dimension("reinforce needs a non-empty batch".into()));
    }
    let mut sum = 0.0;
    for rec in batch {
        if rec.profile.len() != thetas.len() || player >= thetas.len() {
            return Err(Error::Dimension(format!(
                "player {player} with profile of {} and {} thetas",
                rec.profile.len(),
                thetas.len()
            )));
        }
        let ret = rec.base_rewards[player] + rec.extra_rewards[player];
        sum += score(thetas[player], rec.profile[player]) * (ret - baseline);
    }
    Ok(sum / batch.len() as f64)
}

/// Per-player exponential moving average of realized total rewards, used as
/// the variance-reduction baseline in sampled mode. Plays the role of a
/// learned critic; with one state there is nothing more for a critic to fit.
#[derive(Clone, Debug)]
pub struct Baseline {
    pub values: Vec<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(n_players: usize, decay: f64) -> Self {
        Baseline { values: vec![0.0; n_players], decay }
    }

    pub fn update(&mut self, returns: &[f64]) {
        for (v, r) in self.values.iter_mut().zip(returns) {
            *v = self.decay * *v + (1.0 - self.decay) * r;
        }
    }
}
