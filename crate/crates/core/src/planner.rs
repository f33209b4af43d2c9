//! The planning agent: a single-layer network that maps the observed joint
//! action to one bounded extra reward per player.
//!
//! Pre-squash activations are linear in a profile encoding, squashed through
//! bound * tanh, and optionally recentred to sum to zero (revenue-neutral
//! play). The planner never sees its own parameters in the game's payoffs;
//! it only shapes what the learners experience.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::agents::{score, EpisodeRecord};
use crate::error::{Error, Result};
use crate::game::Action;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileEncoding {
    /// One indicator feature per joint action profile (2^N features).
    /// Exhaustive for small N: any bounded reward table is representable.
    JointOnehot,
    /// One indicator feature per player's own cooperation (N features).
    /// Scales to large groups at the price of expressiveness.
    ActionVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerMode {
    /// Closed-form gradients through the exact value functions.
    Exact,
    /// Sampled policy-gradient updates from played episodes.
    Estimated,
}

/// How the product of expectations in the sampled update is estimated.
/// Sharing one batch for both factors keeps more data per factor but the
/// product of two means over the same samples is biased; independent halves
/// trade sample count for unbiasedness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorMode {
    Independent,
    Shared,
}

/// Largest group for which the one-hot profile encoding (2^N features) and
/// exact enumeration stay tractable.
pub const MAX_ENUM_PLAYERS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerPolicy {
    pub n_players: usize,
    pub encoding: ProfileEncoding,
    /// weights[feature][player]; zero-initialized so the planner starts out
    /// handing out nothing.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Squash amplitude c: per-player extras stay within [-c, c] before
    /// recentring, [-2c, 2c] after.
    pub bound: f64,
    pub step_size: f64,
    pub cost_weight: f64,
    pub revenue_neutral: bool,
    pub mode: PlannerMode,
    /// Std-dev of the pre-squash exploration noise in estimated mode.
    pub noise_sigma: f64,
}

/// Gradient (or update direction) with the same shape as the planner's
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerGrad {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl PlannerGrad {
    pub fn zeros(feature_dim: usize, n_players: usize) -> Self {
        PlannerGrad {
            weights: vec![vec![0.0; n_players]; feature_dim],
            bias: vec![0.0; n_players],
        }
    }

    pub fn zeros_like(planner: &PlannerPolicy) -> Self {
        PlannerGrad::zeros(planner.feature_dim(), planner.n_players)
    }

    /// self += scale * other, assuming matching shapes.
    pub fn add_scaled(&mut self, scale: f64, other: &PlannerGrad) {
        for (row, orow) in self.weights.iter_mut().zip(&other.weights) {
            for (w, o) in row.iter_mut().zip(orow) {
                *w += scale * o;
            }
        }
        for (b, o) in self.bias.iter_mut().zip(&other.bias) {
            *b += scale * o;
        }
    }

    pub fn dot(&self, other: &PlannerGrad) -> f64 {
        let mut acc = 0.0;
        for (row, orow) in self.weights.iter().zip(&other.weights) {
            for (w, o) in row.iter().zip(orow) {
                acc += w * o;
            }
        }
        for (b, o) in self.bias.iter().zip(&other.bias) {
            acc += b * o;
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        let ws = self.weights.iter().flatten().map(|w| w.abs());
        let bs = self.bias.iter().map(|b| b.abs());
        ws.chain(bs).fold(0.0, f64::max)
    }
}

/// Index of a joint profile: bit j is set iff player j cooperates.
/// For two players: (D,D) -> 0, (C,D) -> 1, (D,C) -> 2, (C,C) -> 3.
pub fn profile_index(profile: &[Action]) -> usize {
    profile
        .iter()
        .enumerate()
        .filter(|(_, a)| a.cooperates())
        .fold(0usize, |acc, (j, _)| acc | (1 << j))
}

/// Inverse of `profile_index`.
pub fn index_profile(idx: usize, n_players: usize) -> Vec<Action> {
    (0..n_players)
        .map(|j| if idx >> j & 1 == 1 { Action::Cooperate } else { Action::Defect })
        .collect()
}

impl PlannerPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_players: usize,
        encoding: ProfileEncoding,
        bound: f64,
        step_size: f64,
        cost_weight: f64,
        revenue_neutral: bool,
        mode: PlannerMode,
        noise_sigma: f64,
    ) -> Result<Self> {
        if n_players < 2 {
            return Err(Error::Config(format!(
                "planner needs at least 2 players, got {n_players}"
            )));
        }
        if encoding == ProfileEncoding::JointOnehot && n_players > MAX_ENUM_PLAYERS {
            return Err(Error::Capacity(format!(
                "one-hot profile encoding needs 2^{n_players} features; use action_vector beyond {MAX_ENUM_PLAYERS} players"
            )));
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::Config(format!("planner bound must be positive, got {bound}")));
        }
        if !(noise_sigma > 0.0) || !noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "planner noise sigma must be positive, got {noise_sigma}"
            )));
        }
        if !(cost_weight >= 0.0) || !cost_weight.is_finite() {
            return Err(Error::Config(format!(
                "planner cost weight must be non-negative, got {cost_weight}"
            )));
        }
        let feature_dim = match encoding {
            ProfileEncoding::JointOnehot => 1usize << n_players,
            ProfileEncoding::ActionVector => n_players,
        };
        Ok(PlannerPolicy {
            n_players,
            encoding,
            weights: vec![vec![0.0; n_players]; feature_dim],
            bias: vec![0.0; n_players],
            bound,
            step_size,
            cost_weight,
            revenue_neutral,
            mode,
            noise_sigma,
        })
    }

    pub fn feature_dim(&self) -> usize {
        match self.encoding {
            ProfileEncoding::JointOnehot => 1usize << self.n_players,
            ProfileEncoding::ActionVector => self.n_players,
        }
    }

    /// Features with non-zero value for the given profile index. Both
    /// encodings are 0/1-valued, so features are just index lists.
    pub fn active_features(&self, idx: usize) -> Vec<usize> {
        match self.encoding {
            ProfileEncoding::JointOnehot => vec![idx],
            ProfileEncoding::ActionVector => {
                (0..self.n_players).filter(|j| idx >> j & 1 == 1).collect()
            }
        }
    }

    fn check_profile(&self, profile: &[Action]) -> Result<usize> {
        if profile.len() != self.n_players {
            return Err(Error::Dimension(format!(
                "profile has {} actions but the planner serves {} players",
                profile.len(),
                self.n_players
            )));
        }
        Ok(profile_index(profile))
    }

    /// Pre-squash activations z for a profile index.
    pub(crate) fn activations(&self, idx: usize) -> Vec<f64> {
        let mut z = self.bias.clone();
        for &f in &self.active_features(idx) {
            for (zk, w) in z.iter_mut().zip(&self.weights[f]) {
                *zk += w;
            }
        }
        z
    }

    fn squash(&self, z: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = z.iter().map(|zk| self.bound * zk.tanh()).collect();
        if self.revenue_neutral {
            let mean = out.iter().sum::<f64>() / out.len() as f64;
            for o in &mut out {
                *o -= mean;
            }
        }
        out
    }

    /// Deterministic extra rewards for an observed profile.
    pub fn planner_action(&self, profile: &[Action]) -> Result<Vec<f64>> {
        let idx = self.check_profile(profile)?;
        Ok(self.squash(&self.activations(idx)))
    }

    /// Extra rewards with pre-squash Gaussian exploration noise; returns the
    /// rewards and the drawn noise so the episode record can keep it.
    pub fn planner_action_noisy<R: Rng + ?Sized>(
        &self,
        profile: &[Action],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let idx = self.check_profile(profile)?;
        let normal = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::Config(format!("bad noise sigma: {e}")))?;
        let noise: Vec<f64> = (0..self.n_players).map(|_| normal.sample(rng)).collect();
        let z: Vec<f64> =
            self.activations(idx).iter().zip(&noise).map(|(zk, e)| zk + e).collect();
        Ok((self.squash(&z), noise))
    }

    /// Full outcome-to-extras table for two-player games, in the shape
    /// `modified_greed_fear` consumes.
    pub fn outcome_table(
        &self,
    ) -> Result<std::collections::BTreeMap<(Action, Action), [f64; 2]>> {
        if self.n_players != 2 {
            return Err(Error::Dimension(format!(
                "outcome table is only defined for 2 players, planner has {}",
                self.n_players
            )));
        }
        let mut table = std::collections::BTreeMap::new();
        for idx in 0..4usize {
            let profile = index_profile(idx, 2);
            let r = self.planner_action(&profile)?;
            table.insert((profile[0], profile[1]), [r[0], r[1]]);
        }
        Ok(table)
    }

    /// One gradient-ascent step: params += step_size * direction.
    pub fn step(&mut self, direction: &PlannerGrad) -> Result<()> {
        for (row, drow) in self.weights.iter_mut().zip(&direction.weights) {
            for (w, d) in row.iter_mut().zip(drow) {
                *w += self.step_size * d;
                if !w.is_finite() {
                    return Err(Error::Numeric("planner weight became non-finite".into()));
                }
            }
        }
        for (b, d) in self.bias.iter_mut().zip(&direction.bias) {
            *b += self.step_size * d;
            if !b.is_finite() {
                return Err(Error::Numeric("planner bias became non-finite".into()));
            }
        }
        Ok(())
    }
}

/// Sampled update direction for the planner (the bracket of the update rule,
/// before scaling by the planner's own step size).
///
/// The look-ahead term is a product of two expectations per player: the
/// parameter cross-term E[grad_p log pi_p * score_i * extra_i] and the
/// welfare factor E[score_i * total_base_reward]. With `Independent`
/// factoring and at least two records, the first factor is estimated from
/// the first half of the batch and the second from the rest, keeping the
/// product unbiased; otherwise one shared batch estimates both.
///
/// The cost term replaces the exact value vector by batch means of the
/// handed-out extras.
pub fn eq6_direction(
    planner: &PlannerPolicy,
    batch: &[EpisodeRecord],
    thetas: &[f64],
    learner_steps: &[f64],
    factor_mode: FactorMode,
) -> Result<PlannerGrad> {
    let n = planner.n_players;
    if batch.is_empty() {
        return Err(Error::Dimension("planner update needs a non-empty batch".into()));
    }
    if thetas.len() != n || learner_steps.len() != n {
        return Err(Error::Dimension(format!(
            "planner serves {n} players but got {} thetas and {} step sizes",
            thetas.len(),
            learner_steps.len()
        )));
    }
    let (f_batch, g_batch) = match factor_mode {
        FactorMode::Independent if batch.len() >= 2 => {
            let split = batch.len().div_ceil(2);
            (&batch[..split], &batch[split..])
        }
        _ => (batch, batch),
    };

    for rec in batch {
        if rec.profile.len() != n || rec.extra_rewards.len() != n || rec.base_rewards.len() != n {
            return Err(Error::Dimension("episode record does not match planner size".into()));
        }
    }

    // Welfare factors G_i over the second batch.
    let mut g_factor = vec![0.0; n];
    for rec in g_batch {
        let total: f64 = rec.base_rewards.iter().sum();
        for i in 0..n {
            g_factor[i] += score(thetas[i], rec.profile[i]) * total;
        }
    }
    for g in &mut g_factor {
        *g /= g_batch.len() as f64;
    }

    // Cost direction needs the estimated per-player extras and their norm.
    let mut v_hat = vec![0.0; n];
    for rec in f_batch {
        for i in 0..n {
            v_hat[i] += rec.extra_rewards[i];
        }
    }
    for v in &mut v_hat {
        *v /= f_batch.len() as f64;
    }
    let v_norm = v_hat.iter().map(|v| v * v).sum::<f64>().sqrt();

    let inv_sigma2 = 1.0 / (planner.noise_sigma * planner.noise_sigma);
    let inv_f = 1.0 / f_batch.len() as f64;
    let mut dir = PlannerGrad::zeros_like(planner);
    for rec in f_batch {
        let noise = rec.planner_noise.as_ref().ok_or_else(|| {
            Error::Dimension("sampled planner update needs episodes played with noise".into())
        })?;
        if noise.len() != n {
            return Err(Error::Dimension("planner noise length does not match players".into()));
        }
        // Scalar weight per record: look-ahead minus cost, both sharing the
        // same grad_p log pi_p factor.
        let mut lookahead = 0.0;
        let mut cost = 0.0;
        for i in 0..n {
            let s_i = score(thetas[i], rec.profile[i]);
            lookahead += learner_steps[i] * g_factor[i] * s_i * rec.extra_rewards[i];
            if v_norm > 0.0 {
                cost += planner.cost_weight * (v_hat[i] / v_norm) * rec.extra_rewards[i];
            }
        }
        let coeff = (lookahead - cost) * inv_f;
        let idx = profile_index(&rec.profile);
        for k in 0..n {
            let g = coeff * noise[k] * inv_sigma2;
            dir.bias[k] += g;
            for &f in &planner.active_features(idx) {
                dir.weights[f][k] += g;
            }
        }
    }
    Ok(dir)
}

/// Applies one sampled planner update in place.
pub fn planner_update_estimated(
    planner: &mut PlannerPolicy,
    batch: &[EpisodeRecord],
    thetas: &[f64],
    learner_steps: &[f64],
    factor_mode: FactorMode,
) -> Result<()> {
    let dir = eq6_direction(planner, batch, thetas, learner_steps, factor_mode)?;
    planner.step(&dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{C, D};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_planner(encoding: ProfileEncoding, revenue_neutral: bool) -> PlannerPolicy {
        PlannerPolicy::new(2, encoding, 3.0, 0.5, 0.0, revenue_neutral, PlannerMode::Exact, 0.1)
            .unwrap()
    }

    #[test]
    fn profile_index_bit_layout() {
        assert_eq!(profile_index(&[D, D]), 0);
        assert_eq!(profile_index(&[C, D]), 1);
        assert_eq!(profile_index(&[D, C]), 2);
        assert_eq!(profile_index(&[C, C]), 3);
        for idx in 0..8 {
            assert_eq!(profile_index(&index_profile(idx, 3)), idx);
        }
    }

    #[test]
    fn zero_initialized_planner_hands_out_nothing() {
        for enc in [ProfileEncoding::JointOnehot, ProfileEncoding::ActionVector] {
            for rn in [false, true] {
                let p = test_planner(enc, rn);
                for idx in 0..4 {
                    let out = p.planner_action(&index_profile(idx, 2)).unwrap();
                    assert_eq!(out, vec![0.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn onehot_weight_touches_only_its_profile() {
        let mut p = test_planner(ProfileEncoding::JointOnehot, false);
        p.weights[profile_index(&[C, C])][0] = 10.0;
        for idx in 0..4 {
            let out = p.planner_action(&index_profile(idx, 2)).unwrap();
            if idx == 3 {
                assert!((out[0] - 3.0 * 10.0f64.tanh()).abs() < 1e-12);
            } else {
                assert_eq!(out[0], 0.0);
            }
            assert_eq!(out[1], 0.0);
        }
    }

    #[test]
    fn action_vector_weight_follows_cooperation() {
        let mut p = test_planner(ProfileEncoding::ActionVector, false);
        p.weights[0][1] = 0.5;
        // Player 0 cooperating raises player 1's extra on CD and CC only.
        let expect = 3.0 * 0.5f64.tanh();
        assert_eq!(p.planner_action(&[D, D]).unwrap()[1], 0.0);
        assert!((p.planner_action(&[C, D]).unwrap()[1] - expect).abs() < 1e-12);
        assert_eq!(p.planner_action(&[D, C]).unwrap()[1], 0.0);
        assert!((p.planner_action(&[C, C]).unwrap()[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn profile_length_is_checked() {
        let p = test_planner(ProfileEncoding::JointOnehot, false);
        assert!(p.planner_action(&[C, D, D]).is_err());
        assert!(p.planner_action(&[C]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        let mk = |n, enc, bound, sigma| {
            PlannerPolicy::new(n, enc, bound, 0.5, 0.0002, false, PlannerMode::Exact, sigma)
        };
        assert!(mk(1, ProfileEncoding::JointOnehot, 3.0, 0.1).is_err());
        assert!(mk(2, ProfileEncoding::JointOnehot, 0.0, 0.1).is_err());
        assert!(mk(2, ProfileEncoding::JointOnehot, 3.0, 0.0).is_err());
        assert!(mk(21, ProfileEncoding::JointOnehot, 3.0, 0.1).is_err());
        assert!(mk(21, ProfileEncoding::ActionVector, 3.0, 0.1).is_ok());
    }

    #[test]
    fn outcome_table_matches_planner_action() {
        let mut p = test_planner(ProfileEncoding::JointOnehot, true);
        p.weights[1][0] = 1.0;
        p.weights[2][1] = -0.7;
        let table = p.outcome_table().unwrap();
        assert_eq!(table.len(), 4);
        for ((a, b), extras) in table {
            let direct = p.planner_action(&[a, b]).unwrap();
            assert_eq!(extras.to_vec(), direct);
        }
        let p3 = PlannerPolicy::new(
            3,
            ProfileEncoding::ActionVector,
            3.0,
            0.5,
            0.0,
            false,
            PlannerMode::Exact,
            0.1,
        )
        .unwrap();
        assert!(p3.outcome_table().is_err());
    }

    #[test]
    fn noisy_action_stores_noise_and_respects_bound() {
        let mut p = test_planner(ProfileEncoding::JointOnehot, false);
        p.weights[3][0] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (out, noise) = p.planner_action_noisy(&[C, C], &mut rng).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(noise.len(), 2);
        assert!(out.iter().all(|r| r.abs() <= 3.0));
        // Same seed, same draw.
        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        let (out2, noise2) = p.planner_action_noisy(&[C, C], &mut rng2).unwrap();
        assert_eq!(out, out2);
        assert_eq!(noise, noise2);
    }

    #[test]
    fn step_applies_scaled_direction() {
        let mut p = test_planner(ProfileEncoding::JointOnehot, false);
        let mut dir = PlannerGrad::zeros_like(&p);
        dir.weights[3][1] = 2.0;
        dir.bias[0] = -1.0;
        p.step(&dir).unwrap();
        assert_eq!(p.weights[3][1], 1.0); // step_size 0.5
        assert_eq!(p.bias[0], -0.5);

        dir.bias[0] = f64::INFINITY;
        assert!(p.step(&dir).is_err());
    }

    #[test]
    fn eq6_zero_learner_steps_give_zero_direction() {
        let p = test_planner(ProfileEncoding::JointOnehot, false);
        let rec = EpisodeRecord {
            profile: vec![C, D],
            base_rewards: vec![0.0, 4.0],
            extra_rewards: vec![1.0, -1.0],
            planner_noise: Some(vec![0.3, -0.2]),
        };
        let dir =
            eq6_direction(&p, &[rec], &[0.0, 0.0], &[0.0, 0.0], FactorMode::Shared).unwrap();
        assert_eq!(dir.max_abs(), 0.0);
    }

    #[test]
    fn eq6_zero_extras_give_zero_direction() {
        let p = test_planner(ProfileEncoding::JointOnehot, false);
        let rec = EpisodeRecord {
            profile: vec![C, D],
            base_rewards: vec![0.0, 4.0],
            extra_rewards: vec![0.0, 0.0],
            planner_noise: Some(vec![0.3, -0.2]),
        };
        let dir =
            eq6_direction(&p, &[rec], &[0.0, 0.0], &[0.01, 0.01], FactorMode::Independent)
                .unwrap();
        assert_eq!(dir.max_abs(), 0.0);
    }

    #[test]
    fn eq6_requires_noise_and_matching_sizes() {
        let p = test_planner(ProfileEncoding::JointOnehot, false);
        let rec = EpisodeRecord {
            profile: vec![C, D],
            base_rewards: vec![0.0, 4.0],
            extra_rewards: vec![1.0, 0.0],
            planner_noise: None,
        };
        assert!(
            eq6_direction(&p, &[rec], &[0.0, 0.0], &[0.01, 0.01], FactorMode::Shared).is_err()
        );
        assert!(eq6_direction(&p, &[], &[0.0, 0.0], &[0.01, 0.01], FactorMode::Shared).is_err());
    }

    #[test]
    fn eq6_hand_computed_single_record() {
        // Shared mode, one record, theta = 0 so scores are +-0.5.
        // G_i = score_i * (base_0 + base_1); lookahead_i = eta * G_i *
        // score_i * extra_i; coeff = sum_i lookahead_i (cost off).
        let p = test_planner(ProfileEncoding::JointOnehot, false);
        let rec = EpisodeRecord {
            profile: vec![C, D],
            base_rewards: vec![0.0, 4.0],
            extra_rewards: vec![2.0, 1.0],
            planner_noise: Some(vec![0.5, -0.3]),
        };
        let dir = eq6_direction(&p, &[rec.clone()], &[0.0, 0.0], &[0.01, 0.01], FactorMode::Shared)
            .unwrap();
        let g = [0.5 * 4.0, -0.5 * 4.0];
        let coeff = 0.01 * g[0] * 0.5 * 2.0 + 0.01 * g[1] * -0.5 * 1.0;
        let idx = profile_index(&[C, D]);
        for k in 0..2 {
            let expect = coeff * rec.planner_noise.as_ref().unwrap()[k] / (0.1 * 0.1);
            assert!((dir.bias[k] - expect).abs() < 1e-12);
            assert!((dir.weights[idx][k] - expect).abs() < 1e-12);
        }
        // Inactive profiles receive nothing.
        assert_eq!(dir.weights[0][0], 0.0);
        assert_eq!(dir.weights[3][1], 0.0);
    }

    proptest! {
        #[test]
        fn outputs_respect_bounds_and_neutrality(
            w in proptest::collection::vec(-10.0f64..10.0, 8),
            idx in 0usize..4,
            rn in proptest::bool::ANY,
        ) {
            let mut p = test_planner(ProfileEncoding::JointOnehot, rn);
            for (f, chunk) in w.chunks(2).enumerate() {
                p.weights[f] = chunk.to_vec();
            }
            let out = p.planner_action(&index_profile(idx, 2)).unwrap();
            let cap = if rn { 2.0 * p.bound } else { p.bound };
            for r in &out {
                prop_assert!(r.abs() <= cap + 1e-12);
            }
            if rn {
                prop_assert!(out.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }
}
