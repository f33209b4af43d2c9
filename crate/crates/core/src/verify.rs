//! Self-check suite behind the `verify` command.
//!
//! Every closed-form gradient is swept against central finite differences on
//! randomized configurations, the sampled estimators get Monte Carlo bias
//! checks at fixed seeds, and the structural invariants (payout bounds,
//! revenue neutrality, the opponent model's closed form, the one-hot
//! encoding's expressiveness) are compared against independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{coop_prob, logit, reinforce_grad, sample_action, score, EpisodeRecord, LearnerPolicy};
use crate::error::Result;
use crate::exact::{cost_grad, exact_learner_grad, exact_values, lookahead_grad_exact, ExactEngine};
use crate::game::{preset, Action, Game, PayoffMatrix};
use crate::planner::{
    eq6_direction, index_profile, FactorMode, PlannerGrad, PlannerMode, PlannerPolicy,
    ProfileEncoding,
};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Relative tolerance for the finite-difference sweeps.
    pub fd_tol: f64,
    /// Sample count for each Monte Carlo check.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { fd_tol: 1e-4, mc_samples: 100_000, seed: 0 }
    }
}

/// Central-difference step. Small enough that truncation error sits well
/// under the default tolerance, large enough that cancellation noise does
/// not surface.
const FD_H: f64 = 1e-5;
const FD_CONFIGS: usize = 100;
/// Denominator floor for relative errors, so exact zeros compare cleanly.
const REL_FLOOR: f64 = 1e-8;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckResult {
    match result {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("errored: {e}") },
    }
}

/// Runs every check. Order is stable so output lines can be compared across
/// invocations.
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    vec![
        check_learner_grad_fd(opts),
        check_lookahead_grad_fd(opts),
        check_cost_grad_fd(opts),
        check_score_mean_zero(opts),
        check_reinforce_unbiased(opts),
        check_estimated_direction_alignment(opts),
        check_payout_bound(opts),
        check_revenue_neutral_zero_sum(opts),
        check_opponent_mle(opts),
        check_onehot_expressiveness(opts),
    ]
}

/// One randomized setting for the gradient sweeps: a game, learner
/// parameters, a planner with non-trivial weights, and per-player step
/// sizes. Every fourth setting is a 3-player group game with the per-player
/// encoding; the rest are random 2-player matrices with the one-hot
/// encoding.
fn random_setup(
    rng: &mut ChaCha8Rng,
    k: usize,
) -> Result<(Game, Vec<f64>, PlannerPolicy, Vec<f64>)> {
    let group = k % 4 == 3;
    let (game, n, encoding) = if group {
        (preset("pd_n", 3)?, 3, ProfileEncoding::ActionVector)
    } else {
        let greed = rng.gen_range(-1.5..1.5);
        let fear = rng.gen_range(-1.5..1.5);
        let m = PayoffMatrix::from_greed_fear(greed, fear, 3.0, 1.0)?;
        (Game::Matrix(m), 2, ProfileEncoding::JointOnehot)
    };
    let rn = rng.gen::<bool>();
    let cost_weight = rng.gen_range(0.1..1.0);
    let mut planner = PlannerPolicy::new(
        n,
        encoding,
        3.0,
        0.5,
        cost_weight,
        rn,
        PlannerMode::Exact,
        0.1,
    )?;
    for row in &mut planner.weights {
        for w in row.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    for b in &mut planner.bias {
        *b = rng.gen_range(-0.5..0.5);
    }
    let thetas: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let steps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.05)).collect();
    Ok((game, thetas, planner, steps))
}

/// Central differences of a scalar objective over every planner parameter.
fn fd_over_params(
    planner: &PlannerPolicy,
    mut objective: impl FnMut(&PlannerPolicy) -> Result<f64>,
) -> Result<PlannerGrad> {
    let mut g = PlannerGrad::zeros_like(planner);
    for f in 0..planner.feature_dim() {
        for k in 0..planner.n_players {
            let mut up = planner.clone();
            up.weights[f][k] += FD_H;
            let mut dn = planner.clone();
            dn.weights[f][k] -= FD_H;
            g.weights[f][k] = (objective(&up)? - objective(&dn)?) / (2.0 * FD_H);
        }
    }
    for k in 0..planner.n_players {
        let mut up = planner.clone();
        up.bias[k] += FD_H;
        let mut dn = planner.clone();
        dn.bias[k] -= FD_H;
        g.bias[k] = (objective(&up)? - objective(&dn)?) / (2.0 * FD_H);
    }
    Ok(g)
}

fn max_component_rel_err(a: &PlannerGrad, b: &PlannerGrad) -> f64 {
    let mut worst = 0.0f64;
    for (row, orow) in a.weights.iter().zip(&b.weights) {
        for (x, y) in row.iter().zip(orow) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    for (x, y) in a.bias.iter().zip(&b.bias) {
        worst = worst.max(rel_err(*x, *y));
    }
    worst
}

/// Closed-form learner gradients against central differences of each
/// player's own expected total reward.
pub fn check_learner_grad_fd(opts: &VerifyOptions) -> CheckResult {
    outcome("learner_grad_fd", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x11);
        let mut worst = 0.0f64;
        for k in 0..FD_CONFIGS {
            let (game, thetas, planner, _) = random_setup(&mut rng, k)?;
            for player in 0..thetas.len() {
                let g = exact_learner_grad(player, &thetas, &game, Some(&planner))?;
                let f = |t: &[f64]| -> Result<f64> {
                    let (v, vp) = exact_values(t, &game, Some(&planner))?;
                    Ok(v[player] + vp[player])
                };
                let mut up = thetas.clone();
                up[player] += FD_H;
                let mut dn = thetas.clone();
                dn[player] -= FD_H;
                let fd = (f(&up)? - f(&dn)?) / (2.0 * FD_H);
                worst = worst.max(rel_err(g, fd));
            }
        }
        Ok((worst <= opts.fd_tol, format!(
            "max rel err {worst:.2e} over {FD_CONFIGS} settings (tol {:.1e})",
            opts.fd_tol
        )))
    })())
}

/// Look-ahead gradient against central differences of the one-step welfare
/// surrogate: the sum over players of step size times own-value gradient,
/// contracted with the frozen welfare gradient. The welfare gradient does
/// not depend on the planner's parameters, so differentiating the surrogate
/// in the planner isolates exactly the look-ahead term.
pub fn check_lookahead_grad_fd(opts: &VerifyOptions) -> CheckResult {
    check_lookahead_grad_fd_with(opts, lookahead_grad_exact)
}

/// Seam for fault-injection tests: the same sweep with the gradient function
/// supplied by the caller.
pub fn check_lookahead_grad_fd_with(
    opts: &VerifyOptions,
    grad_fn: impl Fn(&[f64], &Game, &PlannerPolicy, &[f64]) -> Result<PlannerGrad>,
) -> CheckResult {
    outcome("lookahead_grad_fd", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x22);
        let mut worst = 0.0f64;
        for k in 0..FD_CONFIGS {
            let (game, thetas, planner, steps) = random_setup(&mut rng, k)?;
            let engine = ExactEngine::new(&game)?;
            let wg = engine.eval(&thetas, Some(&planner))?.welfare_grads;
            let g = grad_fn(&thetas, &game, &planner, &steps)?;
            let fd = fd_over_params(&planner, |p| {
                let eval = engine.eval(&thetas, Some(p))?;
                Ok((0..thetas.len())
                    .map(|i| steps[i] * eval.total_grads[i] * wg[i])
                    .sum())
            })?;
            worst = worst.max(max_component_rel_err(&g, &fd));
        }
        Ok((worst <= opts.fd_tol, format!(
            "max rel err {worst:.2e} over {FD_CONFIGS} settings (tol {:.1e})",
            opts.fd_tol
        )))
    })())
}

/// Cost gradient against central differences of cost_weight times the norm
/// of the expected payout vector. Settings whose payout norm sits near the
/// norm's kink at zero are resampled.
pub fn check_cost_grad_fd(opts: &VerifyOptions) -> CheckResult {
    outcome("cost_grad_fd", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x33);
        let mut worst = 0.0f64;
        let mut done = 0;
        let mut attempts = 0;
        while done < FD_CONFIGS {
            attempts += 1;
            if attempts > 20 * FD_CONFIGS {
                return Ok((false, "could not sample settings away from zero payout".into()));
            }
            let (game, thetas, planner, _) = random_setup(&mut rng, done)?;
            let norm_of = |p: &PlannerPolicy| -> Result<f64> {
                let (_, vp) = exact_values(&thetas, &game, Some(p))?;
                Ok(vp.iter().map(|v| v * v).sum::<f64>().sqrt())
            };
            if norm_of(&planner)? < 0.05 {
                continue;
            }
            let g = cost_grad(&thetas, &game, &planner)?;
            let w = planner.cost_weight;
            let fd = fd_over_params(&planner, |p| Ok(w * norm_of(p)?))?;
            worst = worst.max(max_component_rel_err(&g, &fd));
            done += 1;
        }
        Ok((worst <= opts.fd_tol, format!(
            "max rel err {worst:.2e} over {FD_CONFIGS} settings (tol {:.1e})",
            opts.fd_tol
        )))
    })())
}

/// The likelihood-ratio factor has mean zero under its own policy; checked
/// at three parameter values with the exact per-sample variance.
pub fn check_score_mean_zero(opts: &VerifyOptions) -> CheckResult {
    outcome("score_mean_zero", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x44);
        let mut worst_z = 0.0f64;
        for theta in [-1.1, 0.0, 1.7] {
            let policy = LearnerPolicy { theta, step_size: 0.0 };
            let p = coop_prob(theta);
            let mut sum = 0.0;
            for _ in 0..opts.mc_samples {
                sum += score(theta, sample_action(&policy, &mut rng));
            }
            let mean = sum / opts.mc_samples as f64;
            let se = (p * (1.0 - p) / opts.mc_samples as f64).sqrt();
            worst_z = worst_z.max(mean.abs() / se);
        }
        Ok((worst_z <= 3.0, format!(
            "max |z| {worst_z:.2} over 3 parameter values ({} samples, 3 SE)",
            opts.mc_samples
        )))
    })())
}

/// Single-episode sampled gradients average to the exact total-reward
/// gradient, and a constant baseline leaves that mean unchanged.
pub fn check_reinforce_unbiased(opts: &VerifyOptions) -> CheckResult {
    outcome("reinforce_unbiased", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x55);
        let game = preset("pd", 2)?;
        let mut planner = PlannerPolicy::new(
            2,
            ProfileEncoding::JointOnehot,
            3.0,
            0.5,
            0.0,
            false,
            PlannerMode::Exact,
            0.1,
        )?;
        planner.weights[3] = vec![0.6, 0.6];
        planner.weights[1] = vec![-0.4, 0.3];
        let thetas = [logit(0.25), logit(0.7)];
        let policies: Vec<LearnerPolicy> =
            thetas.iter().map(|&theta| LearnerPolicy { theta, step_size: 0.0 }).collect();
        let exact: Vec<f64> = (0..2)
            .map(|i| exact_learner_grad(i, &thetas, &game, Some(&planner)))
            .collect::<Result<_>>()?;

        let baselines = [0.0, 1.7];
        // mean and sum of squared deviations per (player, baseline) pair.
        let mut sums = [[0.0f64; 2]; 2];
        let mut sq = [[0.0f64; 2]; 2];
        for _ in 0..opts.mc_samples {
            let profile: Vec<Action> =
                policies.iter().map(|pl| sample_action(pl, &mut rng)).collect();
            let base = game.rewards(&profile)?;
            let extras = planner.planner_action(&profile)?;
            let rec = EpisodeRecord {
                profile,
                base_rewards: base,
                extra_rewards: extras,
                planner_noise: None,
            };
            for (bi, &b) in baselines.iter().enumerate() {
                for player in 0..2 {
                    let est = reinforce_grad(player, std::slice::from_ref(&rec), &thetas, b)?;
                    sums[player][bi] += est;
                    sq[player][bi] += est * est;
                }
            }
        }
        let n = opts.mc_samples as f64;
        let mut worst_z = 0.0f64;
        for player in 0..2 {
            for bi in 0..2 {
                let mean = sums[player][bi] / n;
                let var = (sq[player][bi] / n - mean * mean).max(0.0);
                let se = (var / n).sqrt();
                worst_z = worst_z.max((mean - exact[player]).abs() / se);
            }
        }
        Ok((worst_z <= 3.0, format!(
            "max |z| {worst_z:.2} over 2 players x 2 baselines ({} samples, 3 SE)",
            opts.mc_samples
        )))
    })())
}

/// The sampled planner direction, averaged over many two-episode batches,
/// projects positively onto the closed-form look-ahead gradient. The cost
/// weight is zero here so the two rules target the same objective; the
/// exploration noise smooths the sampled one, so alignment rather than
/// equality is the honest claim.
pub fn check_estimated_direction_alignment(opts: &VerifyOptions) -> CheckResult {
    outcome("estimated_direction_alignment", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x66);
        let settings = 5;
        let batches = (opts.mc_samples / (2 * settings)).max(1_000);
        let mut worst_z = f64::INFINITY;
        for _ in 0..settings {
            let greed = rng.gen_range(-1.5..1.5);
            let fear = rng.gen_range(-1.5..1.5);
            let game = Game::Matrix(PayoffMatrix::from_greed_fear(greed, fear, 3.0, 1.0)?);
            let mut planner = PlannerPolicy::new(
                2,
                ProfileEncoding::JointOnehot,
                3.0,
                0.5,
                0.0,
                false,
                PlannerMode::Estimated,
                0.3,
            )?;
            for row in &mut planner.weights {
                for w in row.iter_mut() {
                    *w = rng.gen_range(-0.8..0.8);
                }
            }
            let thetas: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let steps = vec![0.01, 0.01];
            let policies: Vec<LearnerPolicy> =
                thetas.iter().map(|&theta| LearnerPolicy { theta, step_size: 0.0 }).collect();

            let target = lookahead_grad_exact(&thetas, &game, &planner, &steps)?;
            let norm = target.dot(&target).sqrt();
            if norm < 1e-9 {
                continue;
            }

            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..batches {
                let mut recs = Vec::with_capacity(2);
                for _ in 0..2 {
                    let profile: Vec<Action> =
                        policies.iter().map(|pl| sample_action(pl, &mut rng)).collect();
                    let base = game.rewards(&profile)?;
                    let (extras, noise) = planner.planner_action_noisy(&profile, &mut rng)?;
                    recs.push(EpisodeRecord {
                        profile,
                        base_rewards: base,
                        extra_rewards: extras,
                        planner_noise: Some(noise),
                    });
                }
                let dir =
                    eq6_direction(&planner, &recs, &thetas, &steps, FactorMode::Independent)?;
                let x = dir.dot(&target) / norm;
                sum += x;
                sq += x * x;
            }
            let nb = batches as f64;
            let mean = sum / nb;
            let var = (sq / nb - mean * mean).max(0.0);
            let se = (var / nb).sqrt();
            let z = mean / se.max(f64::MIN_POSITIVE);
            worst_z = worst_z.min(z);
        }
        Ok((worst_z > 3.0, format!(
            "min projection z {worst_z:.1} over 5 settings x {batches} two-episode batches (needs > 3)",
        )))
    })())
}

/// Handed-out rewards stay inside the squash bound (twice the bound after
/// revenue-neutral recentring), noisy or not.
pub fn check_payout_bound(opts: &VerifyOptions) -> CheckResult {
    outcome("payout_bound", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x77);
        let mut worst = 0.0f64;
        for k in 0..FD_CONFIGS {
            let (_, _, planner, _) = random_setup(&mut rng, k)?;
            let cap = if planner.revenue_neutral { 2.0 * planner.bound } else { planner.bound };
            for idx in 0..(1usize << planner.n_players) {
                let profile = index_profile(idx, planner.n_players);
                let out = planner.planner_action(&profile)?;
                let (noisy, _) = planner.planner_action_noisy(&profile, &mut rng)?;
                for r in out.iter().chain(&noisy) {
                    worst = worst.max(r.abs() / cap);
                }
            }
        }
        Ok((worst <= 1.0 + 1e-12, format!(
            "max |payout|/cap {worst:.6} over {FD_CONFIGS} planners, all profiles"
        )))
    })())
}

/// Revenue-neutral payouts sum to zero in every profile, to the same
/// tolerance the emitted rows are held to.
pub fn check_revenue_neutral_zero_sum(opts: &VerifyOptions) -> CheckResult {
    outcome("revenue_neutral_zero_sum", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x88);
        let mut worst = 0.0f64;
        for k in 0..FD_CONFIGS {
            let (_, _, mut planner, _) = random_setup(&mut rng, k)?;
            planner.revenue_neutral = true;
            for idx in 0..(1usize << planner.n_players) {
                let profile = index_profile(idx, planner.n_players);
                let out = planner.planner_action(&profile)?;
                let (noisy, _) = planner.planner_action_noisy(&profile, &mut rng)?;
                worst = worst.max(out.iter().sum::<f64>().abs());
                worst = worst.max(noisy.iter().sum::<f64>().abs());
            }
        }
        Ok((worst <= 1e-12, format!(
            "max |sum of payouts| {worst:.2e} over {FD_CONFIGS} planners (tol 1e-12)"
        )))
    })())
}

/// The opponent model's closed-form estimate against a ternary search over
/// the smoothed window log-likelihood.
pub fn check_opponent_mle(opts: &VerifyOptions) -> CheckResult {
    outcome("opponent_mle", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x99);
        let window = 50usize;
        let mut worst = 0.0f64;
        for _ in 0..FD_CONFIGS {
            let smoothing = rng.gen_range(0.1..5.0);
            let len = rng.gen_range(1..120usize);
            let mut est = crate::opponent::OpponentEstimate::new(1, window, smoothing)?;
            let mut actions = Vec::with_capacity(len);
            for _ in 0..len {
                let a = if rng.gen::<f64>() < 0.5 { Action::Cooperate } else { Action::Defect };
                actions.push(a);
                est.observe(0, a)?;
            }
            let tail = &actions[len.saturating_sub(window)..];
            let n_c = tail.iter().filter(|a| a.cooperates()).count() as f64;
            let n_d = tail.len() as f64 - n_c;
            let ll = |p: f64| (n_c + smoothing) * p.ln() + (n_d + smoothing) * (1.0 - p).ln();
            let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if ll(m1) < ll(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let searched = 0.5 * (lo + hi);
            worst = worst.max((coop_prob(est.thetas()[0]) - searched).abs());
        }
        Ok((worst <= 1e-6, format!(
            "max |closed form - searched| {worst:.2e} over {FD_CONFIGS} windows (tol 1e-6)"
        )))
    })())
}

/// With one feature per profile, any reward table inside the bound is
/// representable exactly: weights are the inverse squash of the targets.
pub fn check_onehot_expressiveness(opts: &VerifyOptions) -> CheckResult {
    outcome("onehot_expressiveness", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xaa);
        let bound = 3.0;
        let mut worst = 0.0f64;
        for _ in 0..FD_CONFIGS {
            let mut planner = PlannerPolicy::new(
                2,
                ProfileEncoding::JointOnehot,
                bound,
                0.5,
                0.0,
                false,
                PlannerMode::Exact,
                0.1,
            )?;
            let mut target = [[0.0f64; 2]; 4];
            for (idx, row) in target.iter_mut().enumerate() {
                for (k, t) in row.iter_mut().enumerate() {
                    *t = rng.gen_range(-0.9 * bound..0.9 * bound);
                    planner.weights[idx][k] = (*t / bound).atanh();
                }
            }
            for (idx, row) in target.iter().enumerate() {
                let out = planner.planner_action(&index_profile(idx, 2))?;
                for (k, t) in row.iter().enumerate() {
                    worst = worst.max((out[k] - t).abs());
                }
            }
        }
        Ok((worst <= 1e-6, format!(
            "max fit error {worst:.2e} over {FD_CONFIGS} random tables (tol 1e-6)"
        )))
    })())
}
