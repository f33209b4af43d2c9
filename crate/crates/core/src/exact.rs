//! Exact expectations over the joint action distribution and the planner's
//! closed-form update built from them.
//!
//! Everything here enumerates all 2^N profiles. Player policies are
//! independent Bernoullis, so profile probabilities are products of
//! per-player cooperation probabilities; gradients with respect to one
//! player's parameter swap that player's factor for +-s_i (the sigmoid
//! derivative), which the leave-one-out products below implement without
//! any division.

use crate::error::{Error, Result};
use crate::game::Game;
use crate::planner::{index_profile, PlannerGrad, PlannerPolicy, MAX_ENUM_PLAYERS};

/// Precomputed per-profile base rewards for one game, reused across episodes.
pub struct ExactEngine {
    n: usize,
    /// base[idx * n + i]: player i's base reward in profile idx.
    base: Vec<f64>,
    /// Summed base rewards per profile.
    welfare_table: Vec<f64>,
}

/// Everything the exact pass knows at one parameter point.
#[derive(Clone, Debug)]
pub struct ExactEval {
    /// V_i: expected base reward per player.
    pub values: Vec<f64>,
    /// V_i^p: expected planner extras per player.
    pub planner_values: Vec<f64>,
    /// d V_i / d theta_i.
    pub base_grads: Vec<f64>,
    /// d (V_i + V_i^p) / d theta_i: what a learner ascends.
    pub total_grads: Vec<f64>,
    /// Social welfare sum_j V_j (base game only).
    pub welfare: f64,
    /// d welfare / d theta_i for every i.
    pub welfare_grads: Vec<f64>,
}

/// Flattened planner outputs for all profiles: handed-out rewards and the
/// derivative of the pre-recentring output w.r.t. its activation.
struct PlannerTable {
    rewards: Vec<f64>,
    deriv: Vec<f64>,
}

impl ExactEngine {
    pub fn new(game: &Game) -> Result<Self> {
        let n = game.n_players();
        if n > MAX_ENUM_PLAYERS {
            return Err(Error::Capacity(format!(
                "exact enumeration over 2^{n} profiles exceeds the {MAX_ENUM_PLAYERS}-player limit"
            )));
        }
        let profiles = 1usize << n;
        let mut base = Vec::with_capacity(profiles * n);
        let mut welfare_table = Vec::with_capacity(profiles);
        for idx in 0..profiles {
            let r = game.rewards(&index_profile(idx, n))?;
            welfare_table.push(r.iter().sum());
            base.extend(r);
        }
        Ok(ExactEngine { n, base, welfare_table })
    }

    pub fn n_players(&self) -> usize {
        self.n
    }

    fn check_thetas(&self, thetas: &[f64]) -> Result<Vec<f64>> {
        if thetas.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} thetas for a {}-player game",
                thetas.len(),
                self.n
            )));
        }
        for &t in thetas {
            if !t.is_finite() {
                return Err(Error::Numeric(format!("non-finite theta {t}")));
            }
        }
        Ok(thetas.iter().map(|&t| crate::agents::coop_prob(t)).collect())
    }

    fn check_planner(&self, planner: &PlannerPolicy) -> Result<()> {
        if planner.n_players != self.n {
            return Err(Error::Dimension(format!(
                "planner serves {} players, game has {}",
                planner.n_players, self.n
            )));
        }
        Ok(())
    }

    /// Walks every profile, handing the closure the profile index, its
    /// probability, and the leave-one-out probabilities excl[j] (product of
    /// all factors except player j's).
    fn for_each_profile(&self, probs: &[f64], mut visit: impl FnMut(usize, f64, &[f64])) {
        let n = self.n;
        let mut q = vec![0.0; n];
        let mut pref = vec![1.0; n + 1];
        let mut suff = vec![1.0; n + 1];
        let mut excl = vec![0.0; n];
        for idx in 0..(1usize << n) {
            for j in 0..n {
                q[j] = if idx >> j & 1 == 1 { probs[j] } else { 1.0 - probs[j] };
            }
            for j in 0..n {
                pref[j + 1] = pref[j] * q[j];
            }
            for j in (0..n).rev() {
                suff[j] = suff[j + 1] * q[j];
            }
            for j in 0..n {
                excl[j] = pref[j] * suff[j + 1];
            }
            visit(idx, pref[n], &excl);
        }
    }

    fn planner_table(&self, planner: &PlannerPolicy) -> PlannerTable {
        let n = self.n;
        let profiles = 1usize << n;
        let mut rewards = vec![0.0; profiles * n];
        let mut deriv = vec![0.0; profiles * n];
        let mut z = vec![0.0; n];
        for idx in 0..profiles {
            z.copy_from_slice(&planner.bias);
            match planner.encoding {
                crate::planner::ProfileEncoding::JointOnehot => {
                    for (zk, w) in z.iter_mut().zip(&planner.weights[idx]) {
                        *zk += w;
                    }
                }
                crate::planner::ProfileEncoding::ActionVector => {
                    for j in 0..n {
                        if idx >> j & 1 == 1 {
                            for (zk, w) in z.iter_mut().zip(&planner.weights[j]) {
                                *zk += w;
                            }
                        }
                    }
                }
            }
            let row = &mut rewards[idx * n..(idx + 1) * n];
            let mut mean = 0.0;
            for k in 0..n {
                let t = z[k].tanh();
                row[k] = planner.bound * t;
                deriv[idx * n + k] = planner.bound * (1.0 - t * t);
                mean += row[k];
            }
            if planner.revenue_neutral {
                mean /= n as f64;
                for r in row {
                    *r -= mean;
                }
            }
        }
        PlannerTable { rewards, deriv }
    }

    /// Values and per-player own-parameter gradients at one point.
    pub fn eval(&self, thetas: &[f64], planner: Option<&PlannerPolicy>) -> Result<ExactEval> {
        let probs = self.check_thetas(thetas)?;
        if let Some(p) = planner {
            self.check_planner(p)?;
        }
        let n = self.n;
        let table = planner.map(|p| self.planner_table(p));
        let s: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();

        let mut values = vec![0.0; n];
        let mut planner_values = vec![0.0; n];
        let mut base_grads = vec![0.0; n];
        let mut extra_grads = vec![0.0; n];
        let mut welfare = 0.0;
        let mut welfare_grads = vec![0.0; n];
        self.for_each_profile(&probs, |idx, prob, excl| {
            let base = &self.base[idx * n..(idx + 1) * n];
            let w = self.welfare_table[idx];
            welfare += prob * w;
            for i in 0..n {
                let sign = if idx >> i & 1 == 1 { 1.0 } else { -1.0 };
                let flow = sign * s[i] * excl[i];
                values[i] += prob * base[i];
                base_grads[i] += flow * base[i];
                welfare_grads[i] += flow * w;
                if let Some(t) = &table {
                    let rp = t.rewards[idx * n + i];
                    planner_values[i] += prob * rp;
                    extra_grads[i] += flow * rp;
                }
            }
        });
        let total_grads = base_grads.iter().zip(&extra_grads).map(|(b, e)| b + e).collect();
        Ok(ExactEval {
            values,
            planner_values,
            base_grads,
            total_grads,
            welfare,
            welfare_grads,
        })
    }

    /// Social welfare of the base game alone; the cheap path for metrics.
    pub fn welfare_only(&self, thetas: &[f64]) -> Result<f64> {
        let probs = self.check_thetas(thetas)?;
        let mut welfare = 0.0;
        self.for_each_profile(&probs, |idx, prob, _| {
            welfare += prob * self.welfare_table[idx];
        });
        Ok(welfare)
    }

    /// Look-ahead and cost gradients w.r.t. every planner parameter, given
    /// an evaluation at the same thetas.
    ///
    /// Look-ahead: d/d(param) of sum_i eta_i * d(V_i^p)/d(theta_i), each term
    /// contracted with the fixed welfare gradient. Cost: cost_weight times
    /// d/d(param) of ||V^p||_2. Revenue-neutral recentring makes every
    /// player's extra depend on every output unit, which shows up as the
    /// mean-subtraction in both accumulations.
    pub fn planner_terms(
        &self,
        thetas: &[f64],
        planner: &PlannerPolicy,
        learner_steps: &[f64],
        eval: &ExactEval,
    ) -> Result<(PlannerGrad, PlannerGrad)> {
        let probs = self.check_thetas(thetas)?;
        self.check_planner(planner)?;
        let n = self.n;
        if learner_steps.len() != n {
            return Err(Error::Dimension(format!(
                "{} learner step sizes for {n} players",
                learner_steps.len()
            )));
        }
        let table = self.planner_table(planner);
        let s: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();

        let vp_norm = eval.planner_values.iter().map(|v| v * v).sum::<f64>().sqrt();
        // Unit vector of planner values; an exactly zero vector has gradient
        // zero (the norm's kink never matters in that case).
        let unit: Vec<f64> = if vp_norm == 0.0 {
            vec![0.0; n]
        } else {
            eval.planner_values.iter().map(|v| v / vp_norm).collect()
        };
        let unit_mean = unit.iter().sum::<f64>() / n as f64;
        let rn = planner.revenue_neutral;

        let mut lookahead = PlannerGrad::zeros_like(planner);
        let mut cost = PlannerGrad::zeros_like(planner);
        let mut a = vec![0.0; n];
        self.for_each_profile(&probs, |idx, prob, excl| {
            let mut a_sum = 0.0;
            for k in 0..n {
                let sign = if idx >> k & 1 == 1 { 1.0 } else { -1.0 };
                a[k] = learner_steps[k] * sign * s[k] * excl[k] * eval.welfare_grads[k];
                a_sum += a[k];
            }
            for k in 0..n {
                let d = table.deriv[idx * n + k];
                let look = d * (a[k] - if rn { a_sum / n as f64 } else { 0.0 });
                let cst = planner.cost_weight
                    * prob
                    * d
                    * (unit[k] - if rn { unit_mean } else { 0.0 });
                lookahead.bias[k] += look;
                cost.bias[k] += cst;
                match planner.encoding {
                    crate::planner::ProfileEncoding::JointOnehot => {
                        lookahead.weights[idx][k] += look;
                        cost.weights[idx][k] += cst;
                    }
                    crate::planner::ProfileEncoding::ActionVector => {
                        for j in 0..n {
                            if idx >> j & 1 == 1 {
                                lookahead.weights[j][k] += look;
                                cost.weights[j][k] += cst;
                            }
                        }
                    }
                }
            }
        });
        Ok((lookahead, cost))
    }
}

/// Expected base rewards and expected planner extras per player.
pub fn exact_values(
    thetas: &[f64],
    game: &Game,
    planner: Option<&PlannerPolicy>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eval = ExactEngine::new(game)?.eval(thetas, planner)?;
    Ok((eval.values, eval.planner_values))
}

/// d (V_i + V_i^p) / d theta_i: the exact gradient a learner follows.
pub fn exact_learner_grad(
    player: usize,
    thetas: &[f64],
    game: &Game,
    planner: Option<&PlannerPolicy>,
) -> Result<f64> {
    if player >= thetas.len() {
        return Err(Error::Dimension(format!(
            "player {player} out of range for {} thetas",
            thetas.len()
        )));
    }
    Ok(ExactEngine::new(game)?.eval(thetas, planner)?.total_grads[player])
}

/// Gradient of next-step social welfare w.r.t. the planner's parameters,
/// obtained by differentiating through the learners' gradient-ascent step.
pub fn lookahead_grad_exact(
    thetas: &[f64],
    game: &Game,
    planner: &PlannerPolicy,
    learner_steps: &[f64],
) -> Result<PlannerGrad> {
    let engine = ExactEngine::new(game)?;
    let eval = engine.eval(thetas, Some(planner))?;
    let (lookahead, _) = engine.planner_terms(thetas, planner, learner_steps, &eval)?;
    Ok(lookahead)
}

/// cost_weight * gradient of ||V^p||_2 w.r.t. the planner's parameters.
pub fn cost_grad(thetas: &[f64], game: &Game, planner: &PlannerPolicy) -> Result<PlannerGrad> {
    let engine = ExactEngine::new(game)?;
    let eval = engine.eval(thetas, Some(planner))?;
    let (_, cost) = engine.planner_terms(thetas, planner, &vec![0.0; thetas.len()], &eval)?;
    Ok(cost)
}

/// One closed-form planner update: params += step * (look-ahead - cost).
pub fn planner_update_exact(
    planner: &mut PlannerPolicy,
    thetas: &[f64],
    game: &Game,
    learner_steps: &[f64],
) -> Result<()> {
    let engine = ExactEngine::new(game)?;
    let eval = engine.eval(thetas, Some(planner))?;
    let (mut dir, cost) = engine.planner_terms(thetas, planner, learner_steps, &eval)?;
    dir.add_scaled(-1.0, &cost);
    planner.step(&dir)
}
