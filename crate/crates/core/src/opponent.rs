//! Opponent modeling for a planner that cannot read the learners' internal
//! parameters: per player, a smoothed maximum-likelihood estimate of theta
//! from the recent action window.

use std::collections::VecDeque;

use crate::agents::logit;
use crate::error::{Error, Result};
use crate::game::Action;

#[derive(Clone, Debug)]
pub struct OpponentEstimate {
    windows: Vec<VecDeque<Action>>,
    capacity: usize,
    /// Laplace smoothing pseudo-count added to both actions; keeps the
    /// estimate finite when a window is all-cooperate or all-defect.
    smoothing: f64,
    thetas: Vec<f64>,
}

impl OpponentEstimate {
    pub fn new(n_players: usize, window: usize, smoothing: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("opponent window must hold at least 1 action".into()));
        }
        if !(smoothing > 0.0) || !smoothing.is_finite() {
            return Err(Error::Config(format!(
                "opponent smoothing must be positive, got {smoothing}"
            )));
        }
        Ok(OpponentEstimate {
            windows: vec![VecDeque::with_capacity(window); n_players],
            capacity: window,
            smoothing,
            // Empty windows estimate P(C) = 1/2, i.e. theta 0.
            thetas: vec![0.0; n_players],
        })
    }

    /// Records one observed action and refreshes that player's estimate.
    /// The closed-form argmax of the smoothed window log-likelihood is
    /// logit((n_c + s) / (n + 2s)).
    pub fn observe(&mut self, player: usize, action: Action) -> Result<()> {
        let window = self
            .windows
            .get_mut(player)
            .ok_or_else(|| Error::Dimension(format!("no player {player} in opponent model")))?;
        if window.len() == self.capacity {
            window.pop_front();
        }
        window.push_back(action);
        let n = window.len() as f64;
        let n_c = window.iter().filter(|a| a.cooperates()).count() as f64;
        self.thetas[player] = logit((n_c + self.smoothing) / (n + 2.0 * self.smoothing));
        Ok(())
    }

    /// Current parameter estimates, substitutable wherever true thetas go.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }
}
