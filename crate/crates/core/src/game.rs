//! Matrix games, social dilemma classification, and the linear N-player
//! generalization of the prisoner's dilemma.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Cooperate,
    Defect,
}

pub const C: Action = Action::Cooperate;
pub const D: Action = Action::Defect;

impl Action {
    pub fn cooperates(self) -> bool {
        self == Action::Cooperate
    }
}

/// Symmetric 2-player payoff matrix in the usual R/S/T/P naming:
/// `reward_cc` for mutual cooperation, `sucker` for cooperating against a
/// defector, `temptation` for defecting against a cooperator, `punishment`
/// for mutual defection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PayoffMatrix {
    pub reward_cc: f64,
    pub sucker: f64,
    pub temptation: f64,
    pub punishment: f64,
}

/// Greed is the gain from defecting against a cooperator (T - R), fear the
/// loss from cooperating against a defector (P - S).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedFear {
    pub greed: f64,
    pub fear: f64,
}

/// Which of the four strict social dilemma conditions hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SocialDilemmaReport {
    /// R > P: mutual cooperation beats mutual defection.
    pub coop_beats_defection: bool,
    /// R > S: mutual cooperation beats being exploited.
    pub coop_beats_exploitation: bool,
    /// R > (T + S) / 2: mutual cooperation beats alternating exploitation.
    pub coop_beats_alternation: bool,
    /// T > R or P > S: some selfish pressure toward defection exists.
    pub defection_pressure: bool,
    pub is_dilemma: bool,
}

impl PayoffMatrix {
    pub fn new(reward_cc: f64, sucker: f64, temptation: f64, punishment: f64) -> Result<Self> {
        let m = PayoffMatrix { reward_cc, sucker, temptation, punishment };
        for (name, v) in [
            ("reward_cc", reward_cc),
            ("sucker", sucker),
            ("temptation", temptation),
            ("punishment", punishment),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("payoff {name} must be finite, got {v}")));
            }
        }
        Ok(m)
    }

    /// Builds the matrix from greed/fear levels around fixed R and P.
    pub fn from_greed_fear(greed: f64, fear: f64, reward_cc: f64, punishment: f64) -> Result<Self> {
        PayoffMatrix::new(reward_cc, punishment - fear, reward_cc + greed, punishment)
    }

    pub fn greed_fear(&self) -> GreedFear {
        GreedFear {
            greed: self.temptation - self.reward_cc,
            fear: self.punishment - self.sucker,
        }
    }

    /// Payoffs for (row, column) players under the given action pair.
    pub fn payoff(&self, row: Action, col: Action) -> [f64; 2] {
        match (row, col) {
            (C, C) => [self.reward_cc, self.reward_cc],
            (C, D) => [self.sucker, self.temptation],
            (D, C) => [self.temptation, self.sucker],
            (D, D) => [self.punishment, self.punishment],
        }
    }

    /// Applies the four strict dilemma conditions. All comparisons are
    /// strict; borderline games do not count.
    pub fn classify(&self) -> SocialDilemmaReport {
        let (r, s, t, p) = (self.reward_cc, self.sucker, self.temptation, self.punishment);
        let coop_beats_defection = r > p;
        let coop_beats_exploitation = r > s;
        let coop_beats_alternation = r > (t + s) / 2.0;
        let defection_pressure = t > r || p > s;
        SocialDilemmaReport {
            coop_beats_defection,
            coop_beats_exploitation,
            coop_beats_alternation,
            defection_pressure,
            is_dilemma: coop_beats_defection
                && coop_beats_exploitation
                && coop_beats_alternation
                && defection_pressure,
        }
    }
}

/// N-player cooperate/defect game defined by its four corner payoffs, with
/// intermediate outcomes linearly interpolated in the number of cooperators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiPlayerGame {
    pub n_players: usize,
    pub all_coop: f64,
    pub all_defect: f64,
    pub sole_defector: f64,
    pub sole_cooperator: f64,
}

impl MultiPlayerGame {
    pub fn new(
        n_players: usize,
        all_coop: f64,
        all_defect: f64,
        sole_defector: f64,
        sole_cooperator: f64,
    ) -> Result<Self> {
        if n_players < 2 {
            return Err(Error::Config(format!(
                "multi-player game needs at least 2 players, got {n_players}"
            )));
        }
        for (name, v) in [
            ("all_coop", all_coop),
            ("all_defect", all_defect),
            ("sole_defector", sole_defector),
            ("sole_cooperator", sole_cooperator),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("payoff {name} must be finite, got {v}")));
            }
        }
        Ok(MultiPlayerGame { n_players, all_coop, all_defect, sole_defector, sole_cooperator })
    }

    /// Payoff for one player given their own action and the total number of
    /// cooperators k among all players.
    pub fn payoff(&self, own: Action, cooperators: usize) -> f64 {
        let n = self.n_players as f64;
        let k = cooperators as f64;
        // Cooperators interpolate from sole_cooperator (k=1) to all_coop
        // (k=N); defectors from all_defect (k=0) to sole_defector (k=N-1).
        if own.cooperates() {
            self.sole_cooperator + (self.all_coop - self.sole_cooperator) * (k - 1.0) / (n - 1.0)
        } else {
            self.all_defect + (self.sole_defector - self.all_defect) * k / (n - 1.0)
        }
    }
}

/// A social dilemma instance of either arity.
#[derive(Clone, Debug, PartialEq)]
pub enum Game {
    Matrix(PayoffMatrix),
    Group(MultiPlayerGame),
}

impl Game {
    pub fn n_players(&self) -> usize {
        match self {
            Game::Matrix(_) => 2,
            Game::Group(g) => g.n_players,
        }
    }

    pub fn matrix(&self) -> Option<&PayoffMatrix> {
        match self {
            Game::Matrix(m) => Some(m),
            Game::Group(_) => None,
        }
    }

    /// Base payoffs for every player under a full action profile.
    pub fn rewards(&self, profile: &[Action]) -> Result<Vec<f64>> {
        if profile.len() != self.n_players() {
            return Err(Error::Dimension(format!(
                "profile has {} actions but the game has {} players",
                profile.len(),
                self.n_players()
            )));
        }
        match self {
            Game::Matrix(m) => Ok(m.payoff(profile[0], profile[1]).to_vec()),
            Game::Group(g) => {
                let k = profile.iter().filter(|a| a.cooperates()).count();
                Ok(profile.iter().map(|&a| g.payoff(a, k)).collect())
            }
        }
    }
}

/// Greed and fear of the game as the row player experiences it once the
/// planner's outcome-conditional extras are added on top of the base matrix.
/// `extra` maps each (row, column) outcome to per-player extra rewards.
pub fn modified_greed_fear(
    base: &PayoffMatrix,
    extra: &BTreeMap<(Action, Action), [f64; 2]>,
) -> Result<GreedFear> {
    let get = |o: (Action, Action)| {
        extra.get(&o).copied().ok_or_else(|| {
            Error::Dimension(format!("extra reward table misses outcome {o:?}"))
        })
    };
    let r = base.reward_cc + get((C, C))?[0];
    let s = base.sucker + get((C, D))?[0];
    let t = base.temptation + get((D, C))?[0];
    let p = base.punishment + get((D, D))?[0];
    Ok(GreedFear { greed: t - r, fear: p - s })
}

/// Named experiment games. The three 2-player presets share R=3, P=1 and
/// differ only in greed and fear; `pd_n` is the interpolated group dilemma.
pub fn preset(name: &str, players: usize) -> Result<Game> {
    match name {
        "pd" => Ok(Game::Matrix(PayoffMatrix::from_greed_fear(1.0, 1.0, 3.0, 1.0)?)),
        "chicken" => Ok(Game::Matrix(PayoffMatrix::from_greed_fear(0.5, -1.0, 3.0, 1.0)?)),
        "stag_hunt" => Ok(Game::Matrix(PayoffMatrix::from_greed_fear(-1.0, 1.0, 3.0, 1.0)?)),
        "pd_n" => Ok(Game::Group(MultiPlayerGame::new(players, 3.0, 1.0, 4.0, 0.0)?)),
        other => Err(Error::Config(format!("unknown game preset `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pd() -> PayoffMatrix {
        PayoffMatrix::new(3.0, 0.0, 4.0, 1.0).unwrap()
    }

    #[test]
    fn presets_match_published_payoffs() {
        let pd = preset("pd", 2).unwrap();
        let m = pd.matrix().unwrap();
        assert_eq!((m.reward_cc, m.sucker, m.temptation, m.punishment), (3.0, 0.0, 4.0, 1.0));

        let chicken = preset("chicken", 2).unwrap();
        let m = chicken.matrix().unwrap();
        assert_eq!((m.reward_cc, m.sucker, m.temptation, m.punishment), (3.0, 2.0, 3.5, 1.0));

        let sh = preset("stag_hunt", 2).unwrap();
        let m = sh.matrix().unwrap();
        assert_eq!((m.reward_cc, m.sucker, m.temptation, m.punishment), (3.0, 0.0, 2.0, 1.0));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(preset("snowdrift", 2).is_err());
    }

    #[test]
    fn payoff_covers_all_outcomes() {
        let m = pd();
        assert_eq!(m.payoff(C, C), [3.0, 3.0]);
        assert_eq!(m.payoff(C, D), [0.0, 4.0]);
        assert_eq!(m.payoff(D, C), [4.0, 0.0]);
        assert_eq!(m.payoff(D, D), [1.0, 1.0]);
    }

    #[test]
    fn greed_fear_roundtrip_on_presets() {
        for name in ["pd", "chicken", "stag_hunt"] {
            let g = preset(name, 2).unwrap();
            let m = g.matrix().unwrap();
            let gf = m.greed_fear();
            let rebuilt =
                PayoffMatrix::from_greed_fear(gf.greed, gf.fear, m.reward_cc, m.punishment)
                    .unwrap();
            assert_eq!(*m, rebuilt);
        }
    }

    #[test]
    fn presets_are_dilemmas() {
        for name in ["pd", "chicken", "stag_hunt"] {
            let g = preset(name, 2).unwrap();
            assert!(g.matrix().unwrap().classify().is_dilemma, "{name} should classify");
        }
    }

    #[test]
    fn alternation_violation_is_not_a_dilemma() {
        // T + S = 7 > 2R = 6: alternating exploitation beats mutual
        // cooperation, so this fails the third condition.
        let m = PayoffMatrix::new(3.0, 2.0, 5.0, 1.0).unwrap();
        let report = m.classify();
        assert!(!report.is_dilemma);
        assert!(!report.coop_beats_alternation);
        assert!(report.coop_beats_defection);
        assert!(report.coop_beats_exploitation);
        assert!(report.defection_pressure);
    }

    #[test]
    fn fully_harmonious_game_has_no_defection_pressure() {
        // T < R and P < S: defection never pays, nothing to fear.
        let m = PayoffMatrix::new(3.0, 2.0, 2.5, 1.0).unwrap();
        let report = m.classify();
        assert!(!report.is_dilemma);
        assert!(!report.defection_pressure);
    }

    #[test]
    fn borderline_equalities_do_not_classify() {
        // R == P violates the first strict inequality.
        let m = PayoffMatrix::new(3.0, 0.0, 4.0, 3.0).unwrap();
        assert!(!m.classify().is_dilemma);
        assert!(!m.classify().coop_beats_defection);
    }

    #[test]
    fn non_finite_payoffs_are_rejected() {
        assert!(PayoffMatrix::new(f64::NAN, 0.0, 4.0, 1.0).is_err());
        assert!(PayoffMatrix::new(3.0, f64::INFINITY, 4.0, 1.0).is_err());
        assert!(PayoffMatrix::from_greed_fear(f64::NAN, 1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn group_game_anchor_payoffs() {
        let g = MultiPlayerGame::new(10, 3.0, 1.0, 4.0, 0.0).unwrap();
        assert_eq!(g.payoff(C, 10), 3.0);
        assert_eq!(g.payoff(D, 0), 1.0);
        assert_eq!(g.payoff(D, 9), 4.0);
        assert_eq!(g.payoff(C, 1), 0.0);
    }

    #[test]
    fn group_game_interpolates_between_anchors() {
        // N=10, k=5: cooperators get 0 + 3*(4/9), defectors 1 + 3*(5/9).
        let g = MultiPlayerGame::new(10, 3.0, 1.0, 4.0, 0.0).unwrap();
        assert!((g.payoff(C, 5) - 4.0 / 3.0).abs() < 1e-12);
        assert!((g.payoff(D, 5) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_player_group_game_equals_pd_matrix() {
        let g = Game::Group(MultiPlayerGame::new(2, 3.0, 1.0, 4.0, 0.0).unwrap());
        let m = Game::Matrix(pd());
        for profile in [[C, C], [C, D], [D, C], [D, D]] {
            assert_eq!(g.rewards(&profile).unwrap(), m.rewards(&profile).unwrap());
        }
    }

    #[test]
    fn group_game_rejects_small_n_and_bad_profiles() {
        assert!(MultiPlayerGame::new(1, 3.0, 1.0, 4.0, 0.0).is_err());
        let g = Game::Group(MultiPlayerGame::new(3, 3.0, 1.0, 4.0, 0.0).unwrap());
        assert!(g.rewards(&[C, D]).is_err());
        let m = Game::Matrix(pd());
        assert!(m.rewards(&[C, D, D]).is_err());
    }

    #[test]
    fn modified_greed_fear_matches_hand_computation() {
        let m = pd();
        let mut extra = BTreeMap::new();
        extra.insert((C, C), [2.0, 2.0]);
        extra.insert((C, D), [0.0, 0.0]);
        extra.insert((D, C), [-1.0, 0.0]);
        extra.insert((D, D), [0.0, 0.0]);
        // T' = 3, R' = 5, S' = 0, P' = 1: greed -2, fear 1.
        let gf = modified_greed_fear(&m, &extra).unwrap();
        assert!((gf.greed - -2.0).abs() < 1e-12);
        assert!((gf.fear - 1.0).abs() < 1e-12);

        extra.remove(&(D, D));
        assert!(modified_greed_fear(&m, &extra).is_err());
    }

    #[test]
    fn zero_extras_leave_greed_fear_unchanged() {
        let m = pd();
        let mut extra = BTreeMap::new();
        for o in [(C, C), (C, D), (D, C), (D, D)] {
            extra.insert(o, [0.0, 0.0]);
        }
        let gf = modified_greed_fear(&m, &extra).unwrap();
        assert_eq!(gf, m.greed_fear());
    }

    proptest! {
        #[test]
        fn from_greed_fear_roundtrips(greed in -3.0f64..3.0, fear in -3.0f64..3.0) {
            let m = PayoffMatrix::from_greed_fear(greed, fear, 3.0, 1.0).unwrap();
            let gf = m.greed_fear();
            prop_assert!((gf.greed - greed).abs() < 1e-12);
            prop_assert!((gf.fear - fear).abs() < 1e-12);
        }

        #[test]
        fn matrix_payoffs_are_symmetric(
            r in -5.0f64..5.0, s in -5.0f64..5.0, t in -5.0f64..5.0, p in -5.0f64..5.0,
        ) {
            let m = PayoffMatrix::new(r, s, t, p).unwrap();
            for (a, b) in [(C, C), (C, D), (D, C), (D, D)] {
                let fwd = m.payoff(a, b);
                let rev = m.payoff(b, a);
                prop_assert_eq!(fwd[0], rev[1]);
                prop_assert_eq!(fwd[1], rev[0]);
            }
        }

        #[test]
        fn group_payoff_is_monotone_in_cooperators(n in 2usize..12, k in 0usize..12) {
            // More cooperators never hurt anyone in the pd_n preset.
            let g = MultiPlayerGame::new(n, 3.0, 1.0, 4.0, 0.0).unwrap();
            let k = k.min(n - 1);
            prop_assert!(g.payoff(C, k + 1) >= g.payoff(C, k.max(1)));
            if k + 1 <= n - 1 {
                prop_assert!(g.payoff(D, k + 1) >= g.payoff(D, k));
            }
        }
    }
}
