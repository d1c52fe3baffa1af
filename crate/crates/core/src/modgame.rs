//! Modular arithmetic games.
//!
//! `n` agents each pick an integer in `[0, m)`; the outcome is the sum
//! mod `m`. The useful facts, all checkable here with exact arithmetic:
//!
//! * convolving any profile with one uniform strategy yields the uniform
//!   outcome distribution (one honest randomizer hides everyone else);
//! * any profile with at least two uniform strategies is a Nash
//!   equilibrium, whatever the utilities, because each agent faces a
//!   uniform sum of the others and is indifferent over plays.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rat;
use crate::verdict::Verdict;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModGameError {
    #[error("modulus must be at least 1")]
    ZeroModulus,
    #[error("agent {agent}: play {play} out of range [0, {modulus})")]
    PlayOutOfRange { agent: usize, play: u64, modulus: u64 },
    #[error("empty profile")]
    EmptyProfile,
    #[error("agent {agent}: strategy is over modulus {got}, game expects {expected}")]
    ModulusMismatch { agent: usize, got: u64, expected: u64 },
    #[error("profile has {got} strategies, game has {expected} agents")]
    WrongAgentCount { got: usize, expected: usize },
    #[error("agent index {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("utility table must be {n_agents} x {modulus}")]
    BadUtilityShape { n_agents: usize, modulus: u64 },
}

/// A mixed strategy over `[0, m)`, stored densely. Probabilities are exact
/// rationals that are checked to be nonnegative and sum to one. Serializes
/// as the bare probability array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rat>", into = "Vec<Rat>")]
pub struct MixedStrategy {
    probs: Vec<Rat>,
}

impl TryFrom<Vec<Rat>> for MixedStrategy {
    type Error = ModGameError;

    fn try_from(probs: Vec<Rat>) -> Result<Self, ModGameError> {
        MixedStrategy::from_probs(probs)
    }
}

impl From<MixedStrategy> for Vec<Rat> {
    fn from(s: MixedStrategy) -> Vec<Rat> {
        s.probs
    }
}

impl MixedStrategy {
    pub fn from_probs(probs: Vec<Rat>) -> Result<Self, ModGameError> {
        if probs.is_empty() {
            return Err(ModGameError::ZeroModulus);
        }
        if let Some(p) = probs.iter().find(|p| p.is_negative()) {
            return Err(ModGameError::BadDistribution(format!("negative probability {p}")));
        }
        let total: Rat = probs.iter().sum();
        if total != Rat::one() {
            return Err(ModGameError::BadDistribution(format!(
                "probabilities sum to {total}, expected 1/1"
            )));
        }
        Ok(MixedStrategy { probs })
    }

    /// Strategy from `(outcome, probability)` pairs; unlisted outcomes get
    /// probability zero.
    pub fn from_pairs(pairs: &[(u64, Rat)], modulus: u64) -> Result<Self, ModGameError> {
        if modulus == 0 {
            return Err(ModGameError::ZeroModulus);
        }
        let mut probs = vec![Rat::zero(); modulus as usize];
        for (v, p) in pairs {
            if *v >= modulus {
                return Err(ModGameError::BadDistribution(format!(
                    "support value {v} out of range [0, {modulus})"
                )));
            }
            probs[*v as usize] += p;
        }
        Self::from_probs(probs)
    }

    pub fn uniform(modulus: u64) -> Self {
        assert!(modulus > 0, "uniform strategy needs a positive modulus");
        let p = Rat::new(1, modulus as i64);
        MixedStrategy { probs: vec![p; modulus as usize] }
    }

    pub fn point(value: u64, modulus: u64) -> Result<Self, ModGameError> {
        if modulus == 0 {
            return Err(ModGameError::ZeroModulus);
        }
        if value >= modulus {
            return Err(ModGameError::PlayOutOfRange { agent: 0, play: value, modulus });
        }
        let mut probs = vec![Rat::zero(); modulus as usize];
        probs[value as usize] = Rat::one();
        Ok(MixedStrategy { probs })
    }

    pub fn modulus(&self) -> u64 {
        self.probs.len() as u64
    }

    pub fn probs(&self) -> &[Rat] {
        &self.probs
    }

    pub fn prob(&self, outcome: u64) -> &Rat {
        &self.probs[outcome as usize]
    }

    pub fn is_uniform(&self) -> bool {
        let p = Rat::new(1, self.probs.len() as i64);
        self.probs.iter().all(|q| *q == p)
    }

    /// The single outcome this strategy always plays, if it is a point mass.
    pub fn point_mass(&self) -> Option<u64> {
        self.probs.iter().position(|p| *p == Rat::one()).map(|i| i as u64)
    }

    /// Support as the list of outcomes with positive probability.
    pub fn support(&self) -> Vec<u64> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_positive())
            .map(|(i, _)| i as u64)
            .collect()
    }
}

/// A finite game on outcomes `[0, modulus)`: each agent's payoff depends only
/// on the final sum, through a per-agent utility row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModGame {
    pub n_agents: usize,
    pub modulus: u64,
    /// `utilities[agent][outcome]`.
    pub utilities: Vec<Vec<Rat>>,
}

impl ModGame {
    pub fn new(n_agents: usize, modulus: u64, utilities: Vec<Vec<Rat>>) -> Result<Self, ModGameError> {
        if modulus == 0 {
            return Err(ModGameError::ZeroModulus);
        }
        if utilities.len() != n_agents || utilities.iter().any(|row| row.len() != modulus as usize) {
            return Err(ModGameError::BadUtilityShape { n_agents, modulus });
        }
        Ok(ModGame { n_agents, modulus, utilities })
    }

    /// Win/loss utilities: agent `i` gets 1 exactly on `preferred[i]`.
    pub fn from_preferred(modulus: u64, preferred: &[u64]) -> Result<Self, ModGameError> {
        let mut utilities = Vec::with_capacity(preferred.len());
        for (agent, &want) in preferred.iter().enumerate() {
            if want >= modulus {
                return Err(ModGameError::PlayOutOfRange { agent, play: want, modulus });
            }
            let mut row = vec![Rat::zero(); modulus as usize];
            row[want as usize] = Rat::one();
            utilities.push(row);
        }
        ModGame::new(preferred.len(), modulus, utilities)
    }

    /// The two-player parity game: even agent wants outcome 0, odd wants 1.
    pub fn parity() -> Self {
        ModGame::from_preferred(2, &[0, 1]).expect("static shape")
    }
}

/// Sum of pure plays mod `modulus`.
pub fn outcome_sum(plays: &[u64], modulus: u64) -> Result<u64, ModGameError> {
    if modulus == 0 {
        return Err(ModGameError::ZeroModulus);
    }
    let mut total: u64 = 0;
    for (agent, &play) in plays.iter().enumerate() {
        if play >= modulus {
            return Err(ModGameError::PlayOutOfRange { agent, play, modulus });
        }
        total = (total + play) % modulus;
    }
    Ok(total)
}

fn check_profile(profile: &[MixedStrategy], modulus: u64) -> Result<(), ModGameError> {
    if modulus == 0 {
        return Err(ModGameError::ZeroModulus);
    }
    if profile.is_empty() {
        return Err(ModGameError::EmptyProfile);
    }
    for (agent, s) in profile.iter().enumerate() {
        if s.modulus() != modulus {
            return Err(ModGameError::ModulusMismatch { agent, got: s.modulus(), expected: modulus });
        }
    }
    Ok(())
}

/// Exact distribution of the sum mod `modulus` under independent mixing.
pub fn outcome_distribution(
    profile: &[MixedStrategy],
    modulus: u64,
) -> Result<MixedStrategy, ModGameError> {
    check_profile(profile, modulus)?;
    let m = modulus as usize;
    let mut acc = vec![Rat::zero(); m];
    acc[0] = Rat::one();
    for s in profile {
        let mut next = vec![Rat::zero(); m];
        for (j, pj) in acc.iter().enumerate() {
            if pj.is_zero() {
                continue;
            }
            for (v, pv) in s.probs().iter().enumerate() {
                if pv.is_zero() {
                    continue;
                }
                next[(j + v) % m] += pj * pv;
            }
        }
        acc = next;
    }
    MixedStrategy::from_probs(acc)
}

/// Distribution of the sum of everyone *except* `agent`.
fn others_distribution(
    profile: &[MixedStrategy],
    modulus: u64,
    agent: usize,
) -> Result<Vec<Rat>, ModGameError> {
    let m = modulus as usize;
    let mut acc = vec![Rat::zero(); m];
    acc[0] = Rat::one();
    for (i, s) in profile.iter().enumerate() {
        if i == agent {
            continue;
        }
        let mut next = vec![Rat::zero(); m];
        for (j, pj) in acc.iter().enumerate() {
            if pj.is_zero() {
                continue;
            }
            for (v, pv) in s.probs().iter().enumerate() {
                if pv.is_zero() {
                    continue;
                }
                next[(j + v) % m] += pj * pv;
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Expected utility of `agent` under the profile.
pub fn expected_utility(
    game: &ModGame,
    profile: &[MixedStrategy],
    agent: usize,
) -> Result<Rat, ModGameError> {
    check_profile(profile, game.modulus)?;
    if profile.len() != game.n_agents {
        return Err(ModGameError::WrongAgentCount { got: profile.len(), expected: game.n_agents });
    }
    if agent >= game.n_agents {
        return Err(ModGameError::AgentOutOfRange { agent, n_agents: game.n_agents });
    }
    let dist = outcome_distribution(profile, game.modulus)?;
    Ok(dist
        .probs()
        .iter()
        .zip(&game.utilities[agent])
        .map(|(p, u)| p * u)
        .sum())
}

/// Witness that a profile is not a Nash equilibrium: a pure play that gives
/// `agent` strictly more than their current expected utility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NashWitness {
    pub agent: usize,
    pub play: u64,
    pub gain: Rat,
}

/// Check the profile for Nash equilibrium by exhausting pure deviations.
/// In a finite game a profitable mixed deviation exists only if a profitable
/// pure one does, so this check is exact.
pub fn verify_nash(
    game: &ModGame,
    profile: &[MixedStrategy],
) -> Result<Verdict<NashWitness>, ModGameError> {
    check_profile(profile, game.modulus)?;
    if profile.len() != game.n_agents {
        return Err(ModGameError::WrongAgentCount { got: profile.len(), expected: game.n_agents });
    }
    let m = game.modulus as usize;
    for agent in 0..game.n_agents {
        let others = others_distribution(profile, game.modulus, agent)?;
        // Expected utility of playing pure x against the others.
        let pure_value = |x: usize| -> Rat {
            (0..m)
                .map(|j| &others[j] * &game.utilities[agent][(x + j) % m])
                .sum()
        };
        let current: Rat = (0..m)
            .filter(|&x| !profile[agent].probs()[x].is_zero())
            .map(|x| &profile[agent].probs()[x] * &pure_value(x))
            .sum();
        for x in 0..m {
            let v = pure_value(x);
            if v > current {
                return Ok(Verdict::fail(NashWitness {
                    agent,
                    play: x as u64,
                    gain: v - current,
                }));
            }
        }
    }
    Ok(Verdict::ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    /// Two pairs of agents in a 4-outcome game: one pair mixes {0,1}, the
    /// other mixes {0,2}, all fifty-fifty. Any three of the four sum to
    /// uniform, so everyone is indifferent.
    fn crossed_pairs_profile() -> Vec<MixedStrategy> {
        let half01 = MixedStrategy::from_pairs(&[(0, r(1, 2)), (1, r(1, 2))], 4).unwrap();
        let half02 = MixedStrategy::from_pairs(&[(0, r(1, 2)), (2, r(1, 2))], 4).unwrap();
        vec![half01.clone(), half01, half02.clone(), half02]
    }

    #[test]
    fn outcome_sum_examples() {
        assert_eq!(outcome_sum(&[1, 1], 2).unwrap(), 0);
        assert_eq!(outcome_sum(&[3, 2, 3], 4).unwrap(), 0);
        assert_eq!(
            outcome_sum(&[2, 3], 2),
            Err(ModGameError::PlayOutOfRange { agent: 0, play: 2, modulus: 2 })
        );
    }

    #[test]
    fn one_uniform_strategy_makes_the_outcome_uniform() {
        let profile = vec![MixedStrategy::uniform(2), MixedStrategy::point(1, 2).unwrap()];
        assert_eq!(outcome_distribution(&profile, 2).unwrap(), MixedStrategy::uniform(2));
    }

    #[test]
    fn crossed_pairs_sum_to_uniform() {
        let dist = outcome_distribution(&crossed_pairs_profile(), 4).unwrap();
        assert_eq!(dist, MixedStrategy::uniform(4));
    }

    #[test]
    fn outcome_distribution_rejects_empty_profiles() {
        assert_eq!(outcome_distribution(&[], 3), Err(ModGameError::EmptyProfile));
    }

    #[test]
    fn parity_expected_utility() {
        let game = ModGame::parity();
        // Even mixes fifty-fifty, odd plays 0: odd's win chance is 1/2.
        let profile = vec![MixedStrategy::uniform(2), MixedStrategy::point(0, 2).unwrap()];
        assert_eq!(expected_utility(&game, &profile, 1).unwrap(), r(1, 2));
        // Even plays 1 with probability 1/4, odd plays pure 1: outcome is 1
        // unless even also plays 1.
        let profile = vec![
            MixedStrategy::from_pairs(&[(0, r(3, 4)), (1, r(1, 4))], 2).unwrap(),
            MixedStrategy::point(1, 2).unwrap(),
        ];
        assert_eq!(expected_utility(&game, &profile, 1).unwrap(), r(3, 4));
    }

    #[test]
    fn both_uniform_is_nash_in_parity() {
        let game = ModGame::parity();
        let profile = vec![MixedStrategy::uniform(2), MixedStrategy::uniform(2)];
        assert!(verify_nash(&game, &profile).unwrap().pass);
    }

    #[test]
    fn every_pure_parity_profile_fails_nash() {
        let game = ModGame::parity();
        for a in 0..2u64 {
            for b in 0..2u64 {
                let profile =
                    vec![MixedStrategy::point(a, 2).unwrap(), MixedStrategy::point(b, 2).unwrap()];
                let verdict = verify_nash(&game, &profile).unwrap();
                assert!(!verdict.pass, "pure profile ({a},{b}) cannot be an equilibrium");
                let w = verdict.witness().unwrap();
                assert!(w.gain.is_positive());
            }
        }
    }

    #[test]
    fn crossed_pairs_profile_is_nash_for_any_preferences() {
        let game = ModGame::from_preferred(4, &[0, 1, 2, 3]).unwrap();
        assert!(verify_nash(&game, &crossed_pairs_profile()).unwrap().pass);
    }

    /// Sweep both parity players over the mixing grid p in {0, 1/8, ..., 1}:
    /// the profile is an equilibrium exactly when both mix fifty-fifty.
    #[test]
    fn parity_equilibrium_is_unique_on_the_grid() {
        let game = ModGame::parity();
        let grid: Vec<Rat> = (0..=8).map(|i| r(i, 8)).collect();
        for p in &grid {
            for q in &grid {
                let profile = vec![
                    MixedStrategy::from_probs(vec![Rat::one() - p, p.clone()]).unwrap(),
                    MixedStrategy::from_probs(vec![Rat::one() - q, q.clone()]).unwrap(),
                ];
                let pass = verify_nash(&game, &profile).unwrap().pass;
                let both_half = *p == r(1, 2) && *q == r(1, 2);
                assert_eq!(pass, both_half, "p={p} q={q}");
            }
        }
    }

    #[test]
    fn strategy_validation() {
        assert!(MixedStrategy::from_probs(vec![r(1, 2), r(1, 2)]).is_ok());
        assert!(MixedStrategy::from_probs(vec![r(1, 2), r(1, 4)]).is_err());
        assert!(MixedStrategy::from_probs(vec![r(3, 2), r(-1, 2)]).is_err());
        assert!(MixedStrategy::from_pairs(&[(5, Rat::one())], 4).is_err());
        let s = MixedStrategy::from_pairs(&[(1, r(1, 2)), (3, r(1, 2))], 4).unwrap();
        assert_eq!(s.support(), vec![1, 3]);
        assert!(!s.is_uniform());
        assert!(MixedStrategy::uniform(4).is_uniform());
    }

    #[test]
    fn mismatched_modulus_is_reported_with_the_agent() {
        let profile = vec![MixedStrategy::uniform(2), MixedStrategy::uniform(3)];
        assert_eq!(
            outcome_distribution(&profile, 2),
            Err(ModGameError::ModulusMismatch { agent: 1, got: 3, expected: 2 })
        );
    }
}
