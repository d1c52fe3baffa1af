//! Monte Carlo execution of modular games with reproducible seeding.
//!
//! Reproducibility contract: trial `t` of a run with master seed `s` uses the
//! 64-bit seed [`trial_seed`]`(s, t)`, the `t`-th output of a splitmix64
//! stream positioned at `s`. Each trial seeds its own ChaCha8 generator and
//! samples one move per agent, in agent order. Because the per-trial seed
//! depends only on `(s, t)`, tallies are identical no matter how trials are
//! distributed over workers.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modgame::{outcome_distribution, MixedStrategy, ModGameError};
use crate::rational::Rat;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("agent {agent}: fixed move {value} out of range, must be below {modulus}")]
    BadFixedMove { agent: usize, value: u64, modulus: u64 },
    #[error("agent {agent}: distribution too fine to sample, common denominator over 128 bits")]
    DistributionTooFine { agent: usize },
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error(transparent)]
    Game(#[from] ModGameError),
}

/// How an agent chooses their move in the embedded game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    /// Uniform over the whole range, the equilibrium play.
    Uniform,
    /// Always the same move.
    Fixed(u64),
    /// An arbitrary exact distribution.
    Custom(MixedStrategy),
}

/// What an agent reports to the surrounding mechanism. The game move is
/// re-drawn per trial; the report is constant across trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportPolicy {
    /// Use the report recorded in the instance.
    #[default]
    Sincere,
    /// Replace the instance's report with this domain-specific value.
    Fixed(serde_json::Value),
}

/// Per-agent simulation policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub kind: MoveKind,
    #[serde(default, skip_serializing_if = "is_sincere")]
    pub report: ReportPolicy,
}

fn is_sincere(r: &ReportPolicy) -> bool {
    *r == ReportPolicy::Sincere
}

impl AgentPolicy {
    pub fn uniform() -> Self {
        AgentPolicy { kind: MoveKind::Uniform, report: ReportPolicy::Sincere }
    }

    pub fn fixed(value: u64) -> Self {
        AgentPolicy { kind: MoveKind::Fixed(value), report: ReportPolicy::Sincere }
    }

    /// The exact distribution this policy plays.
    pub fn strategy(&self, modulus: u64, agent: usize) -> Result<MixedStrategy, SimError> {
        if modulus == 0 {
            return Err(ModGameError::ZeroModulus.into());
        }
        match &self.kind {
            MoveKind::Uniform => Ok(MixedStrategy::uniform(modulus)),
            MoveKind::Fixed(value) => {
                if *value >= modulus {
                    return Err(SimError::BadFixedMove { agent, value: *value, modulus });
                }
                Ok(MixedStrategy::point(*value, modulus)?)
            }
            MoveKind::Custom(s) => {
                if s.modulus() != modulus {
                    return Err(ModGameError::ModulusMismatch {
                        agent,
                        got: s.modulus(),
                        expected: modulus,
                    }
                    .into());
                }
                Ok(s.clone())
            }
        }
    }
}

/// splitmix64 output mix.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed: the `trial`-th output of a splitmix64
/// stream whose state starts at `master_seed`. This function is part of the
/// reproducibility contract; reports quote the master seed, and any
/// implementation of the same split reproduces the same trials.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    mix(master_seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Draw one move from an exact distribution by inverse CDF over a common
/// denominator.
pub(crate) fn sample_move(
    strategy: &MixedStrategy,
    rng: &mut ChaCha8Rng,
    agent: usize,
) -> Result<u64, SimError> {
    if strategy.is_uniform() {
        return Ok(rng.random_range(0..strategy.modulus()));
    }
    if let Some(v) = strategy.point_mass() {
        return Ok(v);
    }
    let mut denom_big = BigInt::one();
    for p in strategy.probs() {
        denom_big = denom_big.lcm(p.denom());
    }
    let denom = denom_big.to_u128().ok_or(SimError::DistributionTooFine { agent })?;
    let draw = rng.random_range(0..denom);
    let mut acc: u128 = 0;
    for (value, p) in strategy.probs().iter().enumerate() {
        let weight = p.numer() * (&denom_big / p.denom());
        acc += weight.to_u128().ok_or(SimError::DistributionTooFine { agent })?;
        if draw < acc {
            return Ok(value as u64);
        }
    }
    unreachable!("weights sum to the common denominator");
}

/// Tally of a Monte Carlo run. Outcome keys are decimal strings so the
/// serialized report has a deterministic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: u64,
    pub outcome_frequencies: BTreeMap<String, u64>,
    /// Exact total variation distance between the empirical frequencies and
    /// the policies' exact outcome distribution.
    pub empirical_tv: Rat,
    pub master_seed: u64,
}

/// Half the L1 distance between two distributions; entries missing from the
/// shorter vector count as zero.
pub fn tv_distance(d1: &[Rat], d2: &[Rat]) -> Rat {
    let len = d1.len().max(d2.len());
    let zero = Rat::zero();
    let mut total = Rat::zero();
    for i in 0..len {
        let a = d1.get(i).unwrap_or(&zero);
        let b = d2.get(i).unwrap_or(&zero);
        total += (a - b).abs();
    }
    total / Rat::from_int(2)
}

fn tally_trials(
    modulus: u64,
    strategies: &[MixedStrategy],
    trials: impl Iterator<Item = u64>,
    master_seed: u64,
) -> Result<BTreeMap<u64, u64>, SimError> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for trial in trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, trial));
        let mut sum: u128 = 0;
        for (agent, strategy) in strategies.iter().enumerate() {
            sum += sample_move(strategy, &mut rng, agent)? as u128;
        }
        *counts.entry((sum % modulus as u128) as u64).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Run `trials` independent plays of the modular game under the given
/// policies and tally the outcomes. Deterministic in `master_seed`.
pub fn run_game_trials(
    modulus: u64,
    policies: &[AgentPolicy],
    trials: u64,
    master_seed: u64,
) -> Result<TrialReport, SimError> {
    run_game_trials_sharded(modulus, policies, trials, master_seed, 1)
}

/// Same as [`run_game_trials`] but with the trial range dealt round-robin to
/// `workers` threads. The tallies are identical for every worker count.
pub fn run_game_trials_sharded(
    modulus: u64,
    policies: &[AgentPolicy],
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<TrialReport, SimError> {
    if workers == 0 {
        return Err(SimError::NoWorkers);
    }
    if policies.is_empty() {
        return Err(ModGameError::EmptyProfile.into());
    }
    let strategies: Vec<MixedStrategy> = policies
        .iter()
        .enumerate()
        .map(|(agent, p)| p.strategy(modulus, agent))
        .collect::<Result<_, _>>()?;

    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    if workers == 1 {
        counts = tally_trials(modulus, &strategies, 0..trials, master_seed)?;
    } else {
        let shards = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let strategies = &strategies;
                    scope.spawn(move || {
                        tally_trials(
                            modulus,
                            strategies,
                            (w as u64..trials).step_by(workers),
                            master_seed,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Vec<_>>()
        });
        for shard in shards {
            for (outcome, count) in shard? {
                *counts.entry(outcome).or_insert(0) += count;
            }
        }
    }

    let exact = outcome_distribution(&strategies, modulus)?;
    let empirical: Vec<Rat> = (0..modulus)
        .map(|o| Rat::new(*counts.get(&o).unwrap_or(&0) as i64, trials.max(1) as i64))
        .collect();
    let empirical_tv = tv_distance(&empirical, exact.probs());
    Ok(TrialReport {
        trials,
        outcome_frequencies: counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        empirical_tv,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn tv_examples() {
        let u = vec![r(1, 2), r(1, 2)];
        assert_eq!(tv_distance(&u, &u), Rat::zero());
        let p0 = vec![Rat::one(), Rat::zero()];
        let p1 = vec![Rat::zero(), Rat::one()];
        assert_eq!(tv_distance(&p0, &p1), Rat::one());
        assert_eq!(tv_distance(&[r(3, 4), r(1, 4)], &u), r(1, 4));
        // Mismatched lengths: missing outcomes have probability 0.
        assert_eq!(tv_distance(&p0, &[Rat::one()]), Rat::zero());
    }

    #[test]
    fn fixed_policies_are_deterministic() {
        let policies = vec![AgentPolicy::fixed(1), AgentPolicy::fixed(1)];
        let report = run_game_trials(2, &policies, 500, 9).unwrap();
        assert_eq!(report.outcome_frequencies.get("0"), Some(&500));
        assert_eq!(report.outcome_frequencies.len(), 1);
        assert_eq!(report.empirical_tv, Rat::zero());
    }

    #[test]
    fn reports_are_reproducible_and_shard_independent() {
        let policies = vec![AgentPolicy::uniform(), AgentPolicy::uniform()];
        let a = run_game_trials(2, &policies, 4000, 42).unwrap();
        let b = run_game_trials(2, &policies, 4000, 42).unwrap();
        assert_eq!(a, b);
        for workers in [2usize, 3, 7] {
            let c = run_game_trials_sharded(2, &policies, 4000, 42, workers).unwrap();
            assert_eq!(a, c, "workers = {workers}");
        }
        let different = run_game_trials(2, &policies, 4000, 43).unwrap();
        assert_ne!(a.outcome_frequencies, different.outcome_frequencies);
    }

    #[test]
    fn uniform_parity_play_is_close_to_uniform() {
        let policies = vec![AgentPolicy::uniform(), AgentPolicy::uniform()];
        let report = run_game_trials(2, &policies, 20_000, 7).unwrap();
        assert!(report.empirical_tv < r(1, 20), "tv = {}", report.empirical_tv);
    }

    #[test]
    fn custom_distributions_are_sampled_with_the_right_marginals() {
        let strategy = MixedStrategy::from_probs(vec![r(1, 3), Rat::zero(), r(2, 3)]).unwrap();
        let policies =
            vec![AgentPolicy { kind: MoveKind::Custom(strategy), report: ReportPolicy::Sincere }];
        let report = run_game_trials(3, &policies, 30_000, 11).unwrap();
        assert!(report.empirical_tv < r(1, 20), "tv = {}", report.empirical_tv);
        assert_eq!(report.outcome_frequencies.get("1"), None);
    }

    #[test]
    fn policy_validation() {
        assert_eq!(
            run_game_trials(2, &[AgentPolicy::fixed(2)], 10, 0),
            Err(SimError::BadFixedMove { agent: 0, value: 2, modulus: 2 })
        );
        assert_eq!(
            run_game_trials(2, &[], 10, 0),
            Err(SimError::Game(ModGameError::EmptyProfile))
        );
        assert_eq!(
            run_game_trials_sharded(2, &[AgentPolicy::uniform()], 10, 0, 0),
            Err(SimError::NoWorkers)
        );
    }

    #[test]
    fn trial_seeds_are_spread_out() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..10_000u64 {
            assert!(seen.insert(trial_seed(123, t)), "collision at trial {t}");
        }
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    fn policy_serde_shapes() {
        let p = AgentPolicy::uniform();
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"kind":"uniform"}"#);
        let p: AgentPolicy = serde_json::from_str(r#"{"kind":{"fixed":3}}"#).unwrap();
        assert_eq!(p.kind, MoveKind::Fixed(3));
        let p: AgentPolicy =
            serde_json::from_str(r#"{"kind":{"custom":["1/2","1/2"]},"report":{"fixed":[1,0]}}"#)
                .unwrap();
        assert!(matches!(p.kind, MoveKind::Custom(_)));
        assert!(matches!(p.report, ReportPolicy::Fixed(_)));
        assert!(serde_json::from_str::<AgentPolicy>(r#"{"kind":{"custom":["1/2","1/4"]}}"#)
            .is_err());
    }
}
