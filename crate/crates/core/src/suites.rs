//! Named verification suites behind the CLI `verify` subcommand.
//!
//! Each suite re-checks one family of mechanism properties on freshly
//! generated inputs. Suites are deterministic in the configured seed, so a
//! report is reproducible by rerunning with the same parameters.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{
    denominator_bound_check, derand_rp, pareto_efficient, probabilistic_serial, realize_assignment,
    reduced_modulus, rp_distribution_oracle, serial_dictatorship, AllocInstance, DrawMode,
};
use crate::facility::lrm_expected_ratio;
use crate::modgame::{outcome_distribution, verify_nash, MixedStrategy, ModGame};
use crate::peer::{
    check_impartial, check_responsive, spe_winner_linear, spe_winner_oracle, PeerMechanism,
    SearchPlan,
};
use crate::permute::{factorial, lehmer_decode};
use crate::rational::Rat;
use crate::sampling::{
    random_alloc_instance, random_peer_profile, random_permutation, random_profile_with_uniform,
    random_school_instance, random_task_instance, random_utilities, rng,
};
use crate::school::{derand_da, is_stable, SchoolBids};
use crate::sim::{run_game_trials, run_game_trials_sharded, AgentPolicy};
use crate::tasks::{agent_utility, biased_min_work, expected_makespan_uniform, optimal_makespan,
    TaskInstance};

/// Seed used when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 1729;

const MAX_REPORTED_FAILURES: usize = 8;

/// Knobs shared by all suites. `None` means the suite's stated default, which
/// is the strength the acceptance checks run at.
#[derive(Clone, Copy, Debug, Default)]
pub struct SuiteConfig {
    /// Cap on the instance size the suite sweeps (agents, or modulus for the
    /// convolution suite).
    pub n: Option<usize>,
    /// Sample count for the randomized part of the suite.
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

impl SuiteConfig {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn samples(&self, default: u64) -> u64 {
        self.samples.unwrap_or(default)
    }

    fn size(&self, default: usize) -> usize {
        self.n.unwrap_or(default)
    }
}

/// Outcome of one suite run. `failures` holds up to a handful of witness
/// descriptions; `checks` counts every individual assertion made.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub pass: bool,
    pub checks: u64,
    /// Seed the run used, so a report can be reproduced exactly.
    pub seed: u64,
    pub failures: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuiteError {
    #[error("unknown suite {name:?} (expected one of: {available})")]
    Unknown { name: String, available: String },
}

/// The suites `run_suite` knows, in recommended execution order.
pub fn suite_names() -> &'static [&'static str] {
    &[
        "uniform-convolution",
        "quasi-uniform-nash",
        "facility-ratio",
        "task-approximation",
        "elimination-equivalence",
        "selection-properties",
        "school-stability",
        "eating-denominators",
        "realization-marginals",
        "priority-equivalence",
        "trial-reproducibility",
    ]
}

/// Run one named suite. Unknown names are the only error; property failures
/// come back inside the report.
pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteReport, SuiteError> {
    match name {
        "uniform-convolution" => Ok(uniform_convolution(cfg)),
        "quasi-uniform-nash" => Ok(quasi_uniform_nash(cfg)),
        "facility-ratio" => Ok(facility_ratio(cfg)),
        "task-approximation" => Ok(task_approximation(cfg)),
        "elimination-equivalence" => Ok(elimination_equivalence(cfg)),
        "selection-properties" => Ok(selection_properties(cfg)),
        "school-stability" => Ok(school_stability(cfg)),
        "eating-denominators" => Ok(eating_denominators(cfg)),
        "realization-marginals" => Ok(realization_marginals(cfg)),
        "priority-equivalence" => Ok(priority_equivalence(cfg)),
        "trial-reproducibility" => Ok(trial_reproducibility(cfg)),
        _ => Err(SuiteError::Unknown {
            name: name.to_string(),
            available: suite_names().join(", "),
        }),
    }
}

struct Collector {
    suite: &'static str,
    seed: u64,
    checks: u64,
    failures: Vec<String>,
    dropped: u64,
}

impl Collector {
    fn new(suite: &'static str, seed: u64) -> Self {
        Collector { suite, seed, checks: 0, failures: Vec::new(), dropped: 0 }
    }

    fn check<F: FnOnce() -> String>(&mut self, ok: bool, describe: F) {
        self.checks += 1;
        if !ok {
            if self.failures.len() < MAX_REPORTED_FAILURES {
                self.failures.push(describe());
            } else {
                self.dropped += 1;
            }
        }
    }

    fn finish(mut self) -> SuiteReport {
        let pass = self.failures.is_empty();
        if self.dropped > 0 {
            self.failures.push(format!("... and {} more failures", self.dropped));
        }
        SuiteReport {
            suite: self.suite.to_string(),
            pass,
            checks: self.checks,
            seed: self.seed,
            failures: self.failures,
        }
    }
}

/// Convolving any profile that contains at least one uniform strategy must
/// give the exactly uniform outcome distribution, for every modulus swept.
fn uniform_convolution(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("uniform-convolution", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(100);
    let max_modulus = cfg.size(12).max(2) as u64;
    for modulus in 2..=max_modulus {
        for _ in 0..samples {
            let n = rng.random_range(1..=5);
            let uniform_count = rng.random_range(1..=n);
            let profile = random_profile_with_uniform(&mut rng, n, modulus, uniform_count);
            let dist = outcome_distribution(&profile, modulus).expect("profile is valid");
            col.check(dist.is_uniform(), || {
                format!(
                    "modulus {modulus}, {n} agents, {uniform_count} uniform: outcome {:?}",
                    dist.probs()
                )
            });
        }
    }
    col.finish()
}

/// Profiles with at least two uniform agents are equilibria no matter the
/// utilities; pure profiles of the parity game never are.
fn quasi_uniform_nash(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("quasi-uniform-nash", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(100);
    for _ in 0..samples {
        let n = rng.random_range(2..=4);
        let modulus = rng.random_range(2..=8);
        let profile = random_profile_with_uniform(&mut rng, n, modulus, 2);
        let game =
            ModGame::new(n, modulus, random_utilities(&mut rng, n, modulus)).expect("shape fits");
        let verdict = verify_nash(&game, &profile).expect("profile matches the game");
        col.check(verdict.pass, || {
            format!("quasi-uniform profile rejected: {:?}", verdict.witness())
        });
    }

    // Everyone wants a different outcome; two mix uniformly, the rest play
    // pure, and nobody can gain by deviating.
    let game = ModGame::from_preferred(4, &[0, 1, 2, 3]).expect("plays in range");
    let profile = vec![
        MixedStrategy::uniform(4),
        MixedStrategy::uniform(4),
        MixedStrategy::point(3, 4).expect("in range"),
        MixedStrategy::point(1, 4).expect("in range"),
    ];
    let verdict = verify_nash(&game, &profile).expect("profile matches the game");
    col.check(verdict.pass, || {
        format!("distinct-preference profile rejected: {:?}", verdict.witness())
    });

    let parity = ModGame::parity();
    for a in 0..2u64 {
        for b in 0..2u64 {
            let profile = vec![
                MixedStrategy::point(a, 2).expect("in range"),
                MixedStrategy::point(b, 2).expect("in range"),
            ];
            let verdict = verify_nash(&parity, &profile).expect("profile matches the game");
            col.check(!verdict.pass, || {
                format!("pure parity profile ({a}, {b}) accepted as equilibrium")
            });
        }
    }
    col.finish()
}

/// On every instance with at least two distinct positions, the uniform mix of
/// leftmost, midpoint (twice), and rightmost costs exactly 3/2 the optimum.
fn facility_ratio(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("facility-ratio", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(1000);
    let target = Rat::new(3, 2);
    let mut produced = 0u64;
    while produced < samples {
        let k = rng.random_range(2..=6);
        let positions: Vec<Rat> = (0..k)
            .map(|_| Rat::new(rng.random_range(-12..=12), rng.random_range(1..=4)))
            .collect();
        if positions.iter().min() == positions.iter().max() {
            continue;
        }
        produced += 1;
        let ratio = lrm_expected_ratio(&positions).expect("positions are nonempty");
        col.check(ratio == target, || {
            format!("positions {positions:?}: ratio {ratio} instead of 3/2")
        });
    }
    col.finish()
}

/// The biased assignment stays within 7/4 of the optimal makespan in
/// expectation, and no single misreport ever helps an agent for any fixed
/// favour bits.
fn task_approximation(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("task-approximation", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(200);
    let bound = Rat::new(7, 4);
    for _ in 0..samples {
        let m = rng.random_range(1..=8);
        let inst = random_task_instance(&mut rng, m);
        let expected = expected_makespan_uniform(&inst).expect("instance is valid");
        let optimal = optimal_makespan(&inst).expect("instance is valid");
        col.check(expected <= &bound * &optimal, || {
            format!(
                "instance {:?}: expected makespan {expected} exceeds 7/4 * {optimal}",
                inst.declared
            )
        });
    }

    let grid_instances = (samples / 4).max(1);
    for _ in 0..grid_instances {
        let m = rng.random_range(1..=4);
        let inst = random_task_instance(&mut rng, m);
        for mask in 0u32..(1u32 << m) {
            let bits: Vec<u8> = (0..m).map(|j| ((mask >> j) & 1) as u8).collect();
            let honest = biased_min_work(&inst, &bits).expect("instance is valid");
            for agent in 0..2usize {
                let honest_utility =
                    agent_utility(&honest, agent, &inst).expect("agent in range");
                for task in 0..m {
                    for lie in misreport_grid(&inst, agent, task) {
                        let mut declared = inst.declared.clone();
                        declared[agent][task] = lie.clone();
                        let lied = TaskInstance {
                            declared,
                            true_times: Some(inst.declared.clone()),
                        };
                        let outcome = biased_min_work(&lied, &bits).expect("lie is positive");
                        let lied_utility =
                            agent_utility(&outcome, agent, &lied).expect("agent in range");
                        col.check(lied_utility <= honest_utility, || {
                            format!(
                                "agent {agent} gains by declaring {lie} for task {task} \
                                 under bits {bits:?} in {:?}",
                                inst.declared
                            )
                        });
                    }
                }
            }
        }
    }
    col.finish()
}

/// Candidate misreports for one declared time: both payment thresholds the
/// mechanism compares against (exactly and within ten percent), plus plain
/// under- and over-statements.
fn misreport_grid(inst: &TaskInstance, agent: usize, task: usize) -> Vec<Rat> {
    let t_other = &inst.declared[1 - agent][task];
    let t_own = &inst.declared[agent][task];
    let mut lies = Vec::new();
    for scale in [Rat::new(9, 10), Rat::one(), Rat::new(11, 10)] {
        lies.push(&scale * &(&Rat::new(4, 3) * t_other));
        lies.push(&scale * &(&Rat::new(3, 4) * t_other));
    }
    lies.push(&Rat::new(1, 2) * t_own);
    lies.push(&Rat::from_int(2) * t_own);
    lies.retain(|lie| lie.is_positive() && lie != t_own);
    lies
}

/// The linear-time sincere elimination winner matches the backward-induction
/// oracle on every order of every sampled profile.
fn elimination_equivalence(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("elimination-equivalence", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(1000);
    let max_n = cfg.size(5).clamp(3, 7);
    for n in 3..=max_n {
        let count = factorial(n).expect("small n");
        let orders: Vec<_> =
            (0..count).map(|code| lehmer_decode(code, n).expect("code in range")).collect();
        for _ in 0..samples {
            let profile = random_peer_profile(&mut rng, n);
            for order in &orders {
                let linear = spe_winner_linear(order, &profile).expect("sizes agree");
                let oracle = spe_winner_oracle(order, &profile).expect("sizes agree");
                col.check(linear == oracle, || {
                    format!(
                        "order {:?} on {:?}: linear winner {linear}, oracle winner {oracle}",
                        order.as_slice(),
                        profile.rankings()
                    )
                });
            }
        }
    }
    col.finish()
}

/// The elimination mechanism is responsive but not impartial; the partition
/// mechanism is impartial but not responsive.
fn selection_properties(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("selection-properties", cfg.seed());
    let seed = cfg.seed();
    let profiles = cfg.samples(200) as u32;

    let sampled = SearchPlan::SampledProfiles { profiles, seed };
    let verdict = check_responsive(&PeerMechanism::DerandRse, 3, &sampled)
        .expect("plan fits the mechanism");
    col.check(verdict.pass, || {
        format!("elimination mechanism not responsive: {:?}", verdict.witness())
    });

    let verdict = check_responsive(&PeerMechanism::Partition, 4, &SearchPlan::Exhaustive)
        .expect("plan fits the mechanism");
    col.check(!verdict.pass, || {
        "partition mechanism reported responsive, but voters cannot move the winner".to_string()
    });

    let verdict = check_impartial(&PeerMechanism::Partition, 4, &SearchPlan::Exhaustive)
        .expect("plan fits the mechanism");
    col.check(verdict.pass, || {
        format!("partition mechanism not impartial: {:?}", verdict.witness())
    });

    let few = SearchPlan::SampledProfiles { profiles: profiles.min(50), seed };
    let verdict =
        check_impartial(&PeerMechanism::DerandRse, 3, &few).expect("plan fits the mechanism");
    col.check(!verdict.pass, || {
        "elimination mechanism reported impartial, but bids steer the order".to_string()
    });
    col.finish()
}

/// Every matching the derandomized deferred acceptance produces, under every
/// possible seed, is stable; transcripts replay byte for byte.
fn school_stability(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("school-stability", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(500);
    let max_students = cfg.size(4).clamp(1, 6);
    for i in 0..samples {
        let n_students = rng.random_range(1..=max_students);
        let n_schools = rng.random_range(1..=3);
        let inst = random_school_instance(&mut rng, n_students, n_schools);
        let count = factorial(n_students).expect("small n");
        for outcome in 0..count {
            let mut raw = vec![0u64; n_students];
            raw[0] = outcome;
            let bids = SchoolBids::Lehmer(raw);
            let transcript = derand_da(&inst, &bids).expect("instance is valid");
            let verdict = is_stable(&inst, &transcript.priorities, &transcript.matching)
                .expect("shapes agree");
            col.check(verdict.pass, || {
                format!("instance {i}, seed {outcome}: blocking pair {:?}", verdict.witness())
            });
            if outcome == 0 {
                let replay = derand_da(&inst, &bids).expect("instance is valid");
                let first = serde_json::to_string(&transcript).expect("serializable");
                let second = serde_json::to_string(&replay).expect("serializable");
                col.check(first == second, || {
                    format!("instance {i}: transcript replay differs")
                });
            }
        }
    }
    col.finish()
}

/// Every entry of the eating outcome has a reduced denominator dividing
/// `(n!)^m`, exhaustively at n = m = 3 and on random instances up to 5x5.
fn eating_denominators(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("eating-denominators", cfg.seed());
    let mut rng = rng(cfg.seed());

    let rankings: Vec<Vec<usize>> = (0..6)
        .map(|code| lehmer_decode(code, 3).expect("code in range").as_slice().to_vec())
        .collect();
    for p0 in &rankings {
        for p1 in &rankings {
            for p2 in &rankings {
                let inst = AllocInstance::new(vec![p0.clone(), p1.clone(), p2.clone()])
                    .expect("rankings are permutations");
                let (matrix, _) = probabilistic_serial(&inst).expect("instance is valid");
                let verdict = denominator_bound_check(&matrix, 3, 3).expect("matrix fits");
                col.check(verdict.pass, || {
                    format!(
                        "prefs {:?}/{:?}/{:?}: entry {:?} breaks the bound",
                        p0, p1, p2, verdict.witness()
                    )
                });
            }
        }
    }

    let samples = cfg.samples(500);
    let max_side = cfg.size(5).clamp(1, 6);
    for _ in 0..samples {
        let n = rng.random_range(1..=max_side);
        let m = rng.random_range(1..=max_side);
        let inst = random_alloc_instance(&mut rng, n, m);
        let (matrix, _) = probabilistic_serial(&inst).expect("instance is valid");
        let verdict = denominator_bound_check(&matrix, n, m).expect("matrix fits");
        col.check(verdict.pass, || {
            format!("prefs {:?}: entry {:?} breaks the bound", inst.rankings(), verdict.witness())
        });
    }
    col.finish()
}

/// Enumerating every draw value reproduces the eating probabilities exactly
/// under the shifted draw, and misses them by exactly one quantum per column
/// (first agent up, last eater down) under the literal draw.
fn realization_marginals(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("realization-marginals", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(200);
    let max_side = cfg.size(4).clamp(1, 5);

    // A fixed two-agent contest where the literal bias must show up.
    let tiny = AllocInstance::new(vec![vec![0], vec![0]]).expect("rankings are permutations");
    check_marginals(&mut col, &tiny);

    let mut tested = 0u64;
    let mut attempts = 0u64;
    while tested < samples && attempts < samples.saturating_mul(20) {
        attempts += 1;
        let n = rng.random_range(1..=max_side);
        let m = rng.random_range(1..=max_side);
        let inst = random_alloc_instance(&mut rng, n, m);
        let (matrix, _) = probabilistic_serial(&inst).expect("instance is valid");
        let d = reduced_modulus(&matrix).expect("matrix is consistent");
        if d > 10_000 {
            continue;
        }
        tested += 1;
        check_marginals(&mut col, &inst);
    }
    col.check(tested == samples, || {
        format!("only {tested} of {samples} sampled instances had a small enough denominator")
    });
    col.finish()
}

fn check_marginals(col: &mut Collector, inst: &AllocInstance) {
    let n = inst.n();
    let m = inst.m();
    let (matrix, _) = probabilistic_serial(inst).expect("instance is valid");
    let d = reduced_modulus(&matrix).expect("matrix is consistent");

    let tally = |mode: DrawMode| -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; m]; n];
        for sigma in 0..d {
            let alloc = realize_assignment(&matrix, sigma, d, mode).expect("sigma in range");
            for (item, &owner) in alloc.owner.iter().enumerate() {
                counts[owner][item] += 1;
            }
        }
        counts
    };

    let shifted = tally(DrawMode::Shifted);
    let literal = tally(DrawMode::Literal);

    for item in 0..m {
        let last_eater = (0..n)
            .rev()
            .find(|&agent| matrix.p[agent][item].is_positive())
            .expect("column sums to one");
        for agent in 0..n {
            let exact = &matrix.p[agent][item] * &Rat::from(d);
            let exact = u64::try_from(exact.numer().clone()).expect("d clears denominators");
            col.check(shifted[agent][item] == exact, || {
                format!(
                    "prefs {:?}, item {item}, agent {agent}: shifted draw hit {} of {d}, \
                     eating says {exact}",
                    inst.rankings(),
                    shifted[agent][item]
                )
            });
            let adjusted = exact + u64::from(agent == 0) - u64::from(agent == last_eater);
            col.check(literal[agent][item] == adjusted, || {
                format!(
                    "prefs {:?}, item {item}, agent {agent}: literal draw hit {} of {d}, \
                     quantum shift says {adjusted}",
                    inst.rankings(),
                    literal[agent][item]
                )
            });
        }
        if last_eater != 0 {
            col.check(literal[0][item] != shifted[0][item], || {
                format!("item {item}: literal draw unexpectedly unbiased")
            });
        }
    }
}

/// Enumerating all bids reproduces the random-priority distribution exactly,
/// and every dictatorship outcome is Pareto efficient.
fn priority_equivalence(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("priority-equivalence", cfg.seed());
    let mut rng = rng(cfg.seed());
    let samples = cfg.samples(20);
    let max_n = cfg.size(5).clamp(1, 7);

    for n in 1..=max_n {
        let count = factorial(n).expect("small n");
        for _ in 0..samples {
            let m = rng.random_range(1..=5);
            let inst = random_alloc_instance(&mut rng, n, m);
            let mut counts = vec![vec![0u64; m]; n];
            for outcome in 0..count {
                let mut bids = vec![0u64; n];
                bids[0] = outcome;
                let transcript = derand_rp(&bids, &inst).expect("bids in range");
                for (item, &owner) in transcript.allocation.owner.iter().enumerate() {
                    counts[owner][item] += 1;
                }
            }
            let oracle = rp_distribution_oracle(&inst).expect("small n");
            for agent in 0..n {
                for item in 0..m {
                    let enumerated = Rat::new(counts[agent][item] as i64, count as i64);
                    col.check(enumerated == oracle.p[agent][item], || {
                        format!(
                            "prefs {:?}, agent {agent}, item {item}: enumeration gives {} \
                             but the oracle gives {}",
                            inst.rankings(),
                            enumerated,
                            oracle.p[agent][item]
                        )
                    });
                }
            }
        }
    }

    for n in 1..=max_n.min(4) {
        for _ in 0..samples {
            let m = rng.random_range(1..=5);
            let inst = random_alloc_instance(&mut rng, n, m);
            let order = random_permutation(&mut rng, n);
            let alloc = serial_dictatorship(&order, &inst).expect("order fits");
            let verdict = pareto_efficient(&alloc, &inst).expect("space is small");
            col.check(verdict.pass, || {
                format!(
                    "prefs {:?}, order {:?}: allocation {:?} improvable to {:?}",
                    inst.rankings(),
                    order.as_slice(),
                    alloc.owner,
                    verdict.witness().map(|w| &w.better.owner)
                )
            });
        }
    }
    col.finish()
}

/// Monte Carlo runs of the parity game stay close to uniform and retally
/// identically for every worker count.
fn trial_reproducibility(cfg: &SuiteConfig) -> SuiteReport {
    let mut col = Collector::new("trial-reproducibility", cfg.seed());
    let trials = cfg.samples(100_000);
    let seed = cfg.seed();
    let policies = vec![AgentPolicy::uniform(), AgentPolicy::uniform()];

    let base = run_game_trials(2, &policies, trials, seed).expect("policies fit the game");
    col.check(base.empirical_tv < Rat::new(1, 50), || {
        format!("empirical distance {} after {trials} trials", base.empirical_tv)
    });
    for workers in [2usize, 4] {
        let sharded = run_game_trials_sharded(2, &policies, trials, seed, workers)
            .expect("policies fit the game");
        col.check(sharded == base, || {
            format!("tally with {workers} workers differs from the single-worker tally")
        });
    }
    col.finish()
}
