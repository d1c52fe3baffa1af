//! Seeded random generators for instances and profiles, shared by the
//! property suites and tests. Everything is deterministic in the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::AllocInstance;
use crate::modgame::MixedStrategy;
use crate::peer::PeerProfile;
use crate::permute::{factorial, lehmer_decode, Permutation};
use crate::rational::Rat;
use crate::school::{School, SchoolInstance, Student};
use crate::tasks::TaskInstance;

/// The generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform permutation of `[0, n)`, drawn through its Lehmer code. `n <= 20`.
pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Permutation {
    let modulus = factorial(n).expect("n <= 20");
    lehmer_decode(rng.random_range(0..modulus), n).expect("code in range")
}

/// Uniform strict ranking of `[0, n)`, best first.
pub fn random_ranking(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    random_permutation(rng, n).as_slice().to_vec()
}

pub fn random_peer_profile(rng: &mut ChaCha8Rng, n: usize) -> PeerProfile {
    PeerProfile::new((0..n).map(|_| random_ranking(rng, n)).collect())
        .expect("rankings are permutations")
}

pub fn random_alloc_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AllocInstance {
    AllocInstance::new((0..n).map(|_| random_ranking(rng, m)).collect())
        .expect("rankings are permutations")
}

/// Random school instance: truncated student preference lists, small
/// capacities, and random ordered priority groups per school.
pub fn random_school_instance(
    rng: &mut ChaCha8Rng,
    n_students: usize,
    n_schools: usize,
) -> SchoolInstance {
    let students = (0..n_students)
        .map(|_| {
            let len = rng.random_range(1..=n_schools);
            Student { prefs: random_ranking(rng, n_schools)[..len].to_vec() }
        })
        .collect();
    let schools = (0..n_schools)
        .map(|_| {
            let shuffled = random_ranking(rng, n_students);
            let n_groups = rng.random_range(1..=n_students.max(1).min(3));
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
            for &s in &shuffled {
                groups[rng.random_range(0..n_groups)].push(s);
            }
            groups.retain(|g| !g.is_empty());
            if groups.is_empty() {
                groups.push(Vec::new());
            }
            School { capacity: rng.random_range(1..=3), groups }
        })
        .collect();
    let instance = SchoolInstance { students, schools };
    instance.validate().expect("generated instance is valid");
    instance
}

/// Truthful task instance with small positive rational times.
pub fn random_task_instance(rng: &mut ChaCha8Rng, m: usize) -> TaskInstance {
    let mut column = |_: usize| -> Vec<Rat> {
        (0..m)
            .map(|_| Rat::new(rng.random_range(1..=9), rng.random_range(1..=4)))
            .collect()
    };
    TaskInstance::truthful(column(0), column(1)).expect("times are positive")
}

/// Random distribution over `[0, modulus)` with small rational weights.
pub fn random_strategy(rng: &mut ChaCha8Rng, modulus: u64) -> MixedStrategy {
    loop {
        let weights: Vec<u64> = (0..modulus).map(|_| rng.random_range(0..=8)).collect();
        let total: u64 = weights.iter().sum();
        if total == 0 {
            continue;
        }
        let probs =
            weights.iter().map(|&w| Rat::new(w as i64, total as i64)).collect::<Vec<_>>();
        return MixedStrategy::from_probs(probs).expect("weights normalize");
    }
}

/// `n` strategies of which at least `uniform_count` are exactly uniform; the
/// uniform slots are placed at random.
pub fn random_profile_with_uniform(
    rng: &mut ChaCha8Rng,
    n: usize,
    modulus: u64,
    uniform_count: usize,
) -> Vec<MixedStrategy> {
    assert!(uniform_count <= n);
    let mut uniform_slots = vec![false; n];
    let mut placed = 0;
    while placed < uniform_count {
        let slot = rng.random_range(0..n);
        if !uniform_slots[slot] {
            uniform_slots[slot] = true;
            placed += 1;
        }
    }
    uniform_slots
        .into_iter()
        .map(|u| {
            if u {
                MixedStrategy::uniform(modulus)
            } else {
                random_strategy(rng, modulus)
            }
        })
        .collect()
}

/// Random integer utilities in `[-9, 9]`, one row per agent over `modulus`
/// outcomes.
pub fn random_utilities(rng: &mut ChaCha8Rng, n: usize, modulus: u64) -> Vec<Vec<Rat>> {
    (0..n)
        .map(|_| (0..modulus).map(|_| Rat::from_int(rng.random_range(-9..=9))).collect())
        .collect()
}
