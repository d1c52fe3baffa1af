//! Peer selection: the agents themselves decide which one of them wins.
//!
//! Three mechanisms live here.
//!
//! * Sequential elimination: agents take turns striking candidates until one
//!   remains. With strict preferences its subgame-perfect winner has a linear
//!   characterization: replay the eliminators in reverse order, each removing
//!   their least-preferred remaining candidate. [`spe_winner_oracle`] checks
//!   this by brute-force backward induction.
//! * De-randomized random sequential elimination ([`derand_rse`]): each agent
//!   submits an integer in `[0, n!)`; the sum mod `n!` is decoded into the
//!   elimination order. Every agent can steer the order, which makes the
//!   mechanism responsive but not impartial.
//! * A partitioned vote ([`partition_winner`]): two voter blocks nominate a
//!   candidate from each other, and a two-agent audience plays a parity game
//!   to pick the side. No agent's report affects whether that same agent
//!   wins, so the mechanism is impartial, but it is not responsive.
//!
//! [`check_responsive`] and [`check_impartial`] test those two properties for
//! any [`PeerMechanism`] by searching report configurations. No mechanism
//! here passes both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::permute::{factorial, lehmer_decode, Permutation, PermuteError};
use crate::verdict::Verdict;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeerError {
    #[error("need at least {min} agents, got {n}")]
    TooFewAgents { n: usize, min: usize },
    #[error("agent {agent}: ranking is not a permutation of 0..{n}")]
    BadRanking { agent: usize, n: usize },
    #[error("expected {expected} rankings, got {got}")]
    WrongProfileSize { got: usize, expected: usize },
    #[error("order must be a permutation of {expected} agents, got {got}")]
    WrongOrderSize { got: usize, expected: usize },
    #[error("step {step}: candidate {candidate} is already eliminated")]
    AlreadyEliminated { step: usize, candidate: usize },
    #[error("step {step}: candidate {candidate} out of range for {n} agents")]
    CandidateOutOfRange { step: usize, candidate: usize, n: usize },
    #[error("expected {expected} elimination choices, got {got}")]
    WrongChoiceCount { got: usize, expected: usize },
    #[error("agent {agent}: bid {bid} out of range, must be below {modulus}")]
    BidOutOfRange { agent: usize, bid: u64, modulus: u64 },
    #[error("expected {expected} bids, got {got}")]
    WrongBidCount { got: usize, expected: usize },
    #[error("expected {expected} parity bits, got {got}")]
    WrongBitCount { got: usize, expected: usize },
    #[error("parity bit {value} must be 0 or 1")]
    BadBit { value: u8 },
    #[error("winner {winner} out of range for {n} agents")]
    WinnerOutOfRange { winner: usize, n: usize },
    #[error("n = {n} too large for exhaustive game analysis (max {max})")]
    TooManyAgents { n: usize, max: usize },
    #[error(transparent)]
    Permute(#[from] PermuteError),
}

/// Strict rankings: `prefs[i]` lists all `n` agents, best first, as seen by
/// agent `i`. Agents rank themselves too.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct PeerProfile {
    prefs: Vec<Vec<usize>>,
}

impl PeerProfile {
    pub fn new(prefs: Vec<Vec<usize>>) -> Result<Self, PeerError> {
        let n = prefs.len();
        if n == 0 {
            return Err(PeerError::TooFewAgents { n: 0, min: 1 });
        }
        for (agent, ranking) in prefs.iter().enumerate() {
            if ranking.len() != n || !is_permutation(ranking, n) {
                return Err(PeerError::BadRanking { agent, n });
            }
        }
        Ok(PeerProfile { prefs })
    }

    pub fn n(&self) -> usize {
        self.prefs.len()
    }

    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.prefs
    }

    pub fn ranking(&self, agent: usize) -> &[usize] {
        &self.prefs[agent]
    }

    /// Position of `candidate` in `agent`'s ranking; 0 is best.
    pub fn rank_of(&self, agent: usize, candidate: usize) -> usize {
        self.prefs[agent].iter().position(|&c| c == candidate).expect("candidate in ranking")
    }

    fn least_preferred_remaining(&self, agent: usize, remaining: &[bool]) -> usize {
        *self.prefs[agent]
            .iter()
            .rev()
            .find(|&&c| remaining[c])
            .expect("some candidate remains")
    }

    fn top_among(&self, agent: usize, set: &[usize]) -> usize {
        *self.prefs[agent]
            .iter()
            .find(|&&c| set.contains(&c))
            .expect("set is nonempty and ranked")
    }
}

fn is_permutation(values: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    values.iter().all(|&v| v < n && !std::mem::replace(&mut seen[v], true))
}

impl TryFrom<Vec<Vec<usize>>> for PeerProfile {
    type Error = PeerError;
    fn try_from(prefs: Vec<Vec<usize>>) -> Result<Self, PeerError> {
        PeerProfile::new(prefs)
    }
}

impl From<PeerProfile> for Vec<Vec<usize>> {
    fn from(p: PeerProfile) -> Self {
        p.prefs
    }
}

fn check_order(order: &Permutation, n: usize) -> Result<(), PeerError> {
    if order.len() != n {
        return Err(PeerError::WrongOrderSize { got: order.len(), expected: n });
    }
    Ok(())
}

/// Replay a fully specified elimination game. The first `n-1` agents of
/// `order` act in turn; the `t`-th actor removes `choices[t]`, which must
/// still be in the running. Being eliminated as a candidate does not cost an
/// agent their turn as an eliminator. Returns the sole survivor.
pub fn run_sequential_elimination(
    order: &Permutation,
    choices: &[usize],
    n: usize,
) -> Result<usize, PeerError> {
    if n == 0 {
        return Err(PeerError::TooFewAgents { n: 0, min: 1 });
    }
    check_order(order, n)?;
    if choices.len() != n - 1 {
        return Err(PeerError::WrongChoiceCount { got: choices.len(), expected: n - 1 });
    }
    let mut remaining = vec![true; n];
    for (step, &candidate) in choices.iter().enumerate() {
        if candidate >= n {
            return Err(PeerError::CandidateOutOfRange { step, candidate, n });
        }
        if !remaining[candidate] {
            return Err(PeerError::AlreadyEliminated { step, candidate });
        }
        remaining[candidate] = false;
    }
    Ok(remaining.iter().position(|&r| r).expect("exactly one survivor"))
}

/// Subgame-perfect winner of the elimination game, in linear time: process
/// the eliminators (the first `n-1` agents of `order`) in reverse, each
/// sincerely removing their least-preferred remaining candidate.
pub fn spe_winner_linear(order: &Permutation, profile: &PeerProfile) -> Result<usize, PeerError> {
    let n = profile.n();
    check_order(order, n)?;
    let mut remaining = vec![true; n];
    for t in (0..n.saturating_sub(1)).rev() {
        let eliminator = order.as_slice()[t];
        let target = profile.least_preferred_remaining(eliminator, &remaining);
        remaining[target] = false;
    }
    Ok(remaining.iter().position(|&r| r).expect("exactly one survivor"))
}

/// Maximum `n` for the backward-induction winner computation.
pub const ORACLE_MAX_AGENTS: usize = 7;

/// Subgame-perfect winner by exhaustive backward induction over candidate
/// sets. Exponential; guarded to `n <= 7`. Strict preferences make the
/// equilibrium winner unique: an eliminator is indifferent between two moves
/// only when both lead to the same final winner.
pub fn spe_winner_oracle(order: &Permutation, profile: &PeerProfile) -> Result<usize, PeerError> {
    let n = profile.n();
    check_order(order, n)?;
    if n > ORACLE_MAX_AGENTS {
        return Err(PeerError::TooManyAgents { n, max: ORACLE_MAX_AGENTS });
    }
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut memo: Vec<Option<u8>> = vec![None; 1 << n];

    fn solve(
        mask: u32,
        n: usize,
        order: &Permutation,
        profile: &PeerProfile,
        memo: &mut [Option<u8>],
    ) -> usize {
        if let Some(w) = memo[mask as usize] {
            return w as usize;
        }
        let alive = mask.count_ones() as usize;
        let winner = if alive == 1 {
            mask.trailing_zeros() as usize
        } else {
            let step = n - alive;
            let eliminator = order.as_slice()[step];
            let mut best: Option<usize> = None;
            for c in 0..n {
                if mask & (1 << c) == 0 {
                    continue;
                }
                let w = solve(mask & !(1 << c), n, order, profile, memo);
                let better = match best {
                    None => true,
                    Some(b) => profile.rank_of(eliminator, w) < profile.rank_of(eliminator, b),
                };
                if better {
                    best = Some(w);
                }
            }
            best.expect("nonempty candidate set")
        };
        memo[mask as usize] = Some(winner as u8);
        winner
    }

    Ok(solve(full, n, order, profile, &mut memo))
}

/// How the elimination stage is played after the order is fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RsePlay<'a> {
    /// Equilibrium continuation: everyone plays the subgame-perfect strategy,
    /// so the winner is [`spe_winner_linear`] on the decoded order.
    SincereReversed,
    /// Replay explicitly supplied eliminations.
    Choices(&'a [usize]),
}

/// Order and winner of one de-randomized sequential elimination run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RseOutcome {
    pub order: Permutation,
    pub winner: usize,
}

fn validate_bids(bids: &[u64], n: usize, modulus: u64) -> Result<(), PeerError> {
    if bids.len() != n {
        return Err(PeerError::WrongBidCount { got: bids.len(), expected: n });
    }
    for (agent, &bid) in bids.iter().enumerate() {
        if bid >= modulus {
            return Err(PeerError::BidOutOfRange { agent, bid, modulus });
        }
    }
    Ok(())
}

/// De-randomized random sequential elimination: each agent bids an integer in
/// `[0, n!)`, the sum mod `n!` is decoded into the elimination order, and the
/// elimination stage is played out per `play`.
pub fn derand_rse(
    bids: &[u64],
    profile: &PeerProfile,
    play: RsePlay,
) -> Result<RseOutcome, PeerError> {
    let n = profile.n();
    let modulus = factorial(n)?;
    validate_bids(bids, n, modulus)?;
    let sum: u128 = bids.iter().map(|&b| b as u128).sum();
    let order = lehmer_decode((sum % modulus as u128) as u64, n)?;
    let winner = match play {
        RsePlay::SincereReversed => spe_winner_linear(&order, profile)?,
        RsePlay::Choices(choices) => run_sequential_elimination(&order, choices, n)?,
    };
    Ok(RseOutcome { order, winner })
}

/// Fixed role split used by [`partition_winner`]: two voter blocks and a
/// two-agent audience, all determined by agent id alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionLayout {
    /// Candidates nominated by `side2`'s votes.
    pub side1: Vec<usize>,
    /// Candidates nominated by `side1`'s votes.
    pub side2: Vec<usize>,
    /// The two agents whose parity bits pick the winning side.
    pub audience: [usize; 2],
}

/// Split `n >= 4` agents by id: the last two agents form the audience, and
/// the rest are halved into the two voter blocks.
pub fn partition_layout(n: usize) -> Result<PartitionLayout, PeerError> {
    if n < 4 {
        return Err(PeerError::TooFewAgents { n, min: 4 });
    }
    let voters = n - 2;
    let split = voters.div_ceil(2);
    Ok(PartitionLayout {
        side1: (0..split).collect(),
        side2: (split..voters).collect(),
        audience: [n - 2, n - 1],
    })
}

/// Plurality winner within `candidates` of the top choices cast by `voters`;
/// ties go to the lowest id.
fn plurality(profile: &PeerProfile, voters: &[usize], candidates: &[usize]) -> usize {
    let mut counts = vec![0usize; profile.n()];
    for &v in voters {
        counts[profile.top_among(v, candidates)] += 1;
    }
    *candidates
        .iter()
        .max_by_key(|&&c| (counts[c], std::cmp::Reverse(c)))
        .expect("candidates nonempty")
}

/// Impartial peer selection. Each side's candidate is nominated by the OTHER
/// side's votes (each voter's vote is their top-ranked member of the opposite
/// block, plurality with lowest-id tie-break), and the two audience agents
/// play a parity game: side 1's candidate wins if the XOR of their bits is 0,
/// side 2's otherwise.
///
/// Every role is fixed by agent id, which is what makes this impartial: a
/// voter only influences the far side's candidate, and the audience can never
/// win. The price is responsiveness: whenever the parity bit settles on side
/// 1, no side-1 voter report can move the outcome at all.
///
/// `parity_bits` holds the two audience bits in id order.
pub fn partition_winner(profile: &PeerProfile, parity_bits: &[u8]) -> Result<usize, PeerError> {
    let layout = partition_layout(profile.n())?;
    if parity_bits.len() != 2 {
        return Err(PeerError::WrongBitCount { got: parity_bits.len(), expected: 2 });
    }
    for &b in parity_bits {
        if b > 1 {
            return Err(PeerError::BadBit { value: b });
        }
    }
    let c1 = plurality(profile, &layout.side2, &layout.side1);
    let c2 = plurality(profile, &layout.side1, &layout.side2);
    Ok(if parity_bits[0] ^ parity_bits[1] == 0 { c1 } else { c2 })
}

/// Tempting but broken variant, kept as a cautionary regression witness: the
/// agents are halved into two blocks that nominate each other's candidate,
/// and the parity bits of everyone who is NOT a nominated candidate are
/// XORed to pick the side. Which bits count then depends on the votes, and a
/// voter who is pivotal for the far side's nomination can steer the bit set,
/// flip the parity, and hand the win to themselves. See the leak test below.
///
/// `bits` holds one parity bit per agent; only non-candidates' bits count.
pub fn partition_winner_bits_from_noncandidates(
    profile: &PeerProfile,
    bits: &[u8],
) -> Result<usize, PeerError> {
    let n = profile.n();
    if n < 4 {
        return Err(PeerError::TooFewAgents { n, min: 4 });
    }
    if bits.len() != n {
        return Err(PeerError::WrongBitCount { got: bits.len(), expected: n });
    }
    for &b in bits {
        if b > 1 {
            return Err(PeerError::BadBit { value: b });
        }
    }
    let split = n.div_ceil(2);
    let side1: Vec<usize> = (0..split).collect();
    let side2: Vec<usize> = (split..n).collect();
    let c1 = plurality(profile, &side2, &side1);
    let c2 = plurality(profile, &side1, &side2);
    let mut xor = 0u8;
    for agent in 0..n {
        if agent != c1 && agent != c2 {
            xor ^= bits[agent];
        }
    }
    Ok(if xor == 0 { c1 } else { c2 })
}

/// A single agent's full report. Mechanisms read the fields they care about:
/// the ranking always, `bid` only in [`PeerMechanism::DerandRse`], `bit` only
/// for [`partition_winner`] audience members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeerReport {
    pub ranking: Vec<usize>,
    pub bid: u64,
    pub bit: u8,
}

/// Mechanisms the responsiveness/impartiality checkers can exercise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PeerMechanism {
    /// [`derand_rse`] with the equilibrium continuation.
    DerandRse,
    /// Sequential elimination under a fixed, exogenous order.
    FixedOrderSe(Permutation),
    /// [`partition_winner`].
    Partition,
    /// Ignores all reports and always selects this agent.
    Constant(usize),
}

impl PeerMechanism {
    /// Winner under this mechanism for one report per agent.
    pub fn winner(&self, n: usize, reports: &[PeerReport]) -> Result<usize, PeerError> {
        if reports.len() != n {
            return Err(PeerError::WrongProfileSize { got: reports.len(), expected: n });
        }
        let profile = PeerProfile::new(reports.iter().map(|r| r.ranking.clone()).collect())?;
        match self {
            PeerMechanism::DerandRse => {
                let bids: Vec<u64> = reports.iter().map(|r| r.bid).collect();
                Ok(derand_rse(&bids, &profile, RsePlay::SincereReversed)?.winner)
            }
            PeerMechanism::FixedOrderSe(order) => spe_winner_linear(order, &profile),
            PeerMechanism::Partition => {
                let layout = partition_layout(n)?;
                let bits = [reports[layout.audience[0]].bit, reports[layout.audience[1]].bit];
                partition_winner(&profile, &bits)
            }
            PeerMechanism::Constant(w) => {
                if *w >= n {
                    return Err(PeerError::WinnerOutOfRange { winner: *w, n });
                }
                Ok(*w)
            }
        }
    }

    /// All reports by `agent` that this mechanism can distinguish, one
    /// representative per equivalence class. Enumerating these is equivalent
    /// to enumerating every full report.
    pub fn report_space(&self, n: usize, agent: usize) -> Result<Vec<PeerReport>, PeerError> {
        let identity: Vec<usize> = (0..n).collect();
        let base = PeerReport { ranking: identity, bid: 0, bit: 0 };
        match self {
            PeerMechanism::DerandRse => {
                let modulus = factorial(n)?;
                let mut space = Vec::new();
                for code in 0..modulus {
                    let ranking = lehmer_decode(code, n)?.as_slice().to_vec();
                    for bid in 0..modulus {
                        space.push(PeerReport { ranking: ranking.clone(), bid, bit: 0 });
                    }
                }
                Ok(space)
            }
            PeerMechanism::FixedOrderSe(_) => {
                let modulus = factorial(n)?;
                (0..modulus)
                    .map(|code| {
                        Ok(PeerReport {
                            ranking: lehmer_decode(code, n)?.as_slice().to_vec(),
                            bid: 0,
                            bit: 0,
                        })
                    })
                    .collect()
            }
            PeerMechanism::Partition => {
                let layout = partition_layout(n)?;
                if layout.audience.contains(&agent) {
                    return Ok(vec![
                        PeerReport { bit: 0, ..base.clone() },
                        PeerReport { bit: 1, ..base },
                    ]);
                }
                let votes_over =
                    if layout.side1.contains(&agent) { &layout.side2 } else { &layout.side1 };
                Ok(votes_over
                    .iter()
                    .map(|&target| {
                        let mut ranking = vec![target];
                        ranking.extend((0..n).filter(|&c| c != target));
                        PeerReport { ranking, bid: 0, bit: 0 }
                    })
                    .collect())
            }
            PeerMechanism::Constant(_) => Ok(vec![base]),
        }
    }
}

/// How the checkers cover the configuration space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchPlan {
    /// Every combination of distinguishable reports for every agent.
    Exhaustive,
    /// `profiles` random ranking draws per agent (seeded), crossed with every
    /// combination of the non-ranking report parts (bids, parity bits). Own
    /// deviations still range over the agent's full report space.
    SampledProfiles { profiles: u32, seed: u64 },
}

/// One configuration where some agent cannot move the outcome at all.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResponsiveWitness {
    pub agent: usize,
    pub winner: usize,
    pub reports: Vec<PeerReport>,
}

/// One configuration where some agent's own report decides whether they win.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImpartialWitness {
    pub agent: usize,
    pub reports: Vec<PeerReport>,
    pub winning: PeerReport,
    pub losing: PeerReport,
}

/// Walk the configurations requested by `plan`, invoking `visit` with each
/// full report vector. `visit` returns `Some(err_or_break)` to stop early.
fn for_each_config<T>(
    mech: &PeerMechanism,
    n: usize,
    plan: &SearchPlan,
    mut visit: impl FnMut(&[PeerReport]) -> Result<Option<T>, PeerError>,
) -> Result<Option<T>, PeerError> {
    match plan {
        SearchPlan::Exhaustive => {
            let spaces: Vec<Vec<PeerReport>> =
                (0..n).map(|a| mech.report_space(n, a)).collect::<Result<_, _>>()?;
            let mut indices = vec![0usize; n];
            loop {
                let config: Vec<PeerReport> =
                    (0..n).map(|a| spaces[a][indices[a]].clone()).collect();
                if let Some(out) = visit(&config)? {
                    return Ok(Some(out));
                }
                let mut pos = n;
                while pos > 0 {
                    pos -= 1;
                    indices[pos] += 1;
                    if indices[pos] < spaces[pos].len() {
                        break;
                    }
                    indices[pos] = 0;
                    if pos == 0 {
                        return Ok(None);
                    }
                }
            }
        }
        SearchPlan::SampledProfiles { profiles, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let modulus = factorial(n)?;
            for _ in 0..*profiles {
                let mut rankings = Vec::with_capacity(n);
                for _ in 0..n {
                    let code = rng.random_range(0..modulus);
                    rankings.push(lehmer_decode(code, n)?.as_slice().to_vec());
                }
                // Cross the sampled rankings with every combination of the
                // non-ranking report parts.
                let aux: Vec<Vec<PeerReport>> = (0..n)
                    .map(|a| -> Result<Vec<PeerReport>, PeerError> {
                        let parts: Vec<(u64, u8)> = match mech {
                            PeerMechanism::DerandRse => (0..modulus).map(|b| (b, 0)).collect(),
                            PeerMechanism::Partition => {
                                let layout = partition_layout(n)?;
                                if layout.audience.contains(&a) {
                                    vec![(0, 0), (0, 1)]
                                } else {
                                    vec![(0, 0)]
                                }
                            }
                            _ => vec![(0, 0)],
                        };
                        Ok(parts
                            .into_iter()
                            .map(|(bid, bit)| PeerReport {
                                ranking: rankings[a].clone(),
                                bid,
                                bit,
                            })
                            .collect())
                    })
                    .collect::<Result<_, _>>()?;
                let mut indices = vec![0usize; n];
                'configs: loop {
                    let config: Vec<PeerReport> =
                        (0..n).map(|a| aux[a][indices[a]].clone()).collect();
                    if let Some(out) = visit(&config)? {
                        return Ok(Some(out));
                    }
                    let mut pos = n;
                    while pos > 0 {
                        pos -= 1;
                        indices[pos] += 1;
                        if indices[pos] < aux[pos].len() {
                            continue 'configs;
                        }
                        indices[pos] = 0;
                    }
                    break;
                }
            }
            Ok(None)
        }
    }
}

/// Passes iff in every tested configuration, every agent can produce at least
/// two different winners by varying their own full report. The witness names
/// an agent whose outcome is constant.
pub fn check_responsive(
    mech: &PeerMechanism,
    n: usize,
    plan: &SearchPlan,
) -> Result<Verdict<ResponsiveWitness>, PeerError> {
    let witness = for_each_config(mech, n, plan, |config| {
        for agent in 0..n {
            let space = mech.report_space(n, agent)?;
            let mut cfg = config.to_vec();
            let mut first: Option<usize> = None;
            let mut moved = false;
            for report in &space {
                cfg[agent] = report.clone();
                let w = mech.winner(n, &cfg)?;
                match first {
                    None => first = Some(w),
                    Some(f) if f != w => {
                        moved = true;
                        break;
                    }
                    Some(_) => {}
                }
            }
            if !moved {
                return Ok(Some(ResponsiveWitness {
                    agent,
                    winner: first.expect("report space is nonempty"),
                    reports: config.to_vec(),
                }));
            }
        }
        Ok(None)
    })?;
    Ok(match witness {
        None => Verdict::ok(),
        Some(w) => Verdict::fail(w),
    })
}

/// Passes iff in every tested configuration, no agent can change whether they
/// themselves win by varying their own full report. The witness exhibits a
/// winning and a losing report for the same agent against fixed others.
pub fn check_impartial(
    mech: &PeerMechanism,
    n: usize,
    plan: &SearchPlan,
) -> Result<Verdict<ImpartialWitness>, PeerError> {
    let witness = for_each_config(mech, n, plan, |config| {
        for agent in 0..n {
            let space = mech.report_space(n, agent)?;
            let mut cfg = config.to_vec();
            let mut winning: Option<PeerReport> = None;
            let mut losing: Option<PeerReport> = None;
            for report in &space {
                cfg[agent] = report.clone();
                let w = mech.winner(n, &cfg)?;
                if w == agent {
                    winning.get_or_insert_with(|| report.clone());
                } else {
                    losing.get_or_insert_with(|| report.clone());
                }
                if let (Some(win), Some(lose)) = (&winning, &losing) {
                    return Ok(Some(ImpartialWitness {
                        agent,
                        reports: config.to_vec(),
                        winning: win.clone(),
                        losing: lose.clone(),
                    }));
                }
            }
        }
        Ok(None)
    })?;
    Ok(match witness {
        None => Verdict::ok(),
        Some(w) => Verdict::fail(w),
    })
}
