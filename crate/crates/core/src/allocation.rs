//! Assignment of indivisible items without money.
//!
//! Two classic randomized mechanisms and their de-randomizations:
//!
//! * Probabilistic serial ([`probabilistic_serial`]): agents eat their
//!   favourite remaining item at unit speed, producing an exact fractional
//!   matrix whose entries have denominators dividing `(n!)^m`. The matrix is
//!   realized into a discrete allocation game-last: a single shared integer
//!   in `[0, N)` is treated as a quantile draw into every column
//!   ([`realize_assignment`]).
//! * Random priority ([`derand_rp`]): agents bid integers in `[0, n!)`, the
//!   sum mod `n!` picks a serial dictatorship order (game-first).
//!   [`rp_distribution_oracle`] recovers the induced matrix by enumerating
//!   all `n!` orders.
//!
//! Checkers: SD envy-freeness and SD efficiency for matrices, exhaustive
//! Pareto efficiency for discrete allocations (bundles compared by prefix
//! counts along each agent's own ranking).

use num_bigint::BigInt;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permute::{factorial, lehmer_decode, Permutation, PermuteError};
use crate::rational::Rat;
use crate::verdict::Verdict;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("need at least one agent")]
    NoAgents,
    #[error("agent {agent}: ranking is not a permutation of the {m} items")]
    BadPrefs { agent: usize, m: usize },
    #[error("matrix is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    BadMatrixShape { got_rows: usize, got_cols: usize, rows: usize, cols: usize },
    #[error("matrix entry ({row},{col}) = {value} is outside [0,1]")]
    EntryOutOfRange { row: usize, col: usize, value: String },
    #[error("column {col} sums to {sum}, expected 1")]
    BadColumnSum { col: usize, sum: String },
    #[error("row {row} sums to {sum}, expected {expected}")]
    BadRowSum { row: usize, sum: String, expected: String },
    #[error("sigma = {sigma} out of range, must be below {modulus}")]
    SigmaOutOfRange { sigma: u64, modulus: u64 },
    #[error("{modulus} is not a common denominator: entry ({row},{col}) needs {denom}")]
    NotCommonDenominator { modulus: u64, row: usize, col: usize, denom: String },
    #[error("common denominator of the matrix does not fit in 64 bits")]
    ModulusTooLarge,
    #[error("expected {expected} bids, got {got}")]
    WrongBidCount { got: usize, expected: usize },
    #[error("agent {agent}: bid {bid} out of range, must be below {modulus}")]
    BidOutOfRange { agent: usize, bid: u64, modulus: u64 },
    #[error("order must be a permutation of {expected} agents, got {got}")]
    WrongOrderSize { got: usize, expected: usize },
    #[error("allocation assigns {got} items, expected {expected}")]
    WrongAllocationSize { got: usize, expected: usize },
    #[error("item {item} is assigned to unknown agent {agent}")]
    OwnerOutOfRange { item: usize, agent: usize },
    #[error("n = {n} too large for order enumeration (max {max})")]
    TooManyAgents { n: usize, max: usize },
    #[error("reallocation space {n}^{m} too large for the exhaustive check")]
    TooManyAllocations { n: usize, m: usize },
    #[error(transparent)]
    Permute(#[from] PermuteError),
}

/// `n` agents with strict rankings over `m` items; `prefs[i]` lists all items
/// best first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct AllocInstance {
    prefs: Vec<Vec<usize>>,
    m: usize,
}

impl AllocInstance {
    pub fn new(prefs: Vec<Vec<usize>>) -> Result<Self, AllocError> {
        let n = prefs.len();
        if n == 0 {
            return Err(AllocError::NoAgents);
        }
        let m = prefs[0].len();
        for (agent, ranking) in prefs.iter().enumerate() {
            let mut seen = vec![false; m];
            if ranking.len() != m
                || !ranking.iter().all(|&j| j < m && !std::mem::replace(&mut seen[j], true))
            {
                return Err(AllocError::BadPrefs { agent, m });
            }
        }
        Ok(AllocInstance { prefs, m })
    }

    pub fn n(&self) -> usize {
        self.prefs.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.prefs
    }

    pub fn ranking(&self, agent: usize) -> &[usize] {
        &self.prefs[agent]
    }

    /// Position of `item` in `agent`'s ranking; 0 is best.
    pub fn rank_of(&self, agent: usize, item: usize) -> usize {
        self.prefs[agent].iter().position(|&j| j == item).expect("item in ranking")
    }
}

impl TryFrom<Vec<Vec<usize>>> for AllocInstance {
    type Error = AllocError;
    fn try_from(prefs: Vec<Vec<usize>>) -> Result<Self, AllocError> {
        AllocInstance::new(prefs)
    }
}

impl From<AllocInstance> for Vec<Vec<usize>> {
    fn from(i: AllocInstance) -> Self {
        i.prefs
    }
}

/// Exact fractional assignment: `p[i][j]` is the probability that agent `i`
/// receives item `j`. Columns sum to 1 and rows to `m/n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RationalMatrix {
    pub p: Vec<Vec<Rat>>,
}

impl RationalMatrix {
    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn m(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), AllocError> {
        if self.p.len() != n || self.p.iter().any(|row| row.len() != m) {
            return Err(AllocError::BadMatrixShape {
                got_rows: self.p.len(),
                got_cols: self.p.first().map_or(0, Vec::len),
                rows: n,
                cols: m,
            });
        }
        for (row, r) in self.p.iter().enumerate() {
            for (col, v) in r.iter().enumerate() {
                if v.is_negative() || *v > Rat::one() {
                    return Err(AllocError::EntryOutOfRange { row, col, value: v.to_string() });
                }
            }
        }
        for col in 0..m {
            let sum: Rat = self.p.iter().map(|row| &row[col]).sum();
            if sum != Rat::one() {
                return Err(AllocError::BadColumnSum { col, sum: sum.to_string() });
            }
        }
        let expected = Rat::new(m as i64, n as i64);
        for (row, r) in self.p.iter().enumerate() {
            let sum: Rat = r.iter().sum();
            if sum != expected {
                return Err(AllocError::BadRowSum {
                    row,
                    sum: sum.to_string(),
                    expected: expected.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// One constant-speed interval of the eating process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EatingStep {
    pub start: Rat,
    pub end: Rat,
    /// `eaters[j]` agents ate item `j` throughout this step.
    pub eaters: Vec<usize>,
    /// Items that ran out exactly at `end`.
    pub consumed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EatingTrace {
    pub steps: Vec<EatingStep>,
}

impl EatingTrace {
    /// Total amount of item `j` consumed across all steps.
    pub fn consumed_of(&self, item: usize) -> Rat {
        self.steps
            .iter()
            .map(|s| Rat::from(s.eaters[item] as u64) * (&s.end - &s.start))
            .sum()
    }
}

/// Simultaneous eating: every agent eats their top remaining item at unit
/// speed; a step ends whenever at least one item runs out. All arithmetic is
/// exact, so the resulting matrix is the mechanism's true distribution.
pub fn probabilistic_serial(
    instance: &AllocInstance,
) -> Result<(RationalMatrix, EatingTrace), AllocError> {
    let n = instance.n();
    let m = instance.m();
    let mut remaining: Vec<Rat> = vec![Rat::one(); m];
    let mut alive = vec![true; m];
    let mut cursor = vec![0usize; n];
    let mut p = vec![vec![Rat::zero(); m]; n];
    let mut steps = Vec::new();
    let mut now = Rat::zero();
    let mut alive_count = m;

    while alive_count > 0 {
        let mut eaters = vec![0usize; m];
        let mut tops = vec![0usize; n];
        for agent in 0..n {
            while !alive[instance.prefs[agent][cursor[agent]]] {
                cursor[agent] += 1;
            }
            let top = instance.prefs[agent][cursor[agent]];
            tops[agent] = top;
            eaters[top] += 1;
        }
        let dt = (0..m)
            .filter(|&j| eaters[j] > 0)
            .map(|j| &remaining[j] / Rat::from(eaters[j] as u64))
            .min()
            .expect("someone is eating");
        let end = &now + &dt;
        for agent in 0..n {
            p[agent][tops[agent]] += &dt;
        }
        let mut consumed = Vec::new();
        for j in 0..m {
            if eaters[j] > 0 {
                remaining[j] -= Rat::from(eaters[j] as u64) * &dt;
                if remaining[j].is_zero() {
                    alive[j] = false;
                    alive_count -= 1;
                    consumed.push(j);
                }
            }
        }
        steps.push(EatingStep { start: now, end: end.clone(), eaters, consumed });
        now = end;
    }

    let matrix = RationalMatrix { p };
    matrix.validate(n, m).expect("eating preserves the matrix invariants");
    Ok((matrix, EatingTrace { steps }))
}

/// Witness for a matrix entry whose reduced denominator does not divide
/// `(n!)^m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DenominatorWitness {
    pub row: usize,
    pub col: usize,
    pub entry: String,
}

/// Passes iff every entry's reduced denominator divides `(n!)^m`.
pub fn denominator_bound_check(
    matrix: &RationalMatrix,
    n: usize,
    m: usize,
) -> Result<Verdict<DenominatorWitness>, AllocError> {
    matrix.validate(n, m)?;
    let bound = BigInt::from(factorial(n)?).pow(m as u32);
    for (row, r) in matrix.p.iter().enumerate() {
        for (col, v) in r.iter().enumerate() {
            if !bound.is_multiple_of(&v.denom()) {
                return Ok(Verdict::fail(DenominatorWitness {
                    row,
                    col,
                    entry: v.to_string(),
                }));
            }
        }
    }
    Ok(Verdict::ok())
}

/// Discrete allocation: `owner[j]` holds item `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    pub owner: Vec<usize>,
}

impl Allocation {
    pub fn items_of(&self, agent: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&j| self.owner[j] == agent).collect()
    }

    fn validate(&self, n: usize, m: usize) -> Result<(), AllocError> {
        if self.owner.len() != m {
            return Err(AllocError::WrongAllocationSize { got: self.owner.len(), expected: m });
        }
        for (item, &agent) in self.owner.iter().enumerate() {
            if agent >= n {
                return Err(AllocError::OwnerOutOfRange { item, agent });
            }
        }
        Ok(())
    }
}

/// How the shared integer is turned into a quantile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// `(sigma + 1) / N`. With sigma uniform on `[0, N)` every column's
    /// realization frequencies match the matrix exactly.
    Shifted,
    /// `sigma / N`, the naive reading. The `sigma = 0` draw lands on the
    /// first agent of every column regardless of the matrix, so agent 0 gains
    /// one quantum per column and the last agent with positive probability
    /// loses one. Kept for comparison.
    Literal,
}

/// Smallest default modulus for `realize_assignment`: `(n!)^m`.
pub fn factorial_power_modulus(n: usize, m: usize) -> Result<u64, AllocError> {
    let f = factorial(n)?;
    let mut out: u64 = 1;
    for _ in 0..m {
        out = out.checked_mul(f).ok_or(AllocError::ModulusTooLarge)?;
    }
    Ok(out)
}

/// Least common multiple of all entry denominators, a valid (and usually much
/// smaller) modulus.
pub fn reduced_modulus(matrix: &RationalMatrix) -> Result<u64, AllocError> {
    let mut l = BigInt::from(1u64);
    for row in &matrix.p {
        for v in row {
            l = l.lcm(&v.denom());
        }
    }
    u64::try_from(l).map_err(|_| AllocError::ModulusTooLarge)
}

/// Turn the fractional matrix into a discrete allocation with one shared
/// draw: item `j` goes to the first agent whose running column prefix reaches
/// the quantile. A single sigma correlates the columns on purpose; only the
/// per-column marginals are guaranteed.
pub fn realize_assignment(
    matrix: &RationalMatrix,
    sigma: u64,
    modulus: u64,
    mode: DrawMode,
) -> Result<Allocation, AllocError> {
    let n = matrix.n();
    let m = matrix.m();
    matrix.validate(n, m)?;
    if sigma >= modulus {
        return Err(AllocError::SigmaOutOfRange { sigma, modulus });
    }
    let big_modulus = BigInt::from(modulus);
    for (row, r) in matrix.p.iter().enumerate() {
        for (col, v) in r.iter().enumerate() {
            if !big_modulus.is_multiple_of(&v.denom()) {
                return Err(AllocError::NotCommonDenominator {
                    modulus,
                    row,
                    col,
                    denom: v.denom().to_string(),
                });
            }
        }
    }
    let draw = match mode {
        DrawMode::Shifted => Rat::new((sigma + 1) as i64, modulus as i64),
        DrawMode::Literal => Rat::new(sigma as i64, modulus as i64),
    };
    let mut owner = Vec::with_capacity(m);
    for col in 0..m {
        let mut prefix = Rat::zero();
        let mut chosen = None;
        for agent in 0..n {
            prefix += &matrix.p[agent][col];
            if prefix >= draw {
                chosen = Some(agent);
                break;
            }
        }
        owner.push(chosen.expect("column sums to 1 and draw <= 1"));
    }
    Ok(Allocation { owner })
}

/// Agents pick their favourite remaining item in `order`; if there are more
/// items than agents the order repeats round-robin until everything is
/// assigned.
pub fn serial_dictatorship(
    order: &Permutation,
    instance: &AllocInstance,
) -> Result<Allocation, AllocError> {
    let n = instance.n();
    let m = instance.m();
    if order.len() != n {
        return Err(AllocError::WrongOrderSize { got: order.len(), expected: n });
    }
    let mut taken = vec![false; m];
    let mut owner = vec![0usize; m];
    for round in 0..m {
        let agent = order.as_slice()[round % n];
        let pick = *instance.prefs[agent]
            .iter()
            .find(|&&j| !taken[j])
            .expect("fewer rounds than items");
        taken[pick] = true;
        owner[pick] = agent;
    }
    Ok(Allocation { owner })
}

/// Audit record of one de-randomized random-priority run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RpTranscript {
    pub bids: Vec<u64>,
    pub order: Permutation,
    pub allocation: Allocation,
}

/// De-randomized random priority: bids in `[0, n!)` are summed mod `n!` and
/// decoded into the dictatorship order.
pub fn derand_rp(bids: &[u64], instance: &AllocInstance) -> Result<RpTranscript, AllocError> {
    let n = instance.n();
    let modulus = factorial(n)?;
    if bids.len() != n {
        return Err(AllocError::WrongBidCount { got: bids.len(), expected: n });
    }
    for (agent, &bid) in bids.iter().enumerate() {
        if bid >= modulus {
            return Err(AllocError::BidOutOfRange { agent, bid, modulus });
        }
    }
    let sum: u128 = bids.iter().map(|&b| b as u128).sum();
    let order = lehmer_decode((sum % modulus as u128) as u64, n)?;
    let allocation = serial_dictatorship(&order, instance)?;
    Ok(RpTranscript { bids: bids.to_vec(), order, allocation })
}

/// Maximum `n` for [`rp_distribution_oracle`].
pub const RP_ORACLE_MAX_AGENTS: usize = 7;

/// The exact random-priority distribution, by averaging serial dictatorship
/// over all `n!` orders. Exponential; guarded to `n <= 7`.
pub fn rp_distribution_oracle(instance: &AllocInstance) -> Result<RationalMatrix, AllocError> {
    let n = instance.n();
    let m = instance.m();
    if n > RP_ORACLE_MAX_AGENTS {
        return Err(AllocError::TooManyAgents { n, max: RP_ORACLE_MAX_AGENTS });
    }
    let total = factorial(n)?;
    let weight = Rat::new(1, total as i64);
    let mut p = vec![vec![Rat::zero(); m]; n];
    for code in 0..total {
        let order = lehmer_decode(code, n)?;
        let allocation = serial_dictatorship(&order, instance)?;
        for (item, &agent) in allocation.owner.iter().enumerate() {
            p[agent][item] += &weight;
        }
    }
    Ok(RationalMatrix { p })
}

/// Agent `envious` would trade assignment rows with `envied`: summing over
/// the top `prefix` items of their own ranking, the other row holds more.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SdEnvyWitness {
    pub envious: usize,
    pub envied: usize,
    pub prefix: usize,
}

/// Passes iff every agent's row stochastically dominates every other row
/// along the agent's own ranking.
pub fn sd_envy_free(
    matrix: &RationalMatrix,
    instance: &AllocInstance,
) -> Result<Verdict<SdEnvyWitness>, AllocError> {
    let n = instance.n();
    let m = instance.m();
    matrix.validate(n, m)?;
    for envious in 0..n {
        for envied in 0..n {
            if envied == envious {
                continue;
            }
            let mut own = Rat::zero();
            let mut other = Rat::zero();
            for (t, &item) in instance.prefs[envious].iter().enumerate() {
                own += &matrix.p[envious][item];
                other += &matrix.p[envied][item];
                if own < other {
                    return Ok(Verdict::fail(SdEnvyWitness {
                        envious,
                        envied,
                        prefix: t + 1,
                    }));
                }
            }
        }
    }
    Ok(Verdict::ok())
}

/// A cycle of items, each preferred to the next by an agent who nevertheless
/// holds a positive share of the next.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SdCycleWitness {
    pub cycle: Vec<usize>,
}

/// Passes iff the relation "some agent ranks `a` above `b` yet receives `b`
/// with positive probability" is acyclic over items, the standard ordinal
/// efficiency criterion.
pub fn sd_efficient(
    matrix: &RationalMatrix,
    instance: &AllocInstance,
) -> Result<Verdict<SdCycleWitness>, AllocError> {
    let n = instance.n();
    let m = instance.m();
    matrix.validate(n, m)?;
    let mut edge = vec![vec![false; m]; m];
    for agent in 0..n {
        for (pos, &b) in instance.prefs[agent].iter().enumerate() {
            if matrix.p[agent][b].is_positive() {
                for &a in &instance.prefs[agent][..pos] {
                    edge[a][b] = true;
                }
            }
        }
    }
    // Iterative DFS with colors; on a back edge, walk the stack to report the
    // cycle itself.
    let mut color = vec![0u8; m];
    for start in 0..m {
        if color[start] != 0 {
            continue;
        }
        let mut path: Vec<usize> = vec![start];
        let mut next_child = vec![0usize; 1];
        color[start] = 1;
        while let Some(&node) = path.last() {
            let child = (*next_child.last().unwrap()..m).find(|&c| edge[node][c]);
            match child {
                Some(c) => {
                    *next_child.last_mut().unwrap() = c + 1;
                    match color[c] {
                        0 => {
                            color[c] = 1;
                            path.push(c);
                            next_child.push(0);
                        }
                        1 => {
                            let from = path.iter().position(|&x| x == c).expect("on path");
                            return Ok(Verdict::fail(SdCycleWitness {
                                cycle: path[from..].to_vec(),
                            }));
                        }
                        _ => {}
                    }
                }
                None => {
                    color[node] = 2;
                    path.pop();
                    next_child.pop();
                }
            }
        }
    }
    Ok(Verdict::ok())
}

/// An alternative allocation that leaves every agent at least as well off and
/// someone strictly better, by prefix counts along each agent's ranking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParetoWitness {
    pub better: Allocation,
}

const PARETO_MAX_AGENTS: usize = 6;
const PARETO_MAX_SPACE: u64 = 2_000_000;

/// Bundle comparison: `counts[t]` is how many of the agent's top `t+1` items
/// they hold. One bundle weakly improves on another iff it dominates in every
/// prefix.
fn prefix_counts(instance: &AllocInstance, agent: usize, owner: &[usize]) -> Vec<usize> {
    let mut counts = Vec::with_capacity(instance.m());
    let mut acc = 0usize;
    for &item in &instance.prefs[agent] {
        if owner[item] == agent {
            acc += 1;
        }
        counts.push(acc);
    }
    counts
}

/// Exhaustive Pareto check over all `n^m` reallocations. Passes iff no
/// alternative weakly improves every agent's bundle (prefix counts over their
/// own ranking) and strictly improves at least one.
pub fn pareto_efficient(
    allocation: &Allocation,
    instance: &AllocInstance,
) -> Result<Verdict<ParetoWitness>, AllocError> {
    let n = instance.n();
    let m = instance.m();
    allocation.validate(n, m)?;
    if n > PARETO_MAX_AGENTS {
        return Err(AllocError::TooManyAllocations { n, m });
    }
    let mut space: u64 = 1;
    for _ in 0..m {
        space = space
            .checked_mul(n as u64)
            .filter(|&s| s <= PARETO_MAX_SPACE)
            .ok_or(AllocError::TooManyAllocations { n, m })?;
    }
    let base: Vec<Vec<usize>> =
        (0..n).map(|agent| prefix_counts(instance, agent, &allocation.owner)).collect();

    let mut owner = vec![0usize; m];
    loop {
        if owner != allocation.owner {
            let mut all_weak = true;
            let mut any_strict = false;
            for agent in 0..n {
                let alt = prefix_counts(instance, agent, &owner);
                if alt.iter().zip(&base[agent]).any(|(a, b)| a < b) {
                    all_weak = false;
                    break;
                }
                if alt.iter().zip(&base[agent]).any(|(a, b)| a > b) {
                    any_strict = true;
                }
            }
            if all_weak && any_strict {
                return Ok(Verdict::fail(ParetoWitness {
                    better: Allocation { owner },
                }));
            }
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(Verdict::ok());
            }
            pos -= 1;
            owner[pos] += 1;
            if owner[pos] < n {
                break;
            }
            owner[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(prefs: &[&[usize]]) -> AllocInstance {
        AllocInstance::new(prefs.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn perm(order: &[usize]) -> Permutation {
        Permutation::new(order.to_vec()).unwrap()
    }

    #[test]
    fn eating_splits_a_contested_item() {
        let (p, trace) = probabilistic_serial(&inst(&[&[0, 1], &[0, 1]])).unwrap();
        assert_eq!(p.p, vec![vec![r(1, 2), r(1, 2)], vec![r(1, 2), r(1, 2)]]);
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.steps[0].end, r(1, 2));
        assert_eq!(trace.steps[0].eaters, vec![2, 0]);
        assert_eq!(trace.steps[0].consumed, vec![0]);
        for item in 0..2 {
            assert_eq!(trace.consumed_of(item), Rat::one());
        }
    }

    #[test]
    fn eating_disjoint_tops_is_deterministic() {
        let (p, _) = probabilistic_serial(&inst(&[&[0, 1], &[1, 0]])).unwrap();
        assert_eq!(p.p, vec![vec![r(1, 1), r(0, 1)], vec![r(0, 1), r(1, 1)]]);
    }

    #[test]
    fn eating_identical_prefs_is_symmetric() {
        let (p, _) =
            probabilistic_serial(&inst(&[&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]])).unwrap();
        assert!(p.p.iter().all(|row| row.iter().all(|v| *v == r(1, 3))));
    }

    #[test]
    fn eating_handles_staggered_finishes() {
        // Agent 1 eats item 1 alone while agents 0 and 2 share item 0.
        let (p, trace) =
            probabilistic_serial(&inst(&[&[0, 1, 2], &[1, 0, 2], &[0, 2, 1]])).unwrap();
        assert_eq!(p.p[1][1], r(3, 4));
        assert_eq!(p.p[0][1], r(1, 4));
        assert_eq!(p.p[0][0], r(1, 2));
        assert_eq!(p.p[2][2], r(1, 2));
        assert_eq!(p.p[0][2], r(1, 4));
        p.validate(3, 3).unwrap();
        for item in 0..3 {
            assert_eq!(trace.consumed_of(item), Rat::one());
        }
    }

    #[test]
    fn denominator_bound_accepts_eating_outputs() {
        let (p, _) = probabilistic_serial(&inst(&[&[0, 1], &[0, 1]])).unwrap();
        assert!(denominator_bound_check(&p, 2, 2).unwrap().pass);
        let identity = RationalMatrix {
            p: vec![vec![r(1, 1), r(0, 1)], vec![r(0, 1), r(1, 1)]],
        };
        assert!(denominator_bound_check(&identity, 2, 2).unwrap().pass);
    }

    #[test]
    fn denominator_bound_rejects_a_fifth() {
        let p = RationalMatrix {
            p: vec![vec![r(1, 5), r(4, 5)], vec![r(4, 5), r(1, 5)]],
        };
        let verdict = denominator_bound_check(&p, 2, 2).unwrap();
        assert_eq!(
            verdict.witness(),
            Some(&DenominatorWitness { row: 0, col: 0, entry: "1/5".into() })
        );
    }

    fn half_matrix() -> RationalMatrix {
        RationalMatrix { p: vec![vec![r(1, 2), r(1, 2)], vec![r(1, 2), r(1, 2)]] }
    }

    #[test]
    fn realization_correlates_columns_through_one_draw() {
        let p = half_matrix();
        let a = realize_assignment(&p, 0, 4, DrawMode::Shifted).unwrap();
        assert_eq!(a.owner, vec![0, 0]);
        let a = realize_assignment(&p, 3, 4, DrawMode::Shifted).unwrap();
        assert_eq!(a.owner, vec![1, 1]);
        let identity = RationalMatrix {
            p: vec![vec![r(1, 1), r(0, 1)], vec![r(0, 1), r(1, 1)]],
        };
        for sigma in 0..4 {
            let a = realize_assignment(&identity, sigma, 4, DrawMode::Shifted).unwrap();
            assert_eq!(a.owner, vec![0, 1]);
        }
    }

    #[test]
    fn realization_validates_inputs() {
        let p = half_matrix();
        assert_eq!(
            realize_assignment(&p, 4, 4, DrawMode::Shifted),
            Err(AllocError::SigmaOutOfRange { sigma: 4, modulus: 4 })
        );
        assert!(matches!(
            realize_assignment(&p, 0, 3, DrawMode::Shifted),
            Err(AllocError::NotCommonDenominator { modulus: 3, .. })
        ));
    }

    #[test]
    fn shifted_draw_has_exact_marginals() {
        let (p, _) = probabilistic_serial(&inst(&[&[0, 1, 2], &[1, 0, 2], &[0, 2, 1]])).unwrap();
        let modulus = reduced_modulus(&p).unwrap();
        let mut freq = vec![vec![0u64; 3]; 3];
        for sigma in 0..modulus {
            let a = realize_assignment(&p, sigma, modulus, DrawMode::Shifted).unwrap();
            for (item, &agent) in a.owner.iter().enumerate() {
                freq[agent][item] += 1;
            }
        }
        for agent in 0..3 {
            for item in 0..3 {
                assert_eq!(r(freq[agent][item] as i64, modulus as i64), p.p[agent][item]);
            }
        }
    }

    /// The literal draw shifts one quantum per column: agent 0 gains the
    /// sigma = 0 case and the last agent with positive probability loses it
    /// (they cancel when agent 0 owns the whole column).
    #[test]
    fn literal_draw_is_biased_by_one_quantum() {
        let instances = [
            inst(&[&[0, 1, 2], &[1, 0, 2], &[0, 2, 1]]),
            inst(&[&[0, 1], &[0, 1]]),
            inst(&[&[1, 0], &[1, 0]]),
        ];
        for instance in &instances {
            let (p, _) = probabilistic_serial(instance).unwrap();
            let (n, m) = (instance.n(), instance.m());
            let modulus = reduced_modulus(&p).unwrap();
            let mut freq = vec![vec![0i64; m]; n];
            for sigma in 0..modulus {
                let a = realize_assignment(&p, sigma, modulus, DrawMode::Literal).unwrap();
                for (item, &agent) in a.owner.iter().enumerate() {
                    freq[agent][item] += 1;
                }
            }
            for item in 0..m {
                let last_positive =
                    (0..n).rev().find(|&i| p.p[i][item].is_positive()).unwrap();
                for agent in 0..n {
                    let mut expected = p.p[agent][item].clone();
                    if agent == 0 {
                        expected += r(1, modulus as i64);
                    }
                    if agent == last_positive {
                        expected -= r(1, modulus as i64);
                    }
                    assert_eq!(
                        r(freq[agent][item], modulus as i64),
                        expected,
                        "agent {agent}, item {item}"
                    );
                }
            }
        }
    }

    #[test]
    fn dictatorship_order_settles_conflicts() {
        let a = serial_dictatorship(&perm(&[0, 1]), &inst(&[&[0, 1], &[0, 1]])).unwrap();
        assert_eq!(a.owner, vec![0, 1]);
        let disjoint = inst(&[&[0, 1], &[1, 0]]);
        for order in [[0, 1], [1, 0]] {
            let a = serial_dictatorship(&perm(&order), &disjoint).unwrap();
            assert_eq!(a.owner, vec![0, 1]);
        }
        let a = serial_dictatorship(&perm(&[2, 0, 1]), &inst(&[&[0, 1, 2][..]; 3])).unwrap();
        assert_eq!(a.owner, vec![2, 0, 1]);
    }

    #[test]
    fn dictatorship_cycles_when_items_outnumber_agents() {
        let instance = AllocInstance::new(vec![vec![0, 1, 2, 3, 4], vec![4, 3, 2, 1, 0]]).unwrap();
        let a = serial_dictatorship(&perm(&[1, 0]), &instance).unwrap();
        // Picks: agent 1 takes 4, agent 0 takes 0, agent 1 takes 3, agent 0
        // takes 1, agent 1 takes 2.
        assert_eq!(a.owner, vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn rp_bids_pick_the_order() {
        let instance = inst(&[&[0, 1], &[0, 1]]);
        let t = derand_rp(&[1, 1], &instance).unwrap();
        assert_eq!(t.order, perm(&[0, 1]));
        let t = derand_rp(&[0, 1], &instance).unwrap();
        assert_eq!(t.order, perm(&[1, 0]));
        assert_eq!(t.allocation.owner, vec![1, 0]);
        let t = derand_rp(&[0, 0], &instance).unwrap();
        assert_eq!(t.order, perm(&[0, 1]));
        assert_eq!(
            derand_rp(&[2, 0], &instance),
            Err(AllocError::BidOutOfRange { agent: 0, bid: 2, modulus: 2 })
        );
    }

    #[test]
    fn rp_oracle_matches_hand_counts() {
        let oracle = rp_distribution_oracle(&inst(&[&[0, 1], &[0, 1]])).unwrap();
        assert_eq!(oracle, half_matrix());
        let oracle = rp_distribution_oracle(&inst(&[&[0, 1], &[1, 0]])).unwrap();
        assert_eq!(oracle.p, vec![vec![r(1, 1), r(0, 1)], vec![r(0, 1), r(1, 1)]]);
        let oracle = rp_distribution_oracle(&inst(&[&[0, 1, 2][..]; 3])).unwrap();
        assert!(oracle.p.iter().all(|row| row.iter().all(|v| *v == r(1, 3))));
    }

    #[test]
    fn bid_enumeration_reproduces_the_rp_oracle() {
        let instances = [
            inst(&[&[0, 1, 2], &[1, 0, 2], &[0, 2, 1]]),
            inst(&[&[0, 1, 2], &[0, 1, 2], &[2, 1, 0]]),
        ];
        for instance in &instances {
            let n = instance.n();
            let total = factorial(n).unwrap();
            let oracle = rp_distribution_oracle(instance).unwrap();
            let mut freq = vec![vec![0u64; instance.m()]; n];
            // One bid sweep covers every seed: the sum mod n! takes each
            // value exactly once as a single bid varies.
            for seed in 0..total {
                let mut bids = vec![0u64; n];
                bids[0] = seed;
                let t = derand_rp(&bids, instance).unwrap();
                for (item, &agent) in t.allocation.owner.iter().enumerate() {
                    freq[agent][item] += 1;
                }
            }
            for agent in 0..n {
                for item in 0..instance.m() {
                    assert_eq!(
                        r(freq[agent][item] as i64, total as i64),
                        oracle.p[agent][item]
                    );
                }
            }
        }
    }

    #[test]
    fn sd_envy_verdicts() {
        let instance = inst(&[&[0, 1], &[0, 1]]);
        let (p, _) = probabilistic_serial(&instance).unwrap();
        assert!(sd_envy_free(&p, &instance).unwrap().pass);
        let skewed = RationalMatrix {
            p: vec![vec![r(0, 1), r(1, 1)], vec![r(1, 1), r(0, 1)]],
        };
        let verdict = sd_envy_free(&skewed, &instance).unwrap();
        assert_eq!(
            verdict.witness(),
            Some(&SdEnvyWitness { envious: 0, envied: 1, prefix: 1 })
        );
        let one = AllocInstance::new(vec![vec![0]]).unwrap();
        let (p1, _) = probabilistic_serial(&one).unwrap();
        assert!(sd_envy_free(&p1, &one).unwrap().pass);
    }

    #[test]
    fn sd_efficiency_verdicts() {
        let opposed = inst(&[&[0, 1], &[1, 0]]);
        let coin = half_matrix();
        let verdict = sd_efficient(&coin, &opposed).unwrap();
        assert!(!verdict.pass);
        let cycle = &verdict.witness().unwrap().cycle;
        assert_eq!(cycle.len(), 2);
        let (p, _) = probabilistic_serial(&opposed).unwrap();
        assert!(sd_efficient(&p, &opposed).unwrap().pass);
        let aligned = inst(&[&[0, 1], &[0, 1]]);
        let (p, _) = probabilistic_serial(&aligned).unwrap();
        assert!(sd_efficient(&p, &aligned).unwrap().pass);
    }

    #[test]
    fn pareto_verdicts() {
        let instance = inst(&[&[0, 1], &[1, 0]]);
        let good = Allocation { owner: vec![0, 1] };
        assert!(pareto_efficient(&good, &instance).unwrap().pass);
        let swapped = Allocation { owner: vec![1, 0] };
        let verdict = pareto_efficient(&swapped, &instance).unwrap();
        assert_eq!(verdict.witness().unwrap().better.owner, vec![0, 1]);
        let one = AllocInstance::new(vec![vec![0]]).unwrap();
        assert!(pareto_efficient(&Allocation { owner: vec![0] }, &one).unwrap().pass);
    }

    #[test]
    fn dictatorship_outputs_are_pareto_efficient() {
        let instances = [
            inst(&[&[0, 1, 2], &[1, 0, 2], &[0, 2, 1]]),
            inst(&[&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]]),
            inst(&[&[2, 1, 0], &[1, 0, 2], &[0, 2, 1]]),
        ];
        for instance in &instances {
            for code in 0..factorial(3).unwrap() {
                let order = lehmer_decode(code, 3).unwrap();
                let a = serial_dictatorship(&order, instance).unwrap();
                assert!(
                    pareto_efficient(&a, instance).unwrap().pass,
                    "order {order:?} on {instance:?}"
                );
            }
        }
    }

    /// With the order fixed, reporting your true ranking gets you the best
    /// item you can get: exhaustive over all misreports at n = m = 3.
    #[test]
    fn dictators_cannot_gain_by_misreporting() {
        let n = 3;
        let total = factorial(n).unwrap();
        let rankings: Vec<Vec<usize>> = (0..total)
            .map(|c| lehmer_decode(c, n).unwrap().as_slice().to_vec())
            .collect();
        let mut profile_idx = [0usize; 3];
        loop {
            let instance = AllocInstance::new(
                profile_idx.iter().map(|&i| rankings[i].clone()).collect(),
            )
            .unwrap();
            for order_code in 0..total {
                let order = lehmer_decode(order_code, n).unwrap();
                let honest = serial_dictatorship(&order, &instance).unwrap();
                for agent in 0..n {
                    let honest_rank = honest
                        .items_of(agent)
                        .iter()
                        .map(|&j| instance.rank_of(agent, j))
                        .min()
                        .unwrap();
                    for lie in &rankings {
                        let mut prefs: Vec<Vec<usize>> = instance.rankings().to_vec();
                        prefs[agent] = lie.clone();
                        let deviated = AllocInstance::new(prefs).unwrap();
                        let a = serial_dictatorship(&order, &deviated).unwrap();
                        let lied_rank = a
                            .items_of(agent)
                            .iter()
                            .map(|&j| instance.rank_of(agent, j))
                            .min()
                            .unwrap();
                        assert!(lied_rank >= honest_rank, "agent {agent} gained");
                    }
                }
            }
            let mut pos = 3;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                profile_idx[pos] += 1;
                if profile_idx[pos] < rankings.len() {
                    break;
                }
                profile_idx[pos] = 0;
            }
        }
    }

    #[test]
    fn instance_validation() {
        assert_eq!(AllocInstance::new(vec![]), Err(AllocError::NoAgents));
        assert_eq!(
            AllocInstance::new(vec![vec![0, 1], vec![0, 0]]),
            Err(AllocError::BadPrefs { agent: 1, m: 2 })
        );
        assert_eq!(
            AllocInstance::new(vec![vec![0, 2]]),
            Err(AllocError::BadPrefs { agent: 0, m: 2 })
        );
    }

    #[test]
    fn matrix_validation() {
        let bad_col = RationalMatrix {
            p: vec![vec![r(1, 2), r(1, 2)], vec![r(1, 4), r(1, 2)]],
        };
        assert!(matches!(
            bad_col.validate(2, 2),
            Err(AllocError::BadColumnSum { col: 0, .. })
        ));
        let negative = RationalMatrix {
            p: vec![vec![r(-1, 2), r(3, 2)], vec![r(3, 2), r(-1, 2)]],
        };
        assert!(matches!(
            negative.validate(2, 2),
            Err(AllocError::EntryOutOfRange { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn modulus_helpers() {
        assert_eq!(factorial_power_modulus(2, 2).unwrap(), 4);
        assert_eq!(factorial_power_modulus(3, 2).unwrap(), 36);
        let (p, _) = probabilistic_serial(&inst(&[&[0, 1], &[0, 1]])).unwrap();
        assert_eq!(reduced_modulus(&p).unwrap(), 2);
    }
}
