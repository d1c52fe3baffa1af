//! Permutations, the factorial number system, and a compact priority game.
//!
//! Two ways to turn submitted integers into a shared random-looking
//! permutation:
//!
//! * **Lehmer codes**: a bijection between `[0, n!)` and permutations of
//!   `n` elements. Agents submit integers mod `n!`; the sum decodes to a
//!   permutation. Exact, but bids need `Theta(n log n)` bits.
//! * **Compact bids**: each agent submits at most two small integers
//!   (`O(log n)` bits total) and the permutation is assembled position by
//!   position from pairs of bids contributed by *different* agents, so no
//!   single agent controls any position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermuteError {
    #[error("n = {n} exceeds factorial capacity (max 20)")]
    FactorialOverflow { n: usize },
    #[error("code {code} out of range [0, {max}) for n = {n}")]
    CodeOutOfRange { code: u64, n: usize, max: u64 },
    #[error("not a permutation: {0}")]
    NotAPermutation(String),
    #[error("need at least {min} elements, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("student {student}: bid {field} = {value} out of range [0, {limit})")]
    BidOutOfRange { student: usize, field: char, value: u64, limit: u64 },
    #[error("student {student}: missing bid {field}")]
    MissingBid { student: usize, field: char },
    #[error("student {student}: bid {field} must be absent for this n")]
    UnexpectedBid { student: usize, field: char },
    #[error("bid list has {got} entries, expected {expected}")]
    WrongBidCount { got: usize, expected: usize },
}

/// `n!` as a `u64`. Fails for `n > 20`.
pub fn factorial(n: usize) -> Result<u64, PermuteError> {
    if n > 20 {
        return Err(PermuteError::FactorialOverflow { n });
    }
    Ok((1..=n as u64).product())
}

/// A permutation of `0..n`, kept valid by construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(elems: Vec<usize>) -> Result<Self, PermuteError> {
        let n = elems.len();
        let mut seen = vec![false; n];
        for &e in &elems {
            if e >= n {
                return Err(PermuteError::NotAPermutation(format!(
                    "entry {e} out of range for length {n}"
                )));
            }
            if seen[e] {
                return Err(PermuteError::NotAPermutation(format!("entry {e} repeats")));
            }
            seen[e] = true;
        }
        Ok(Permutation(elems))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Index at which `element` appears.
    pub fn position_of(&self, element: usize) -> Option<usize> {
        self.0.iter().position(|&e| e == element)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = PermuteError;
    fn try_from(v: Vec<usize>) -> Result<Self, PermuteError> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.0
    }
}

/// Decode `code` in `[0, n!)` to a permutation of `0..n`.
///
/// The code is read in the factorial number system, most significant digit
/// first: digit `d_i = floor(code / i!)` for `i = n-1, ..., 1` (taking
/// remainders as we go), and each digit picks the `d`-th element of the
/// ascending list of values not used yet.
pub fn lehmer_decode(code: u64, n: usize) -> Result<Permutation, PermuteError> {
    let max = factorial(n)?;
    if code >= max {
        return Err(PermuteError::CodeOutOfRange { code, n, max });
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    let mut rest = code;
    for i in (0..n).rev() {
        let f = factorial(i)?;
        let d = (rest / f) as usize;
        rest %= f;
        out.push(remaining.remove(d));
    }
    Ok(Permutation(out))
}

/// Inverse of [`lehmer_decode`].
pub fn lehmer_encode(perm: &Permutation) -> Result<u64, PermuteError> {
    let n = perm.len();
    factorial(n)?;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut code = 0u64;
    for (pos, e) in perm.iter().enumerate() {
        let d = remaining.iter().position(|&r| r == e).expect("valid permutation");
        remaining.remove(d);
        code += d as u64 * factorial(n - 1 - pos)?;
    }
    Ok(code)
}

/// Bids for the compact priority game on `n` students.
///
/// Entry `a[i]` / `b[i]` is `None` when student `i` does not submit that
/// component for the given `n`. Legal shapes (writing `n = 2k` or
/// `n = 2k + 1`):
///
/// * every `n`: `b[0] in [0, n)`, `a[n-1] in [0, n)`;
/// * `0 < i < n-1`: `a[i] in [0, i]` and `b[i] in [0, n-i)`;
/// * odd `n` only: additionally `a[0] in [0, k]` and `b[n-1] in [0, k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactBids {
    pub a: Vec<Option<u64>>,
    pub b: Vec<Option<u64>>,
}

/// Number of legal values for each bid component (a value `v` is legal when
/// `v < count`). `None` marks components that must be absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactRanges {
    pub a: Vec<Option<u64>>,
    pub b: Vec<Option<u64>>,
}

/// Legal bid ranges for `n` students, expressed as exclusive upper bounds.
pub fn compact_ranges(n: usize) -> Result<CompactRanges, PermuteError> {
    if n < 2 {
        return Err(PermuteError::TooSmall { n, min: 2 });
    }
    let odd = n % 2 == 1;
    let k = (n / 2) as u64;
    let mut a = vec![None; n];
    let mut b = vec![None; n];
    b[0] = Some(n as u64);
    a[n - 1] = Some(n as u64);
    for i in 1..n - 1 {
        a[i] = Some(i as u64 + 1);
        b[i] = Some((n - i) as u64);
    }
    if odd {
        a[0] = Some(k + 1);
        b[n - 1] = Some(k + 1);
    }
    Ok(CompactRanges { a, b })
}

impl CompactBids {
    /// All-zero bids of the right shape for `n` students.
    pub fn zeros(n: usize) -> Result<Self, PermuteError> {
        let r = compact_ranges(n)?;
        Ok(CompactBids {
            a: r.a.iter().map(|x| x.map(|_| 0)).collect(),
            b: r.b.iter().map(|x| x.map(|_| 0)).collect(),
        })
    }

    pub fn validate(&self, n: usize) -> Result<(), PermuteError> {
        let ranges = compact_ranges(n)?;
        if self.a.len() != n {
            return Err(PermuteError::WrongBidCount { got: self.a.len(), expected: n });
        }
        if self.b.len() != n {
            return Err(PermuteError::WrongBidCount { got: self.b.len(), expected: n });
        }
        for (field, bids, limits) in [('a', &self.a, &ranges.a), ('b', &self.b, &ranges.b)] {
            for i in 0..n {
                match (bids[i], limits[i]) {
                    (Some(v), Some(limit)) => {
                        if v >= limit {
                            return Err(PermuteError::BidOutOfRange {
                                student: i,
                                field,
                                value: v,
                                limit,
                            });
                        }
                    }
                    (None, Some(_)) => {
                        return Err(PermuteError::MissingBid { student: i, field })
                    }
                    (Some(_), None) => {
                        return Err(PermuteError::UnexpectedBid { student: i, field })
                    }
                    (None, None) => {}
                }
            }
        }
        Ok(())
    }
}

/// Build a priority order over students `0..n` from compact bids.
///
/// Position `0` is filled by student number `(a[n-1] + b[0]) mod n`. Each
/// later position `p` computes `(a[n-1-p] + b[p]) mod (n-p)` and takes the
/// element with that index in the *descending* list of students not yet
/// placed. For odd `n = 2k + 1` the pair at position `k` would come from a
/// single student, so that position instead uses
/// `(a[k] + b[k] + a[0] + b[n-1]) mod (k+1)`. The final position takes the
/// only student left. Every position mixes bids from at least two students,
/// and each bid component ranges over a complete residue system for its
/// position's modulus, so one honest-uniform student already makes the whole
/// permutation uniform.
pub fn compact_priority_order(bids: &CompactBids, n: usize) -> Result<Permutation, PermuteError> {
    bids.validate(n)?;
    let odd = n % 2 == 1;
    let k = n / 2;

    let a = |i: usize| bids.a[i].expect("validated");
    let b = |i: usize| bids.b[i].expect("validated");

    let mut out = Vec::with_capacity(n);
    let first = ((a(n - 1) + b(0)) % n as u64) as usize;
    out.push(first);
    // Students not yet placed, kept in descending order.
    let mut remaining: Vec<usize> = (0..n).rev().filter(|&s| s != first).collect();
    for p in 1..n - 1 {
        let modulus = (n - p) as u64;
        let idx = if odd && p == k {
            (a(k) + b(k) + a(0) + b(n - 1)) % modulus
        } else {
            (a(n - 1 - p) + b(p)) % modulus
        };
        out.push(remaining.remove(idx as usize));
    }
    out.push(remaining.pop().expect("one student left"));
    debug_assert!(remaining.is_empty());
    Permutation::new(out)
}

/// Iterate over every legal bid assignment for `n` students.
/// Intended for exhaustive checks at small `n`.
pub fn enumerate_compact_bids(n: usize) -> Result<Vec<CompactBids>, PermuteError> {
    let ranges = compact_ranges(n)?;
    let mut out = vec![CompactBids { a: vec![None; n], b: vec![None; n] }];
    let extend = |out: &mut Vec<CompactBids>, field: char, i: usize, limit: u64| {
        let mut next = Vec::with_capacity(out.len() * limit as usize);
        for base in out.iter() {
            for v in 0..limit {
                let mut bids = base.clone();
                match field {
                    'a' => bids.a[i] = Some(v),
                    _ => bids.b[i] = Some(v),
                }
                next.push(bids);
            }
        }
        *out = next;
    };
    for i in 0..n {
        if let Some(limit) = ranges.a[i] {
            extend(&mut out, 'a', i, limit);
        }
        if let Some(limit) = ranges.b[i] {
            extend(&mut out, 'b', i, limit);
        }
    }
    Ok(out)
}
