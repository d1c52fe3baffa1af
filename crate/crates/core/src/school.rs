//! School choice: student-proposing deferred acceptance with coarse school
//! priorities, where the tie-breaking lottery is replaced by a permutation
//! game played by the students.
//!
//! Schools rank students only up to ordered priority groups (say, siblings
//! before everyone else). Ties inside a group are broken by a single shared
//! permutation of the students, obtained either from bids in `[0, n!)` summed
//! mod `n!` (Lehmer mode) or from the compact per-position bid game (compact
//! mode). The resulting strict priorities feed classic deferred acceptance,
//! and every outcome is stable with respect to them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permute::{
    compact_priority_order, factorial, lehmer_decode, CompactBids, Permutation, PermuteError,
};
use crate::verdict::Verdict;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchoolError {
    #[error("school {school}: capacity must be at least 1")]
    BadCapacity { school: usize },
    #[error("school {school}: groups do not partition the student set")]
    BadGroups { school: usize },
    #[error("student {student}: preference list repeats a school or names an unknown one")]
    BadPrefs { student: usize },
    #[error("expected {expected} strict priority orders, got {got}")]
    WrongPriorityCount { got: usize, expected: usize },
    #[error("school {school}: priority order is not a permutation of the students")]
    BadPriority { school: usize },
    #[error("expected {expected} bids, got {got}")]
    WrongBidCount { got: usize, expected: usize },
    #[error("student {student}: bid {bid} out of range, must be below {modulus}")]
    BidOutOfRange { student: usize, bid: u64, modulus: u64 },
    #[error("matching covers {got} students, expected {expected}")]
    WrongMatchingSize { got: usize, expected: usize },
    #[error("student {student} is matched to unknown school {school}")]
    SchoolOutOfRange { student: usize, school: usize },
    #[error("student {student} is matched to school {school}, which they did not list")]
    UnlistedAssignment { student: usize, school: usize },
    #[error("school {school} holds more students than its capacity")]
    OverCapacity { school: usize },
    #[error(transparent)]
    Permute(#[from] PermuteError),
}

/// A student's strict ranking over schools, best first. Schools left off the
/// list are unacceptable and never proposed to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Student {
    pub prefs: Vec<usize>,
}

/// A school's seats and its coarse priorities: an ordered partition of the
/// students, earlier groups strictly preferred to later ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct School {
    pub capacity: usize,
    pub groups: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchoolInstance {
    pub students: Vec<Student>,
    pub schools: Vec<School>,
}

impl SchoolInstance {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_schools(&self) -> usize {
        self.schools.len()
    }

    pub fn validate(&self) -> Result<(), SchoolError> {
        let n = self.students.len();
        let m = self.schools.len();
        for (student, s) in self.students.iter().enumerate() {
            let mut seen = vec![false; m];
            for &c in &s.prefs {
                if c >= m || std::mem::replace(&mut seen[c], true) {
                    return Err(SchoolError::BadPrefs { student });
                }
            }
        }
        for (school, c) in self.schools.iter().enumerate() {
            if c.capacity == 0 {
                return Err(SchoolError::BadCapacity { school });
            }
            let mut seen = vec![false; n];
            let mut count = 0;
            for group in &c.groups {
                for &s in group {
                    if s >= n || std::mem::replace(&mut seen[s], true) {
                        return Err(SchoolError::BadGroups { school });
                    }
                    count += 1;
                }
            }
            if count != n {
                return Err(SchoolError::BadGroups { school });
            }
        }
        Ok(())
    }
}

/// Assignment of students to schools; `None` is unmatched.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching {
    pub assignment: Vec<Option<usize>>,
}

impl Matching {
    pub fn school_of(&self, student: usize) -> Option<usize> {
        self.assignment[student]
    }

    fn validate(&self, instance: &SchoolInstance) -> Result<(), SchoolError> {
        let n = instance.n_students();
        if self.assignment.len() != n {
            return Err(SchoolError::WrongMatchingSize { got: self.assignment.len(), expected: n });
        }
        let mut load = vec![0usize; instance.n_schools()];
        for (student, &assigned) in self.assignment.iter().enumerate() {
            if let Some(school) = assigned {
                if school >= instance.n_schools() {
                    return Err(SchoolError::SchoolOutOfRange { student, school });
                }
                if !instance.students[student].prefs.contains(&school) {
                    return Err(SchoolError::UnlistedAssignment { student, school });
                }
                load[school] += 1;
            }
        }
        for (school, &l) in load.iter().enumerate() {
            if l > instance.schools[school].capacity {
                return Err(SchoolError::OverCapacity { school });
            }
        }
        Ok(())
    }
}

/// Refine one school's ordered groups into a strict priority order: groups
/// keep their order, and students inside a group are sorted by their position
/// in `perm`.
pub fn tie_break(groups: &[Vec<usize>], perm: &Permutation) -> Result<Vec<usize>, SchoolError> {
    let n = perm.len();
    let mut order = Vec::with_capacity(n);
    for group in groups {
        let mut members: Vec<usize> = group.clone();
        for &s in &members {
            if s >= n {
                return Err(SchoolError::BadGroups { school: usize::MAX });
            }
        }
        members.sort_by_key(|&s| perm.position_of(s).expect("checked in range"));
        order.extend(members);
    }
    Ok(order)
}

fn validate_priorities(
    instance: &SchoolInstance,
    priorities: &[Vec<usize>],
) -> Result<(), SchoolError> {
    let n = instance.n_students();
    if priorities.len() != instance.n_schools() {
        return Err(SchoolError::WrongPriorityCount {
            got: priorities.len(),
            expected: instance.n_schools(),
        });
    }
    for (school, order) in priorities.iter().enumerate() {
        let mut seen = vec![false; n];
        if order.len() != n
            || !order.iter().all(|&s| s < n && !std::mem::replace(&mut seen[s], true))
        {
            return Err(SchoolError::BadPriority { school });
        }
    }
    Ok(())
}

/// Student-proposing deferred acceptance under the given strict priorities.
/// Unmatched students propose down their lists; schools tentatively hold
/// their best proposers up to capacity. Students with exhausted lists stay
/// unmatched.
pub fn deferred_acceptance(
    instance: &SchoolInstance,
    priorities: &[Vec<usize>],
) -> Result<Matching, SchoolError> {
    instance.validate()?;
    validate_priorities(instance, priorities)?;
    let n = instance.n_students();
    let rank: Vec<Vec<usize>> = priorities
        .iter()
        .map(|order| {
            let mut r = vec![0usize; n];
            for (pos, &s) in order.iter().enumerate() {
                r[s] = pos;
            }
            r
        })
        .collect();

    let mut next_choice = vec![0usize; n];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); instance.n_schools()];
    let mut queue: Vec<usize> = (0..n).collect();
    while let Some(student) = queue.pop() {
        let prefs = &instance.students[student].prefs;
        if next_choice[student] >= prefs.len() {
            continue;
        }
        let school = prefs[next_choice[student]];
        next_choice[student] += 1;
        let seats = instance.schools[school].capacity;
        if held[school].len() < seats {
            held[school].push(student);
            continue;
        }
        let (worst_idx, &worst) = held[school]
            .iter()
            .enumerate()
            .max_by_key(|&(_, &s)| rank[school][s])
            .expect("school at capacity holds someone");
        if rank[school][student] < rank[school][worst] {
            held[school][worst_idx] = student;
            queue.push(worst);
        } else {
            queue.push(student);
        }
    }

    let mut assignment = vec![None; n];
    for (school, students) in held.iter().enumerate() {
        for &s in students {
            assignment[s] = Some(school);
        }
    }
    Ok(Matching { assignment })
}

/// Bids for the tie-breaking permutation game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolBids {
    /// One integer in `[0, n!)` per student; the sum mod `n!` is decoded.
    Lehmer(Vec<u64>),
    /// The compact per-position construction.
    Compact(CompactBids),
}

/// Full audit record of one run: the bids, the permutation they decode to,
/// the tie-broken priorities, and the matching.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchoolTranscript {
    pub bids: SchoolBids,
    pub perm: Permutation,
    pub priorities: Vec<Vec<usize>>,
    pub matching: Matching,
}

/// Decode the permutation a bid vector selects, without running the match.
pub fn school_perm(bids: &SchoolBids, n: usize) -> Result<Permutation, SchoolError> {
    match bids {
        SchoolBids::Lehmer(bids) => {
            let modulus = factorial(n)?;
            if bids.len() != n {
                return Err(SchoolError::WrongBidCount { got: bids.len(), expected: n });
            }
            for (student, &bid) in bids.iter().enumerate() {
                if bid >= modulus {
                    return Err(SchoolError::BidOutOfRange { student, bid, modulus });
                }
            }
            let sum: u128 = bids.iter().map(|&b| b as u128).sum();
            Ok(lehmer_decode((sum % modulus as u128) as u64, n)?)
        }
        SchoolBids::Compact(bids) => Ok(compact_priority_order(bids, n)?),
    }
}

/// The de-randomized mechanism: decode the students' bids into one shared
/// permutation, tie-break every school's groups with it, and run deferred
/// acceptance.
pub fn derand_da(
    instance: &SchoolInstance,
    bids: &SchoolBids,
) -> Result<SchoolTranscript, SchoolError> {
    instance.validate()?;
    let perm = school_perm(bids, instance.n_students())?;
    let priorities: Vec<Vec<usize>> = instance
        .schools
        .iter()
        .map(|school| tie_break(&school.groups, &perm))
        .collect::<Result<_, _>>()?;
    let matching = deferred_acceptance(instance, &priorities)?;
    Ok(SchoolTranscript { bids: bids.clone(), perm, priorities, matching })
}

/// A student and a school that would rather have each other than their
/// assignments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockingPair {
    pub student: usize,
    pub school: usize,
}

/// Passes iff no student prefers a school (among those they listed) that has
/// a free seat or holds a student with lower strict priority.
pub fn is_stable(
    instance: &SchoolInstance,
    priorities: &[Vec<usize>],
    matching: &Matching,
) -> Result<Verdict<BlockingPair>, SchoolError> {
    instance.validate()?;
    validate_priorities(instance, priorities)?;
    matching.validate(instance)?;
    let n = instance.n_students();
    let rank: Vec<Vec<usize>> = priorities
        .iter()
        .map(|order| {
            let mut r = vec![0usize; n];
            for (pos, &s) in order.iter().enumerate() {
                r[s] = pos;
            }
            r
        })
        .collect();
    let mut load = vec![0usize; instance.n_schools()];
    for &assigned in &matching.assignment {
        if let Some(school) = assigned {
            load[school] += 1;
        }
    }

    for (student, s) in instance.students.iter().enumerate() {
        for &school in &s.prefs {
            if matching.school_of(student) == Some(school) {
                break;
            }
            let blocked = if load[school] < instance.schools[school].capacity {
                true
            } else {
                (0..n).any(|other| {
                    matching.school_of(other) == Some(school)
                        && rank[school][other] > rank[school][student]
                })
            };
            if blocked {
                return Ok(Verdict::fail(BlockingPair { student, school }));
            }
        }
    }
    Ok(Verdict::ok())
}
