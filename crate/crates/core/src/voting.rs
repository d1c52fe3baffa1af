//! Random dictator, de-randomized.
//!
//! Each voter submits a ballot: a candidate name plus an integer in
//! `[0, n)`. The sum of the integers mod `n` picks the voter whose candidate
//! wins. With everyone else uniform the selected index is uniform no matter
//! what one voter does, so sincere reporting plus uniform mixing is an
//! equilibrium, and the winner is always somebody's submitted candidate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VotingError {
    #[error("no ballots")]
    Empty,
    #[error("voter {voter}: integer {value} out of range [0, {n})")]
    IntegerOutOfRange { voter: usize, value: u64, n: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictatorBallot {
    /// Game integer in `[0, n)` where `n` is the number of voters.
    pub integer: u64,
    /// The candidate this voter reports.
    pub report: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DictatorOutcome {
    /// Index of the voter whose ballot was selected.
    pub dictator: usize,
    /// The winning candidate (the selected voter's report).
    pub winner: String,
}

/// Select ballot `(sum of integers) mod n` and return its candidate.
pub fn derand_dictator(ballots: &[DictatorBallot]) -> Result<DictatorOutcome, VotingError> {
    let n = ballots.len();
    if n == 0 {
        return Err(VotingError::Empty);
    }
    let mut sum: u64 = 0;
    for (voter, ballot) in ballots.iter().enumerate() {
        if ballot.integer >= n as u64 {
            return Err(VotingError::IntegerOutOfRange { voter, value: ballot.integer, n });
        }
        sum = (sum + ballot.integer) % n as u64;
    }
    let dictator = sum as usize;
    Ok(DictatorOutcome { dictator, winner: ballots[dictator].report.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rat;

    fn ballots(ints: &[u64], names: &[&str]) -> Vec<DictatorBallot> {
        ints.iter()
            .zip(names)
            .map(|(&integer, &report)| DictatorBallot { integer, report: report.to_string() })
            .collect()
    }

    #[test]
    fn selects_the_sum_mod_n_ballot() {
        let out = derand_dictator(&ballots(&[1, 2, 2], &["A", "B", "C"])).unwrap();
        assert_eq!(out.dictator, 2);
        assert_eq!(out.winner, "C");

        let out = derand_dictator(&ballots(&[0], &["A"])).unwrap();
        assert_eq!(out.winner, "A");
    }

    #[test]
    fn range_and_empty_errors() {
        assert_eq!(
            derand_dictator(&ballots(&[0, 3], &["A", "B"])),
            Err(VotingError::IntegerOutOfRange { voter: 1, value: 3, n: 2 })
        );
        assert_eq!(derand_dictator(&[]), Err(VotingError::Empty));
    }

    #[test]
    fn winner_is_always_a_submitted_candidate() {
        let names = ["A", "B", "C", "D"];
        for a in 0..4u64 {
            for b in 0..4u64 {
                for c in 0..4u64 {
                    for d in 0..4u64 {
                        let out = derand_dictator(&ballots(&[a, b, c, d], &names)).unwrap();
                        assert!(names.contains(&out.winner.as_str()));
                    }
                }
            }
        }
    }

    /// With the other voters mixing uniformly, a voter's expected chance of
    /// electing their true favourite is maximized by reporting it, whatever
    /// integer they play: the selected index stays uniform, so the win
    /// probability is just (number of ballots naming the favourite) / n.
    #[test]
    fn sincere_reporting_maximizes_utility_against_uniform_opponents() {
        let n = 3usize;
        let candidates = ["A", "B", "C"];
        let truth = "A";
        let others = ["B", "A"]; // reports of voters 1 and 2
        let win_chance = |my_report: &str| -> Rat {
            // Average over the other voters' uniform integers; count, over
            // the uniform selected index, outcomes equal to the truth.
            let mut numer = 0i64;
            let mut denom = 0i64;
            for o1 in 0..n as u64 {
                for o2 in 0..n as u64 {
                    for mine in 0..n as u64 {
                        let reports = [my_report, others[0], others[1]];
                        let j = ((mine + o1 + o2) % n as u64) as usize;
                        denom += 1;
                        if reports[j] == truth {
                            numer += 1;
                        }
                    }
                }
            }
            Rat::new(numer, denom)
        };
        let sincere = win_chance(truth);
        for report in candidates {
            assert!(win_chance(report) <= sincere, "misreporting {report} cannot help");
        }
        assert_eq!(sincere, Rat::new(2, 3));
    }
}
