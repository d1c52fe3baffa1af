//! Left-right-middle facility location, de-randomized.
//!
//! Agents report positions on the line plus an integer in `[0, 4)`. The sum
//! mod 4 picks the facility site: `0` the leftmost report, `3` the rightmost,
//! `1` or `2` the midpoint of the two extremes, reproducing the classic
//! (1/4, 1/2, 1/4) lottery. Against the max-distance objective the lottery's
//! expected cost is exactly 3/2 times the optimum whenever the reports are
//! not all equal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rat;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FacilityError {
    #[error("no reports")]
    Empty,
    #[error("agent {agent}: integer {value} out of range [0, 4)")]
    IntegerOutOfRange { agent: usize, value: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityReport {
    /// Game integer in `[0, 4)`.
    pub integer: u64,
    /// Reported position on the line. Serialized as `report` to match the
    /// instance schema shared with the voting domain.
    #[serde(rename = "report")]
    pub position: Rat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityBranch {
    Leftmost,
    Midpoint,
    Rightmost,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FacilityOutcome {
    pub branch: FacilityBranch,
    pub location: Rat,
}

fn extremes(positions: &[Rat]) -> (Rat, Rat) {
    let mut min = positions[0].clone();
    let mut max = positions[0].clone();
    for p in &positions[1..] {
        if *p < min {
            min = p.clone();
        }
        if *p > max {
            max = p.clone();
        }
    }
    (min, max)
}

/// Run the de-randomized lottery on the reports.
pub fn derand_lrm(reports: &[FacilityReport]) -> Result<FacilityOutcome, FacilityError> {
    if reports.is_empty() {
        return Err(FacilityError::Empty);
    }
    let mut sum: u64 = 0;
    for (agent, r) in reports.iter().enumerate() {
        if r.integer >= 4 {
            return Err(FacilityError::IntegerOutOfRange { agent, value: r.integer });
        }
        sum = (sum + r.integer) % 4;
    }
    let positions: Vec<Rat> = reports.iter().map(|r| r.position.clone()).collect();
    let (min, max) = extremes(&positions);
    let (branch, location) = match sum {
        0 => (FacilityBranch::Leftmost, min),
        3 => (FacilityBranch::Rightmost, max),
        _ => (FacilityBranch::Midpoint, (min + max) / Rat::from_int(2)),
    };
    Ok(FacilityOutcome { branch, location })
}

/// Maximum distance from `location` to any reported position.
pub fn max_cost(location: &Rat, positions: &[Rat]) -> Result<Rat, FacilityError> {
    if positions.is_empty() {
        return Err(FacilityError::Empty);
    }
    Ok(positions
        .iter()
        .map(|p| (p - location).abs())
        .max()
        .expect("nonempty"))
}

/// Exact ratio between the lottery's expected max cost and the optimal max
/// cost. The optimum places the facility at the midpoint, for cost
/// `(max - min) / 2`; the lottery pays `(max - min)` at each extreme and the
/// optimum at the midpoint, for an expectation of `3/4 (max - min)`. All-equal
/// reports make both costs zero and the ratio is 1 by convention.
pub fn lrm_expected_ratio(positions: &[Rat]) -> Result<Rat, FacilityError> {
    if positions.is_empty() {
        return Err(FacilityError::Empty);
    }
    let (min, max) = extremes(positions);
    if min == max {
        return Ok(Rat::one());
    }
    let quarter = Rat::new(1, 4);
    let half = Rat::new(1, 2);
    let mid = (&min + &max) / Rat::from_int(2);
    let expected = &quarter * &max_cost(&min, positions)?
        + &half * &max_cost(&mid, positions)?
        + &quarter * &max_cost(&max, positions)?;
    let optimal = max_cost(&mid, positions)?;
    Ok(expected / optimal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reports(ints: &[u64], positions: &[Rat]) -> Vec<FacilityReport> {
        ints.iter()
            .zip(positions)
            .map(|(&integer, position)| FacilityReport { integer, position: position.clone() })
            .collect()
    }

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn branch_selection() {
        // Sum 1 picks the midpoint of {0, 1}.
        let out = derand_lrm(&reports(&[1, 0], &[r(0, 1), r(1, 1)])).unwrap();
        assert_eq!(out.branch, FacilityBranch::Midpoint);
        assert_eq!(out.location, r(1, 2));

        // Sum 3 picks the rightmost.
        let out = derand_lrm(&reports(&[2, 1], &[r(0, 1), r(10, 1)])).unwrap();
        assert_eq!(out.branch, FacilityBranch::Rightmost);
        assert_eq!(out.location, r(10, 1));

        // Sum 0 picks the leftmost.
        let out = derand_lrm(&reports(&[0, 0, 0], &[r(5, 1), r(-1, 1), r(2, 1)])).unwrap();
        assert_eq!(out.branch, FacilityBranch::Leftmost);
        assert_eq!(out.location, r(-1, 1));
    }

    #[test]
    fn errors() {
        assert_eq!(derand_lrm(&[]), Err(FacilityError::Empty));
        assert_eq!(
            derand_lrm(&reports(&[0, 4], &[r(0, 1), r(1, 1)])),
            Err(FacilityError::IntegerOutOfRange { agent: 1, value: 4 })
        );
    }

    #[test]
    fn max_cost_examples() {
        let pos = vec![r(0, 1), r(1, 1)];
        assert_eq!(max_cost(&r(1, 2), &pos).unwrap(), r(1, 2));
        assert_eq!(max_cost(&r(0, 1), &pos).unwrap(), r(1, 1));
        assert!(max_cost(&r(0, 1), &[]).is_err());
    }

    #[test]
    fn ratio_is_three_halves_or_one() {
        assert_eq!(lrm_expected_ratio(&[r(0, 1), r(1, 2), r(1, 1)]).unwrap(), r(3, 2));
        assert_eq!(lrm_expected_ratio(&[r(-7, 3), r(5, 4)]).unwrap(), r(3, 2));
        assert_eq!(lrm_expected_ratio(&[r(2, 1), r(2, 1), r(2, 1)]).unwrap(), r(1, 1));
    }

    /// Against uniform opponents the site distribution over (left, mid,
    /// right) of the *reported* extremes is fixed at (1/4, 1/2, 1/4), so an
    /// agent's expected distance is minimized by reporting truthfully.
    /// Exhaust one agent's deviations over a grid of positions.
    #[test]
    fn sincere_reports_minimize_expected_distance() {
        let truth = r(1, 3);
        let fixed = [r(0, 1), r(1, 1)]; // other two agents, sincere
        let expected_cost = |report: &Rat| -> Rat {
            let mut all = vec![report.clone(), fixed[0].clone(), fixed[1].clone()];
            all.sort();
            let (min, max) = (all[0].clone(), all[2].clone());
            let mid = (&min + &max) / Rat::from_int(2);
            let dist = |site: &Rat| (site - &truth).abs();
            Rat::new(1, 4) * dist(&min) + Rat::new(1, 2) * dist(&mid) + Rat::new(1, 4) * dist(&max)
        };
        let sincere = expected_cost(&truth);
        let grid: Vec<Rat> = (-6..=10).map(|i| r(i, 4)).collect();
        for report in &grid {
            assert!(
                expected_cost(report) >= sincere,
                "reporting {report} beats the truth"
            );
        }
    }
}
