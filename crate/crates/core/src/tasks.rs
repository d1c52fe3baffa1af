//! Two-machine task scheduling with payments.
//!
//! Two agents declare per-task completion times. For each task a bit picks a
//! favoured agent; the favoured agent `i` receives the task when their
//! declared time is within a factor 4/3 of the other's, and is paid
//! `4/3 * t_other`; otherwise the task goes to the other agent against a
//! payment of `3/4 * t_i`. Payments never depend on the winner's own report,
//! which makes truthful reporting optimal round by round.
//!
//! The randomized mechanism draws each bit fairly; the de-randomized one
//! replaces each draw with the XOR of one bit from each agent, a parity game
//! per task. With uniform bits the expected makespan is at most 7/4 of the
//! optimal schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rat;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("need at least one task")]
    NoTasks,
    #[error("agent {agent}: declared {got} times, expected {expected}")]
    LengthMismatch { agent: usize, got: usize, expected: usize },
    #[error("agent {agent}, task {task}: time {value} must be positive")]
    NonPositiveTime { agent: usize, task: usize, value: String },
    #[error("expected {expected} bits, got {got}")]
    WrongBitCount { got: usize, expected: usize },
    #[error("task {task}: bit {value} must be 0 or 1")]
    BadBit { task: usize, value: u8 },
    #[error("agent index {0} must be 0 or 1")]
    BadAgent(usize),
    #[error("m = {m} too large for exhaustive enumeration (max 20)")]
    TooManyTasks { m: usize },
}

/// Declared (and optionally true) completion times for the two agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// `declared[agent][task]`, positive.
    pub declared: [Vec<Rat>; 2],
    /// True times; `None` means the declarations are truthful.
    pub true_times: Option<[Vec<Rat>; 2]>,
}

impl TaskInstance {
    pub fn truthful(t1: Vec<Rat>, t2: Vec<Rat>) -> Result<Self, TaskError> {
        let inst = TaskInstance { declared: [t1, t2], true_times: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn m(&self) -> usize {
        self.declared[0].len()
    }

    pub fn true_time(&self, agent: usize, task: usize) -> &Rat {
        match &self.true_times {
            Some(t) => &t[agent][task],
            None => &self.declared[agent][task],
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let m = self.declared[0].len();
        if m == 0 {
            return Err(TaskError::NoTasks);
        }
        for agent in 0..2 {
            if self.declared[agent].len() != m {
                return Err(TaskError::LengthMismatch {
                    agent,
                    got: self.declared[agent].len(),
                    expected: m,
                });
            }
        }
        if let Some(tt) = &self.true_times {
            for agent in 0..2 {
                if tt[agent].len() != m {
                    return Err(TaskError::LengthMismatch {
                        agent,
                        got: tt[agent].len(),
                        expected: m,
                    });
                }
            }
        }
        for agent in 0..2 {
            for task in 0..m {
                for times in
                    std::iter::once(&self.declared).chain(self.true_times.iter())
                {
                    let v = &times[agent][task];
                    if !v.is_positive() {
                        return Err(TaskError::NonPositiveTime {
                            agent,
                            task,
                            value: v.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Allocation and payments produced by one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskOutcome {
    /// Tasks assigned to agent 0, ascending.
    pub a1: Vec<usize>,
    pub p1: Rat,
    /// Tasks assigned to agent 1, ascending.
    pub a2: Vec<usize>,
    pub p2: Rat,
}

impl TaskOutcome {
    pub fn tasks_of(&self, agent: usize) -> &[usize] {
        if agent == 0 {
            &self.a1
        } else {
            &self.a2
        }
    }

    pub fn payment_of(&self, agent: usize) -> &Rat {
        if agent == 0 {
            &self.p1
        } else {
            &self.p2
        }
    }
}

fn check_bits(bits: &[u8], m: usize) -> Result<(), TaskError> {
    if bits.len() != m {
        return Err(TaskError::WrongBitCount { got: bits.len(), expected: m });
    }
    for (task, &b) in bits.iter().enumerate() {
        if b > 1 {
            return Err(TaskError::BadBit { task, value: b });
        }
    }
    Ok(())
}

/// Run the mechanism on declared times with one selection bit per task.
/// Bit `b` favours agent `b`.
pub fn biased_min_work(inst: &TaskInstance, bits: &[u8]) -> Result<TaskOutcome, TaskError> {
    inst.validate()?;
    let m = inst.m();
    check_bits(bits, m)?;
    let four_thirds = Rat::new(4, 3);
    let three_quarters = Rat::new(3, 4);
    let mut out = TaskOutcome { a1: vec![], p1: Rat::zero(), a2: vec![], p2: Rat::zero() };
    for j in 0..m {
        let i = bits[j] as usize;
        let other = 1 - i;
        let ti = &inst.declared[i][j];
        let to = &inst.declared[other][j];
        if *ti <= &four_thirds * to {
            // Favoured agent keeps the task, paid off the other's report.
            if i == 0 {
                out.a1.push(j);
                out.p1 += &four_thirds * to;
            } else {
                out.a2.push(j);
                out.p2 += &four_thirds * to;
            }
        } else {
            // Favoured agent's report is too slow; the other takes it at a
            // discount off the favoured report.
            if other == 0 {
                out.a1.push(j);
                out.p1 += &three_quarters * ti;
            } else {
                out.a2.push(j);
                out.p2 += &three_quarters * ti;
            }
        }
    }
    Ok(out)
}

/// De-randomized form: each task's bit is the XOR of one bit from each agent.
pub fn derand_biased_min_work(
    inst: &TaskInstance,
    bit_pairs: &[(u8, u8)],
) -> Result<TaskOutcome, TaskError> {
    inst.validate()?;
    let m = inst.m();
    if bit_pairs.len() != m {
        return Err(TaskError::WrongBitCount { got: bit_pairs.len(), expected: m });
    }
    let mut bits = Vec::with_capacity(m);
    for (task, &(x, y)) in bit_pairs.iter().enumerate() {
        if x > 1 {
            return Err(TaskError::BadBit { task, value: x });
        }
        if y > 1 {
            return Err(TaskError::BadBit { task, value: y });
        }
        bits.push(x ^ y);
    }
    biased_min_work(inst, &bits)
}

/// Quasi-linear utility: payment received minus true cost of assigned tasks.
pub fn agent_utility(
    outcome: &TaskOutcome,
    agent: usize,
    inst: &TaskInstance,
) -> Result<Rat, TaskError> {
    if agent > 1 {
        return Err(TaskError::BadAgent(agent));
    }
    let cost: Rat = outcome.tasks_of(agent).iter().map(|&j| inst.true_time(agent, j)).sum();
    Ok(outcome.payment_of(agent) - cost)
}

/// Makespan of an outcome under true times.
pub fn makespan(outcome: &TaskOutcome, inst: &TaskInstance) -> Rat {
    let load = |agent: usize| -> Rat {
        outcome.tasks_of(agent).iter().map(|&j| inst.true_time(agent, j)).sum()
    };
    load(0).max(load(1))
}

/// Exact expected makespan when all `m` bits are independent fair coins:
/// average over all `2^m` bit vectors.
pub fn expected_makespan_uniform(inst: &TaskInstance) -> Result<Rat, TaskError> {
    inst.validate()?;
    let m = inst.m();
    if m > 20 {
        return Err(TaskError::TooManyTasks { m });
    }
    let mut total = Rat::zero();
    let mut bits = vec![0u8; m];
    for mask in 0u64..(1 << m) {
        for (j, b) in bits.iter_mut().enumerate() {
            *b = ((mask >> j) & 1) as u8;
        }
        total += makespan(&biased_min_work(inst, &bits)?, inst);
    }
    Ok(total / Rat::from_int(1i64 << m))
}

/// Optimal makespan over all `2^m` partitions of the tasks, under true times.
pub fn optimal_makespan(inst: &TaskInstance) -> Result<Rat, TaskError> {
    inst.validate()?;
    let m = inst.m();
    if m > 20 {
        return Err(TaskError::TooManyTasks { m });
    }
    let mut best: Option<Rat> = None;
    for mask in 0u64..(1 << m) {
        let mut load0 = Rat::zero();
        let mut load1 = Rat::zero();
        for j in 0..m {
            if (mask >> j) & 1 == 0 {
                load0 += inst.true_time(0, j);
            } else {
                load1 += inst.true_time(1, j);
            }
        }
        let span = load0.max(load1);
        best = Some(match best {
            None => span,
            Some(b) => b.min(span),
        });
    }
    Ok(best.expect("m >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn inst(t1: &[(i64, i64)], t2: &[(i64, i64)]) -> TaskInstance {
        TaskInstance::truthful(
            t1.iter().map(|&(n, d)| r(n, d)).collect(),
            t2.iter().map(|&(n, d)| r(n, d)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_task_close_times_stay_with_the_favoured_agent() {
        let out = biased_min_work(&inst(&[(3, 1)], &[(3, 1)]), &[0]).unwrap();
        assert_eq!(out.a1, vec![0]);
        assert_eq!(out.p1, r(4, 1));
        assert!(out.a2.is_empty());
        assert_eq!(out.p2, r(0, 1));
    }

    #[test]
    fn slow_favoured_reports_push_the_task_to_the_other_agent() {
        // Task 0: agent 0 favoured and fast enough. Task 1: agent 0 favoured
        // but 2 > 4/3 * 1, so agent 1 takes it at 3/4 * 2.
        let out = biased_min_work(&inst(&[(1, 1), (2, 1)], &[(2, 1), (1, 1)]), &[0, 0]).unwrap();
        assert_eq!(out.a1, vec![0]);
        assert_eq!(out.p1, r(8, 3));
        assert_eq!(out.a2, vec![1]);
        assert_eq!(out.p2, r(3, 2));
    }

    #[test]
    fn bits_are_validated() {
        assert_eq!(
            biased_min_work(&inst(&[(1, 1)], &[(1, 1)]), &[2]),
            Err(TaskError::BadBit { task: 0, value: 2 })
        );
        assert_eq!(
            biased_min_work(&inst(&[(1, 1)], &[(1, 1)]), &[0, 1]),
            Err(TaskError::WrongBitCount { got: 2, expected: 1 })
        );
    }

    #[test]
    fn xor_pairs_match_direct_bits() {
        let i = inst(&[(1, 1), (2, 1), (5, 2)], &[(2, 1), (1, 1), (1, 3)]);
        let pairs = [(1, 1), (0, 1), (1, 0)];
        let bits = [0, 1, 1];
        assert_eq!(
            derand_biased_min_work(&i, &pairs).unwrap(),
            biased_min_work(&i, &bits).unwrap()
        );
    }

    #[test]
    fn utility_is_payment_minus_true_cost() {
        let i = inst(&[(1, 1), (2, 1)], &[(2, 1), (1, 1)]);
        let out = biased_min_work(&i, &[0, 0]).unwrap();
        assert_eq!(agent_utility(&out, 1, &i).unwrap(), r(1, 2));
        assert_eq!(agent_utility(&out, 0, &i).unwrap(), r(5, 3));
        assert!(agent_utility(&out, 2, &i).is_err());
    }

    #[test]
    fn expected_and_optimal_makespan() {
        let i = inst(&[(1, 1), (1, 1)], &[(1, 1), (1, 1)]);
        assert_eq!(expected_makespan_uniform(&i).unwrap(), r(3, 2));
        assert_eq!(optimal_makespan(&i).unwrap(), r(1, 1));

        let i = inst(&[(1, 1), (2, 1)], &[(2, 1), (1, 1)]);
        assert_eq!(optimal_makespan(&i).unwrap(), r(1, 1));
    }

    #[test]
    fn time_validation() {
        let bad = TaskInstance { declared: [vec![r(0, 1)], vec![r(1, 1)]], true_times: None };
        assert!(matches!(
            bad.validate(),
            Err(TaskError::NonPositiveTime { agent: 0, task: 0, .. })
        ));
        let bad = TaskInstance { declared: [vec![r(1, 1)], vec![]], true_times: None };
        assert!(matches!(bad.validate(), Err(TaskError::LengthMismatch { agent: 1, .. })));
    }

    /// When reports are truthful, each assigned task pays at least its true
    /// cost, on either branch of the rule.
    #[test]
    fn truthful_participation_never_loses_money() {
        let instances = [
            inst(&[(1, 1), (2, 1), (7, 3)], &[(2, 1), (1, 1), (7, 3)]),
            inst(&[(4, 3), (1, 2)], &[(1, 1), (2, 3)]),
            inst(&[(5, 1)], &[(1, 7)]),
        ];
        for i in &instances {
            for mask in 0u64..(1 << i.m()) {
                let bits: Vec<u8> = (0..i.m()).map(|j| ((mask >> j) & 1) as u8).collect();
                let out = biased_min_work(i, &bits).unwrap();
                for agent in 0..2 {
                    assert!(
                        agent_utility(&out, agent, i).unwrap() >= Rat::zero(),
                        "agent {agent} lost money on bits {bits:?}"
                    );
                }
            }
        }
    }

    /// Winning a round weakly dominates losing it under truthful reports:
    /// flip each round's bit both ways and compare the per-agent utilities.
    #[test]
    fn being_favoured_weakly_dominates_round_by_round() {
        let i = inst(&[(1, 1), (2, 1), (5, 2), (1, 3)], &[(2, 1), (1, 1), (1, 3), (5, 2)]);
        for mask in 0u64..(1 << i.m()) {
            let bits: Vec<u8> = (0..i.m()).map(|j| ((mask >> j) & 1) as u8).collect();
            for j in 0..i.m() {
                for agent in 0..2u8 {
                    let mut won = bits.clone();
                    won[j] = agent;
                    let mut lost = bits.clone();
                    lost[j] = 1 - agent;
                    let u_won = agent_utility(
                        &biased_min_work(&i, &won).unwrap(),
                        agent as usize,
                        &i,
                    )
                    .unwrap();
                    let u_lost = agent_utility(
                        &biased_min_work(&i, &lost).unwrap(),
                        agent as usize,
                        &i,
                    )
                    .unwrap();
                    assert!(u_won >= u_lost, "agent {agent} prefers losing round {j}");
                }
            }
        }
    }
}
