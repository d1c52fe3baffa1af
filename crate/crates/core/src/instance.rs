//! Instance files: one JSON document describes one mechanism run.
//!
//! The `domain` tag selects the mechanism; the rest of the document carries
//! that mechanism's reports and game plays. [`run_instance`] replays the
//! recorded plays and emits an audit transcript, [`exact_dist`] computes the
//! exact outcome distribution of the embedded game under the instance's
//! policies (all-uniform by default), and [`simulate_instance`] Monte Carlo
//! samples the game and tallies the *mechanism* outcomes each game outcome
//! induces.
//!
//! Every rational is serialized as a `"num/den"` string and transcripts are
//! emitted with sorted keys, so identical inputs produce byte-identical
//! output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::allocation::{
    derand_rp, probabilistic_serial, realize_assignment, reduced_modulus, AllocError,
    AllocInstance, DrawMode,
};
use crate::facility::{derand_lrm, FacilityError, FacilityReport};
use crate::modgame::{outcome_distribution, MixedStrategy, ModGameError};
use crate::peer::{derand_rse, PeerError, PeerProfile, RsePlay};
use crate::permute::{factorial, lehmer_decode, CompactBids, PermuteError};
use crate::rational::Rat;
use crate::school::{derand_da, School, SchoolBids, SchoolError, SchoolInstance, Student};
use crate::sim::{sample_move, trial_seed, tv_distance, AgentPolicy, ReportPolicy, SimError, TrialReport};
use crate::tasks::{derand_biased_min_work, TaskError, TaskInstance};
use crate::voting::{derand_dictator, DictatorBallot, VotingError};

/// Largest embedded game for which simulate/exact-dist build the full
/// outcome-to-mechanism table.
pub const GAME_TABLE_MAX: u64 = 1 << 16;

/// Largest modulus for exact convolution when some policy is neither uniform
/// nor a point mass.
const CONVOLUTION_MAX: u64 = 1 << 12;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("task count m = {m} does not match a time vector of length {got}")]
    TaskCountMismatch { m: usize, got: usize },
    #[error("bids do not match mode {mode:?}: expected {expected}")]
    BidShapeMismatch { mode: String, expected: &'static str },
    #[error("mode \"rp\" requires a `bids` array")]
    MissingBids,
    #[error("expected {expected} policies, got {got}")]
    PolicyCount { got: usize, expected: usize },
    #[error("this instance has no single embedded game: {0}")]
    NoSingleGame(String),
    #[error("embedded game modulus {modulus} exceeds the limit {max} for this operation")]
    GameTooLarge { modulus: u64, max: u64 },
    #[error("agent {agent}: report patch does not fit this domain: {message}")]
    BadReportPatch { agent: usize, message: String },
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error(transparent)]
    Facility(#[from] FacilityError),
    #[error(transparent)]
    Tasks(#[from] TaskError),
    #[error(transparent)]
    Peer(#[from] PeerError),
    #[error(transparent)]
    School(#[from] SchoolError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Permute(#[from] PermuteError),
    #[error(transparent)]
    Game(#[from] ModGameError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// How the school tie-break game is played.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolMode {
    Lehmer,
    Compact,
}

/// Raw bid payload for school instances; the shape must agree with `mode`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawSchoolBids {
    Lehmer(Vec<u64>),
    Compact(CompactBids),
}

/// Which allocation mechanism an alloc instance runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocMode {
    Ps,
    Rp,
}

fn skip_policies(p: &Option<Vec<AgentPolicy>>) -> bool {
    p.is_none()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictatorDoc {
    pub agents: Vec<DictatorBallot>,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrmDoc {
    pub agents: Vec<FacilityReport>,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TasksDoc {
    pub m: usize,
    pub t1: Vec<Rat>,
    pub t2: Vec<Rat>,
    pub bits: Vec<(u8, u8)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_t1: Option<Vec<Rat>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_t2: Option<Vec<Rat>>,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerDoc {
    pub prefs: PeerProfile,
    pub bids: Vec<u64>,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchoolDoc {
    pub students: Vec<Student>,
    pub schools: Vec<School>,
    pub mode: SchoolMode,
    pub bids: RawSchoolBids,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocDoc {
    pub prefs: AllocInstance,
    pub mode: AllocMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bids: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw: Option<DrawMode>,
    #[serde(default, skip_serializing_if = "skip_policies")]
    pub policies: Option<Vec<AgentPolicy>>,
}

/// A parsed instance document for any of the six domains.
///
/// Deserialization goes through [`parse_instance`], which dispatches on the
/// `domain` tag by hand: serde's own internally tagged representation buffers
/// the document and would erase field paths from error messages.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum InstanceFile {
    Dictator(DictatorDoc),
    Lrm(LrmDoc),
    Tasks(TasksDoc),
    Peer(PeerDoc),
    School(SchoolDoc),
    Alloc(AllocDoc),
}

fn doc_from_value<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, InstanceError> {
    serde_path_to_error::deserialize(value).map_err(|e| InstanceError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Parse and validate an instance document. Parse errors carry the JSON path
/// of the offending field.
pub fn parse_instance(text: &str) -> Result<InstanceFile, InstanceError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| InstanceError::Parse { path: ".".to_string(), message: e.to_string() })?;
    let domain = value
        .get("domain")
        .and_then(Value::as_str)
        .ok_or_else(|| InstanceError::Parse {
            path: "domain".to_string(),
            message: "missing or non-string domain tag".to_string(),
        })?
        .to_string();
    let inst = match domain.as_str() {
        "dictator" => InstanceFile::Dictator(doc_from_value(value)?),
        "lrm" => InstanceFile::Lrm(doc_from_value(value)?),
        "tasks" => InstanceFile::Tasks(doc_from_value(value)?),
        "peer" => InstanceFile::Peer(doc_from_value(value)?),
        "school" => InstanceFile::School(doc_from_value(value)?),
        "alloc" => InstanceFile::Alloc(doc_from_value(value)?),
        other => {
            return Err(InstanceError::Parse {
                path: "domain".to_string(),
                message: format!(
                    "unknown domain {other:?} (expected dictator, lrm, tasks, peer, school, or alloc)"
                ),
            })
        }
    };
    inst.validate()?;
    Ok(inst)
}

impl InstanceFile {
    /// Number of game-playing agents.
    pub fn n_agents(&self) -> usize {
        match self {
            InstanceFile::Dictator(DictatorDoc { agents, .. }) => agents.len(),
            InstanceFile::Lrm(LrmDoc { agents, .. }) => agents.len(),
            InstanceFile::Tasks(TasksDoc { .. }) => 2,
            InstanceFile::Peer(PeerDoc { prefs, .. }) => prefs.n(),
            InstanceFile::School(SchoolDoc { students, .. }) => students.len(),
            InstanceFile::Alloc(AllocDoc { prefs, .. }) => prefs.n(),
        }
    }

    pub fn policies(&self) -> Option<&[AgentPolicy]> {
        match self {
            InstanceFile::Dictator(DictatorDoc { policies, .. })
            | InstanceFile::Lrm(LrmDoc { policies, .. })
            | InstanceFile::Tasks(TasksDoc { policies, .. })
            | InstanceFile::Peer(PeerDoc { policies, .. })
            | InstanceFile::School(SchoolDoc { policies, .. })
            | InstanceFile::Alloc(AllocDoc { policies, .. }) => policies.as_deref(),
        }
    }

    /// Modulus of the embedded modular game. Tasks instances play one parity
    /// game per round, so their modulus is 2; compact-mode school instances
    /// play one game per permutation position and have no single modulus.
    pub fn game_modulus(&self) -> Result<u64, InstanceError> {
        match self {
            InstanceFile::Dictator(DictatorDoc { agents, .. }) => Ok(agents.len() as u64),
            InstanceFile::Lrm(LrmDoc { .. }) => Ok(4),
            InstanceFile::Tasks(TasksDoc { .. }) => Ok(2),
            InstanceFile::Peer(PeerDoc { prefs, .. }) => Ok(factorial(prefs.n())?),
            InstanceFile::School(SchoolDoc { students, mode, .. }) => match mode {
                SchoolMode::Lehmer => Ok(factorial(students.len())?),
                SchoolMode::Compact => Err(InstanceError::NoSingleGame(
                    "compact mode plays one game per position".into(),
                )),
            },
            InstanceFile::Alloc(AllocDoc { prefs, mode, modulus, .. }) => match mode {
                AllocMode::Rp => Ok(factorial(prefs.n())?),
                AllocMode::Ps => match modulus {
                    Some(m) => Ok(*m),
                    None => {
                        let (matrix, _) = probabilistic_serial(prefs)?;
                        Ok(reduced_modulus(&matrix)?)
                    }
                },
            },
        }
    }

    fn tasks_instance(&self) -> Result<TaskInstance, InstanceError> {
        let InstanceFile::Tasks(TasksDoc { m, t1, t2, true_t1, true_t2, .. }) = self else {
            unreachable!("tasks_instance on a tasks instance only");
        };
        for times in [t1, t2].into_iter().chain(true_t1.iter()).chain(true_t2.iter()) {
            if times.len() != *m {
                return Err(InstanceError::TaskCountMismatch { m: *m, got: times.len() });
            }
        }
        let true_times = match (true_t1, true_t2) {
            (None, None) => None,
            (a, b) => Some([
                a.clone().unwrap_or_else(|| t1.clone()),
                b.clone().unwrap_or_else(|| t2.clone()),
            ]),
        };
        let inst = TaskInstance { declared: [t1.clone(), t2.clone()], true_times };
        inst.validate()?;
        Ok(inst)
    }

    fn school_instance(&self) -> Result<(SchoolInstance, SchoolBids), InstanceError> {
        let InstanceFile::School(SchoolDoc { students, schools, mode, bids, .. }) = self else {
            unreachable!("school_instance on a school instance only");
        };
        let instance =
            SchoolInstance { students: students.clone(), schools: schools.clone() };
        instance.validate()?;
        let bids = match (mode, bids) {
            (SchoolMode::Lehmer, RawSchoolBids::Lehmer(b)) => SchoolBids::Lehmer(b.clone()),
            (SchoolMode::Compact, RawSchoolBids::Compact(b)) => SchoolBids::Compact(b.clone()),
            (SchoolMode::Lehmer, _) => {
                return Err(InstanceError::BidShapeMismatch {
                    mode: "lehmer".into(),
                    expected: "one integer per student",
                })
            }
            (SchoolMode::Compact, _) => {
                return Err(InstanceError::BidShapeMismatch {
                    mode: "compact".into(),
                    expected: "an object with `a` and `b` arrays",
                })
            }
        };
        Ok((instance, bids))
    }

    /// Structural validation beyond what deserialization enforces: play
    /// ranges, report shapes, policy counts.
    pub fn validate(&self) -> Result<(), InstanceError> {
        match self {
            InstanceFile::Dictator(DictatorDoc { agents, .. }) => {
                derand_dictator(agents)?;
            }
            InstanceFile::Lrm(LrmDoc { agents, .. }) => {
                derand_lrm(agents)?;
            }
            InstanceFile::Tasks(TasksDoc { bits, .. }) => {
                let inst = self.tasks_instance()?;
                let pairs: Vec<(u8, u8)> = bits.clone();
                derand_biased_min_work(&inst, &pairs)?;
            }
            InstanceFile::Peer(PeerDoc { prefs, bids, .. }) => {
                derand_rse(bids, prefs, RsePlay::SincereReversed)?;
            }
            InstanceFile::School(SchoolDoc { .. }) => {
                let (instance, bids) = self.school_instance()?;
                derand_da(&instance, &bids)?;
            }
            InstanceFile::Alloc(AllocDoc { prefs, mode, bids, sigma, modulus, draw, .. }) => {
                match mode {
                    AllocMode::Rp => {
                        let bids = bids.as_ref().ok_or(InstanceError::MissingBids)?;
                        derand_rp(bids, prefs)?;
                    }
                    AllocMode::Ps => {
                        let (matrix, _) = probabilistic_serial(prefs)?;
                        if let Some(sigma) = sigma {
                            let m = match modulus {
                                Some(m) => *m,
                                None => reduced_modulus(&matrix)?,
                            };
                            realize_assignment(
                                &matrix,
                                *sigma,
                                m,
                                draw.unwrap_or(DrawMode::Shifted),
                            )?;
                        }
                    }
                }
            }
        }
        if let Some(policies) = self.policies() {
            if policies.len() != self.n_agents() {
                return Err(InstanceError::PolicyCount {
                    got: policies.len(),
                    expected: self.n_agents(),
                });
            }
            match self.game_modulus() {
                Ok(modulus) => {
                    for (agent, p) in policies.iter().enumerate() {
                        p.strategy(modulus, agent)?;
                    }
                }
                // Compact-mode games have per-position moduli; only the
                // all-uniform default is meaningful there.
                Err(InstanceError::NoSingleGame(_)) => {
                    if let Some((agent, _)) = policies
                        .iter()
                        .enumerate()
                        .find(|(_, p)| !matches!(p, AgentPolicy { kind: crate::sim::MoveKind::Uniform, .. }))
                    {
                        return Err(InstanceError::BadReportPatch {
                            agent,
                            message: "compact mode only supports uniform policies".into(),
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("crate types serialize to JSON")
}

/// Replay the recorded plays and emit the audit transcript. Deterministic:
/// identical instances produce identical transcripts, byte for byte, because
/// object keys are emitted sorted.
pub fn run_instance(inst: &InstanceFile) -> Result<Value, InstanceError> {
    inst.validate()?;
    match inst {
        InstanceFile::Dictator(DictatorDoc { agents, .. }) => {
            let out = derand_dictator(agents)?;
            Ok(json!({
                "domain": "dictator",
                "modulus": agents.len() as u64,
                "outcome": out.dictator as u64,
                "winner": out.winner,
            }))
        }
        InstanceFile::Lrm(LrmDoc { agents, .. }) => {
            let sum = agents.iter().map(|a| a.integer).sum::<u64>() % 4;
            let out = derand_lrm(agents)?;
            Ok(json!({
                "domain": "lrm",
                "modulus": 4,
                "outcome": sum,
                "branch": to_value(&out.branch),
                "location": to_value(&out.location),
            }))
        }
        InstanceFile::Tasks(TasksDoc { bits, .. }) => {
            let task_inst = inst.tasks_instance()?;
            let xor: Vec<u8> = bits.iter().map(|&(x, y)| x ^ y).collect();
            let out = derand_biased_min_work(&task_inst, bits)?;
            Ok(json!({
                "domain": "tasks",
                "bits": xor,
                "outcome": to_value(&out),
            }))
        }
        InstanceFile::Peer(PeerDoc { prefs, bids, .. }) => {
            let out = derand_rse(bids, prefs, RsePlay::SincereReversed)?;
            Ok(json!({
                "domain": "peer",
                "modulus": factorial(prefs.n())?,
                "order": to_value(&out.order),
                "winner": out.winner as u64,
            }))
        }
        InstanceFile::School(SchoolDoc { .. }) => {
            let (instance, bids) = inst.school_instance()?;
            let transcript = derand_da(&instance, &bids)?;
            let mut v = to_value(&transcript);
            v.as_object_mut()
                .expect("transcript is an object")
                .insert("domain".into(), Value::String("school".into()));
            Ok(v)
        }
        InstanceFile::Alloc(AllocDoc { prefs, mode, bids, sigma, modulus, draw, .. }) => match mode {
            AllocMode::Rp => {
                let t = derand_rp(bids.as_ref().ok_or(InstanceError::MissingBids)?, prefs)?;
                Ok(json!({
                    "domain": "alloc",
                    "mode": "rp",
                    "bids": t.bids,
                    "order": to_value(&t.order),
                    "allocation": to_value(&t.allocation),
                }))
            }
            AllocMode::Ps => {
                let (matrix, trace) = probabilistic_serial(prefs)?;
                let mut out = json!({
                    "domain": "alloc",
                    "mode": "ps",
                    "matrix": to_value(&matrix),
                    "trace": to_value(&trace),
                });
                if let Some(sigma) = sigma {
                    let m = match modulus {
                        Some(m) => *m,
                        None => reduced_modulus(&matrix)?,
                    };
                    let mode = draw.unwrap_or(DrawMode::Shifted);
                    let allocation = realize_assignment(&matrix, *sigma, m, mode)?;
                    out.as_object_mut().expect("object").insert(
                        "realization".into(),
                        json!({
                            "sigma": sigma,
                            "modulus": m,
                            "draw": to_value(&mode),
                            "allocation": to_value(&allocation),
                        }),
                    );
                }
                Ok(out)
            }
        },
    }
}

/// The exact distributions each policy plays in the embedded game.
fn game_strategies(inst: &InstanceFile, modulus: u64) -> Result<Vec<MixedStrategy>, InstanceError> {
    let n = inst.n_agents();
    let uniform = AgentPolicy::uniform();
    (0..n)
        .map(|agent| {
            let policy = inst.policies().map(|p| &p[agent]).unwrap_or(&uniform);
            Ok(policy.strategy(modulus, agent)?)
        })
        .collect()
}

/// Exact outcome distribution of the embedded game under the instance's
/// policies. Any uniform policy makes the sum uniform, so that case skips
/// the convolution and has no size limit.
fn game_distribution(strategies: &[MixedStrategy], modulus: u64) -> Result<MixedStrategy, InstanceError> {
    if strategies.iter().any(|s| s.is_uniform()) {
        return Ok(MixedStrategy::uniform(modulus));
    }
    if modulus > CONVOLUTION_MAX && strategies.iter().any(|s| s.point_mass().is_none()) {
        return Err(InstanceError::GameTooLarge { modulus, max: CONVOLUTION_MAX });
    }
    Ok(outcome_distribution(strategies, modulus)?)
}

/// Exact distribution of the embedded game's outcome, as
/// `{"modulus": m, "distribution": [...]}`. Compact-mode school instances
/// report one distribution per permutation position instead.
pub fn exact_dist(inst: &InstanceFile) -> Result<Value, InstanceError> {
    inst.validate()?;
    if let InstanceFile::School(SchoolDoc { students, mode: SchoolMode::Compact, .. }) = inst {
        let n = students.len();
        let positions: Vec<Value> = (0..n)
            .map(|p| {
                let m = (n - p) as u64;
                json!({
                    "position": p,
                    "modulus": m,
                    "distribution": to_value(&MixedStrategy::uniform(m)),
                })
            })
            .collect();
        return Ok(json!({ "positions": positions }));
    }
    let modulus = inst.game_modulus()?;
    let strategies = game_strategies(inst, modulus)?;
    let dist = game_distribution(&strategies, modulus)?;
    Ok(json!({
        "modulus": modulus,
        "distribution": to_value(&dist),
    }))
}

/// Replace reports per the policies' `report` field, returning the patched
/// instance. Game plays recorded in the instance are untouched (simulation
/// re-draws them anyway).
pub fn patch_reports(inst: &InstanceFile, policies: &[AgentPolicy]) -> Result<InstanceFile, InstanceError> {
    let mut patched = inst.clone();
    for (agent, policy) in policies.iter().enumerate() {
        let ReportPolicy::Fixed(value) = &policy.report else {
            continue;
        };
        let bad = |message: String| InstanceError::BadReportPatch { agent, message };
        match &mut patched {
            InstanceFile::Dictator(DictatorDoc { agents, .. }) => {
                agents[agent].report = serde_json::from_value::<String>(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
            }
            InstanceFile::Lrm(LrmDoc { agents, .. }) => {
                agents[agent].position = serde_json::from_value::<Rat>(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
            }
            InstanceFile::Tasks(TasksDoc { t1, t2, .. }) => {
                let row: Vec<Rat> = serde_json::from_value(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
                if agent == 0 {
                    *t1 = row;
                } else {
                    *t2 = row;
                }
            }
            InstanceFile::Peer(PeerDoc { prefs, .. }) => {
                let row: Vec<usize> = serde_json::from_value(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
                let mut rankings = prefs.rankings().to_vec();
                rankings[agent] = row;
                *prefs = PeerProfile::new(rankings)?;
            }
            InstanceFile::School(SchoolDoc { students, .. }) => {
                students[agent].prefs = serde_json::from_value(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
            }
            InstanceFile::Alloc(AllocDoc { prefs, .. }) => {
                let row: Vec<usize> = serde_json::from_value(value.clone())
                    .map_err(|e| bad(e.to_string()))?;
                let mut rankings = prefs.rankings().to_vec();
                rankings[agent] = row;
                *prefs = AllocInstance::new(rankings)?;
            }
        }
    }
    patched.validate()?;
    Ok(patched)
}

/// The mechanism outcome each game outcome induces, as compact JSON strings.
/// Index `o` of the returned table is game outcome `o`; for tasks instances
/// `o` is the bit mask with round `j`'s parity in bit `j`.
fn outcome_table(inst: &InstanceFile, modulus: u64) -> Result<Vec<String>, InstanceError> {
    if modulus > GAME_TABLE_MAX {
        return Err(InstanceError::GameTooLarge { modulus, max: GAME_TABLE_MAX });
    }
    let compact = |v: &Value| serde_json::to_string(v).expect("JSON value");
    let mut table = Vec::with_capacity(modulus as usize);
    match inst {
        InstanceFile::Dictator(DictatorDoc { agents, .. }) => {
            for o in 0..modulus {
                table.push(compact(&json!({ "winner": agents[o as usize].report })));
            }
        }
        InstanceFile::Lrm(LrmDoc { agents, .. }) => {
            for o in 0..modulus {
                let mut shifted = agents.to_vec();
                // Force the game outcome to o: zero every integer, set one.
                for a in &mut shifted {
                    a.integer = 0;
                }
                shifted[0].integer = o;
                let out = derand_lrm(&shifted)?;
                table.push(compact(&json!({
                    "branch": to_value(&out.branch),
                    "location": to_value(&out.location),
                })));
            }
        }
        InstanceFile::Tasks(TasksDoc { .. }) => {
            let task_inst = inst.tasks_instance()?;
            let m = task_inst.m();
            for mask in 0..modulus {
                let pairs: Vec<(u8, u8)> =
                    (0..m).map(|j| (((mask >> j) & 1) as u8, 0)).collect();
                let out = derand_biased_min_work(&task_inst, &pairs)?;
                table.push(compact(&to_value(&out)));
            }
        }
        InstanceFile::Peer(PeerDoc { prefs, .. }) => {
            for o in 0..modulus {
                let zero_plus = |mut bids: Vec<u64>| {
                    bids[0] = o;
                    bids
                };
                let bids = zero_plus(vec![0; prefs.n()]);
                let out = derand_rse(&bids, prefs, RsePlay::SincereReversed)?;
                table.push(compact(&json!({ "winner": out.winner as u64 })));
            }
        }
        InstanceFile::School(SchoolDoc { students, .. }) => {
            let (instance, _) = inst.school_instance()?;
            let n = students.len();
            for o in 0..modulus {
                let mut bids = vec![0; n];
                bids[0] = o;
                let t = derand_da(&instance, &SchoolBids::Lehmer(bids))?;
                table.push(compact(&json!({ "matching": to_value(&t.matching) })));
            }
        }
        InstanceFile::Alloc(AllocDoc { prefs, mode, modulus: file_modulus, draw, .. }) => match mode {
            AllocMode::Rp => {
                for o in 0..modulus {
                    let order = lehmer_decode(o, prefs.n())?;
                    let allocation = crate::allocation::serial_dictatorship(&order, prefs)?;
                    table.push(compact(&json!({ "allocation": to_value(&allocation) })));
                }
            }
            AllocMode::Ps => {
                let (matrix, _) = probabilistic_serial(prefs)?;
                let m = match file_modulus {
                    Some(m) => *m,
                    None => reduced_modulus(&matrix)?,
                };
                debug_assert_eq!(m, modulus);
                let mode = draw.unwrap_or(DrawMode::Shifted);
                for o in 0..modulus {
                    let allocation = realize_assignment(&matrix, o, m, mode)?;
                    table.push(compact(&json!({ "allocation": to_value(&allocation) })));
                }
            }
        },
    }
    Ok(table)
}

/// Per-mask probability when each of the `m` rounds is an independent parity
/// game between the same two policies.
fn tasks_mask_distribution(
    strategies: &[MixedStrategy],
    m: usize,
) -> Result<Vec<Rat>, InstanceError> {
    let round = outcome_distribution(strategies, 2)?;
    let (q0, q1) = (round.prob(0).clone(), round.prob(1).clone());
    let mut dist = vec![Rat::one()];
    for _ in 0..m {
        // Masks in `dist` cover rounds 0..j in bits 0..j; appending round j
        // at offset 2^j sets its bit.
        let mut next = Vec::with_capacity(dist.len() * 2);
        for p in &dist {
            next.push(p * &q0);
        }
        for p in &dist {
            next.push(p * &q1);
        }
        dist = next;
    }
    Ok(dist)
}

/// Monte Carlo simulation of the full mechanism: each trial re-draws every
/// agent's game move from their policy, maps the resulting game outcome
/// through the mechanism, and tallies the induced mechanism outcome. The
/// `empirical_tv` field compares the tally against the exact pushforward
/// distribution. Deterministic in `master_seed` and independent of `workers`.
pub fn simulate_instance(
    inst: &InstanceFile,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<TrialReport, InstanceError> {
    if workers == 0 {
        return Err(SimError::NoWorkers.into());
    }
    inst.validate()?;
    let patched = match inst.policies() {
        Some(p) => patch_reports(inst, p)?,
        None => inst.clone(),
    };
    let is_tasks = matches!(inst, InstanceFile::Tasks(TasksDoc { .. }));
    let (game_modulus, rounds) = if is_tasks {
        let InstanceFile::Tasks(TasksDoc { m, .. }) = inst else { unreachable!() };
        if *m >= 16 {
            return Err(InstanceError::GameTooLarge {
                modulus: 1u64.checked_shl(*m as u32).unwrap_or(u64::MAX),
                max: GAME_TABLE_MAX,
            });
        }
        (2u64, *m)
    } else {
        (patched.game_modulus()?, 1)
    };
    let table_modulus = if is_tasks { 1u64 << rounds } else { game_modulus };
    let table = outcome_table(&patched, table_modulus)?;
    let strategies = game_strategies(inst, game_modulus)?;

    // Exact pushforward: group game-outcome probabilities by induced key.
    let game_dist = if is_tasks {
        tasks_mask_distribution(&strategies, rounds)?
    } else {
        game_distribution(&strategies, game_modulus)?.probs().to_vec()
    };
    let mut exact: BTreeMap<&str, Rat> = BTreeMap::new();
    for (o, key) in table.iter().enumerate() {
        *exact.entry(key.as_str()).or_insert_with(Rat::zero) += &game_dist[o];
    }

    let run_shard = |shard_trials: Box<dyn Iterator<Item = u64>>| -> Result<BTreeMap<u64, u64>, InstanceError> {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for trial in shard_trials {
            let mut rng = crate::sampling::rng(trial_seed(master_seed, trial));
            let outcome = if is_tasks {
                let mut mask = 0u64;
                for j in 0..rounds {
                    let mut bit = 0u64;
                    for (agent, s) in strategies.iter().enumerate() {
                        bit ^= sample_move(s, &mut rng, agent)?;
                    }
                    mask |= bit << j;
                }
                mask
            } else {
                let mut sum: u128 = 0;
                for (agent, s) in strategies.iter().enumerate() {
                    sum += sample_move(s, &mut rng, agent)? as u128;
                }
                (sum % game_modulus as u128) as u64
            };
            *counts.entry(outcome).or_insert(0) += 1;
        }
        Ok(counts)
    };

    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    if workers == 1 {
        counts = run_shard(Box::new(0..trials))?;
    } else {
        let shards = std::thread::scope(|scope| {
            let run_shard = &run_shard;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        run_shard(Box::new((w as u64..trials).step_by(workers)))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Vec<_>>()
        });
        for shard in shards {
            for (outcome, c) in shard? {
                *counts.entry(outcome).or_insert(0) += c;
            }
        }
    }

    // Tally by mechanism-outcome key and compute the exact TV distance.
    let mut frequencies: BTreeMap<String, u64> = BTreeMap::new();
    for (&outcome, &c) in &counts {
        *frequencies.entry(table[outcome as usize].clone()).or_insert(0) += c;
    }
    let keys: Vec<&str> = exact.keys().copied().collect();
    let exact_vec: Vec<Rat> = keys.iter().map(|k| exact[k].clone()).collect();
    let empirical_vec: Vec<Rat> = keys
        .iter()
        .map(|k| Rat::new(*frequencies.get(*k).unwrap_or(&0) as i64, trials.max(1) as i64))
        .collect();
    let empirical_tv = tv_distance(&empirical_vec, &exact_vec);
    Ok(TrialReport { trials, outcome_frequencies: frequencies, empirical_tv, master_seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> InstanceFile {
        parse_instance(text).unwrap()
    }

    const DICTATOR: &str =
        r#"{"domain":"dictator","agents":[{"integer":1,"report":"A"},{"integer":2,"report":"B"},{"integer":2,"report":"C"}]}"#;

    #[test]
    fn dictator_round_trip_and_run() {
        let inst = parse(DICTATOR);
        assert_eq!(inst.n_agents(), 3);
        let text = serde_json::to_string(&inst).unwrap();
        assert_eq!(parse(&text), inst);

        let out = run_instance(&inst).unwrap();
        assert_eq!(out["winner"], "C");
        assert_eq!(out["outcome"], 2);
    }

    #[test]
    fn transcripts_are_byte_identical() {
        let a = serde_json::to_string(&run_instance(&parse(DICTATOR)).unwrap()).unwrap();
        let b = serde_json::to_string(&run_instance(&parse(DICTATOR)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_errors_name_the_path() {
        let err = parse_instance(r#"{"domain":"lrm","agents":[{"integer":0,"report":"1/0"}]}"#)
            .unwrap_err();
        let InstanceError::Parse { path, .. } = &err else {
            panic!("expected a parse error, got {err:?}");
        };
        assert!(path.contains("agents[0]"), "path was {path}");

        let err = parse_instance(r#"{"domain":"noop"}"#).unwrap_err();
        assert!(matches!(err, InstanceError::Parse { .. }));
    }

    #[test]
    fn validation_names_the_agent() {
        let err = parse_instance(
            r#"{"domain":"peer","prefs":[[0,1],[1,0]],"bids":[0,7]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            InstanceError::Peer(PeerError::BidOutOfRange { agent: 1, bid: 7, .. })
        ));
    }

    #[test]
    fn lrm_run_reports_branch_and_location() {
        let inst = parse(
            r#"{"domain":"lrm","agents":[{"integer":1,"report":"0"},{"integer":0,"report":"1"}]}"#,
        );
        let out = run_instance(&inst).unwrap();
        assert_eq!(out["branch"], "midpoint");
        assert_eq!(out["location"], "1/2");
    }

    #[test]
    fn tasks_run_applies_the_xor_bits() {
        let inst = parse(
            r#"{"domain":"tasks","m":2,"t1":["1/1","2/1"],"t2":["2/1","1/1"],"bits":[[0,0],[1,1]]}"#,
        );
        let out = run_instance(&inst).unwrap();
        assert_eq!(out["bits"], serde_json::json!([0, 0]));
        assert_eq!(out["outcome"]["p1"], "8/3");

        let err = parse_instance(
            r#"{"domain":"tasks","m":3,"t1":["1/1"],"t2":["1/1"],"bits":[[0,0]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, InstanceError::TaskCountMismatch { m: 3, got: 1 }));
    }

    #[test]
    fn school_modes_must_match_bid_shape() {
        let lehmer = r#"{"domain":"school","students":[{"prefs":[0]},{"prefs":[0]}],"schools":[{"capacity":2,"groups":[[0,1]]}],"mode":"lehmer","bids":[1,0]}"#;
        let inst = parse(lehmer);
        let out = run_instance(&inst).unwrap();
        assert_eq!(out["domain"], "school");
        assert_eq!(out["matching"], serde_json::json!([0, 0]));

        let mismatched = lehmer.replace("\"lehmer\"", "\"compact\"");
        assert!(matches!(
            parse_instance(&mismatched),
            Err(InstanceError::BidShapeMismatch { .. })
        ));
    }

    #[test]
    fn alloc_ps_run_includes_realization_when_sigma_is_given() {
        let inst = parse(
            r#"{"domain":"alloc","mode":"ps","prefs":[[0,1],[0,1]],"sigma":0}"#,
        );
        let out = run_instance(&inst).unwrap();
        assert_eq!(out["matrix"][0][0], "1/2");
        assert_eq!(out["realization"]["modulus"], 2);
        assert_eq!(out["realization"]["draw"], "shifted");
        // sigma 0 under the shifted draw is the quantile 1/2: item 0 stays
        // with agent 0, item 1 goes to agent 0 as well (prefix 1/2 >= 1/2).
        assert_eq!(out["realization"]["allocation"], serde_json::json!([0, 0]));

        let rp = parse(r#"{"domain":"alloc","mode":"rp","prefs":[[0,1],[0,1]],"bids":[1,0]}"#);
        let out = run_instance(&rp).unwrap();
        assert_eq!(out["order"], serde_json::json!([1, 0]));
        assert!(matches!(
            parse_instance(r#"{"domain":"alloc","mode":"rp","prefs":[[0,1],[0,1]]}"#),
            Err(InstanceError::MissingBids)
        ));
    }

    #[test]
    fn exact_dist_defaults_to_uniform_policies() {
        let out = exact_dist(&parse(DICTATOR)).unwrap();
        assert_eq!(out["modulus"], 3);
        assert_eq!(out["distribution"], serde_json::json!(["1/3", "1/3", "1/3"]));
    }

    #[test]
    fn exact_dist_honours_fixed_policies() {
        let inst = parse(
            r#"{"domain":"dictator","agents":[{"integer":0,"report":"A"},{"integer":0,"report":"B"}],
                "policies":[{"kind":{"fixed":1}},{"kind":{"fixed":1}}]}"#,
        );
        let out = exact_dist(&inst).unwrap();
        assert_eq!(out["distribution"], serde_json::json!(["1/1", "0/1"]));
    }

    #[test]
    fn exact_dist_for_compact_school_lists_positions() {
        let inst = parse(
            r#"{"domain":"school","students":[{"prefs":[0]},{"prefs":[0]},{"prefs":[0]}],
                "schools":[{"capacity":3,"groups":[[0,1,2]]}],
                "mode":"compact","bids":{"a":[1,0,2],"b":[0,1,1]}}"#,
        );
        let out = exact_dist(&inst).unwrap();
        let positions = out["positions"].as_array().unwrap();
        assert_eq!(positions.len(), 3);
        assert_eq!(positions[0]["modulus"], 3);
        assert_eq!(positions[2]["distribution"], serde_json::json!(["1/1"]));
    }

    #[test]
    fn simulate_tallies_mechanism_outcomes() {
        let inst = parse(
            r#"{"domain":"dictator","agents":[{"integer":0,"report":"A"},{"integer":0,"report":"B"}]}"#,
        );
        let report = simulate_instance(&inst, 2000, 5, 1).unwrap();
        assert_eq!(report.trials, 2000);
        assert_eq!(report.outcome_frequencies.values().sum::<u64>(), 2000);
        assert_eq!(report.outcome_frequencies.len(), 2);
        assert!(report.empirical_tv < Rat::new(1, 10), "tv = {}", report.empirical_tv);
        for key in report.outcome_frequencies.keys() {
            assert!(key.contains("winner"), "key = {key}");
        }
    }

    #[test]
    fn simulate_is_worker_count_independent() {
        let inst = parse(
            r#"{"domain":"peer","prefs":[[0,1,2],[1,2,0],[2,0,1]],"bids":[0,0,0]}"#,
        );
        let one = simulate_instance(&inst, 600, 11, 1).unwrap();
        for workers in [2usize, 5] {
            assert_eq!(one, simulate_instance(&inst, 600, 11, workers).unwrap());
        }
    }

    #[test]
    fn simulate_applies_report_patches() {
        let inst = parse(
            r#"{"domain":"dictator","agents":[{"integer":0,"report":"A"},{"integer":0,"report":"B"}],
                "policies":[{"kind":{"fixed":0},"report":{"fixed":"Z"}},{"kind":{"fixed":0}}]}"#,
        );
        let report = simulate_instance(&inst, 50, 3, 1).unwrap();
        assert_eq!(report.outcome_frequencies.len(), 1);
        let (key, count) = report.outcome_frequencies.iter().next().unwrap();
        assert!(key.contains('Z'), "key = {key}");
        assert_eq!(*count, 50);
        assert_eq!(report.empirical_tv, Rat::zero());
    }

    #[test]
    fn simulate_tasks_uses_per_round_parity_games() {
        let inst = parse(
            r#"{"domain":"tasks","m":2,"t1":["1/1","2/1"],"t2":["2/1","1/1"],"bits":[[0,0],[0,0]],
                "policies":[{"kind":{"fixed":1}},{"kind":{"fixed":0}}]}"#,
        );
        // Both rounds deterministically play parity 1: tasks go to the agent
        // favoured by bit 1 when close enough.
        let report = simulate_instance(&inst, 40, 1, 1).unwrap();
        assert_eq!(report.outcome_frequencies.len(), 1);
        assert_eq!(report.empirical_tv, Rat::zero());

        let uniform = parse(
            r#"{"domain":"tasks","m":2,"t1":["1/1","2/1"],"t2":["2/1","1/1"],"bits":[[0,0],[0,0]]}"#,
        );
        let report = simulate_instance(&uniform, 4000, 2, 1).unwrap();
        assert!(report.empirical_tv < Rat::new(1, 10), "tv = {}", report.empirical_tv);
    }

    #[test]
    fn policy_count_must_match() {
        let err = parse_instance(
            r#"{"domain":"dictator","agents":[{"integer":0,"report":"A"}],
                "policies":[{"kind":"uniform"},{"kind":"uniform"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, InstanceError::PolicyCount { got: 2, expected: 1 }));
    }

    #[test]
    fn custom_policy_modulus_is_validated() {
        let err = parse_instance(
            r#"{"domain":"dictator","agents":[{"integer":0,"report":"A"},{"integer":0,"report":"B"}],
                "policies":[{"kind":{"custom":["1/3","1/3","1/3"]}},{"kind":"uniform"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            InstanceError::Sim(SimError::Game(ModGameError::ModulusMismatch { agent: 0, .. }))
        ));
    }

    #[test]
    fn mask_distribution_matches_direct_enumeration() {
        // One agent fixed at 1, one uniform: each round's parity is uniform.
        let strategies = vec![
            MixedStrategy::point(1, 2).unwrap(),
            MixedStrategy::uniform(2),
        ];
        let dist = tasks_mask_distribution(&strategies, 3).unwrap();
        assert_eq!(dist.len(), 8);
        assert!(dist.iter().all(|p| *p == Rat::new(1, 8)));

        // Both fixed: a single mask gets all the mass.
        let strategies = vec![
            MixedStrategy::point(1, 2).unwrap(),
            MixedStrategy::point(0, 2).unwrap(),
        ];
        let dist = tasks_mask_distribution(&strategies, 2).unwrap();
        assert_eq!(dist[0b11], Rat::one());
        assert_eq!(dist.iter().cloned().sum::<Rat>(), Rat::one());
    }

    #[test]
    fn uniform_policy_shortcut_has_no_size_limit() {
        // peer with n = 8: modulus 40320, far beyond the convolution cap,
        // but the all-uniform default needs no convolution.
        let n = 8;
        let prefs: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).map(|j| (i + j) % n).collect()).collect();
        let inst = InstanceFile::Peer(PeerDoc {
            prefs: PeerProfile::new(prefs).unwrap(),
            bids: vec![0; n],
            policies: None,
        });
        let out = exact_dist(&inst).unwrap();
        assert_eq!(out["modulus"], 40320);
        assert_eq!(out["distribution"][0], "1/40320");
    }

    #[test]
    fn patching_rejects_malformed_reports() {
        let inst = parse(DICTATOR);
        let mut policies = vec![AgentPolicy::uniform(); 3];
        policies[1].report = ReportPolicy::Fixed(serde_json::json!(42));
        assert!(matches!(
            patch_reports(&inst, &policies),
            Err(InstanceError::BadReportPatch { agent: 1, .. })
        ));

        policies[1].report = ReportPolicy::Fixed(serde_json::json!("Q"));
        let patched = patch_reports(&inst, &policies).unwrap();
        let InstanceFile::Dictator(DictatorDoc { agents, .. }) = &patched else { panic!() };
        assert_eq!(agents[1].report, "Q");
    }

    #[test]
    fn fixed_moves_outside_the_game_are_rejected() {
        let err = parse_instance(
            r#"{"domain":"lrm","agents":[{"integer":0,"report":"0"}],
                "policies":[{"kind":{"fixed":4}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            InstanceError::Sim(SimError::BadFixedMove { agent: 0, value: 4, modulus: 4 })
        ));
        // Moves in range are fine: the lrm game is always mod 4.
        let inst = parse(
            r#"{"domain":"lrm","agents":[{"integer":0,"report":"0"}],
                "policies":[{"kind":{"fixed":3}}]}"#,
        );
        assert_eq!(inst.game_modulus().unwrap(), 4);
    }
}
