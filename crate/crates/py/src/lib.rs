//! Python bindings: the core mechanisms as plain functions over ints,
//! strings ("num/den" rationals), and lists, plus JSON bridges for the
//! instance-file layer.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use derand::allocation::{AllocInstance, DrawMode, RationalMatrix};
use derand::facility::{FacilityBranch, FacilityReport};
use derand::modgame::{MixedStrategy, ModGame};
use derand::peer::{PeerProfile, RsePlay};
use derand::permute::Permutation;
use derand::rational::Rat;
use derand::school::{School, SchoolBids, SchoolInstance, Student};
use derand::suites::SuiteConfig;
use derand::tasks::{TaskInstance, TaskOutcome};
use derand::voting::DictatorBallot;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rat(text: &str) -> PyResult<Rat> {
    text.parse::<Rat>().map_err(err)
}

fn rat_vec(texts: Vec<String>) -> PyResult<Vec<Rat>> {
    texts.iter().map(|t| rat(t)).collect()
}

fn rat_rows(rows: Vec<Vec<String>>) -> PyResult<Vec<Vec<Rat>>> {
    rows.into_iter().map(rat_vec).collect()
}

fn strings(rats: &[Rat]) -> Vec<String> {
    rats.iter().map(Rat::to_string).collect()
}

fn draw_mode(name: &str) -> PyResult<DrawMode> {
    match name {
        "shifted" => Ok(DrawMode::Shifted),
        "literal" => Ok(DrawMode::Literal),
        other => Err(PyValueError::new_err(format!(
            "draw must be \"shifted\" or \"literal\", got {other:?}"
        ))),
    }
}

#[pyfunction]
fn factorial(n: usize) -> PyResult<u64> {
    derand::permute::factorial(n).map_err(err)
}

#[pyfunction]
fn lehmer_encode(perm: Vec<usize>) -> PyResult<u64> {
    let p = Permutation::new(perm).map_err(err)?;
    derand::permute::lehmer_encode(&p).map_err(err)
}

#[pyfunction]
fn lehmer_decode(code: u64, n: usize) -> PyResult<Vec<usize>> {
    Ok(derand::permute::lehmer_decode(code, n).map_err(err)?.as_slice().to_vec())
}

/// Voters submit (integer, candidate) pairs; the sum of integers mod n picks
/// the dictating ballot. Returns (dictator index, winning candidate).
#[pyfunction]
fn derand_dictator(agents: Vec<(u64, String)>) -> PyResult<(usize, String)> {
    let ballots: Vec<DictatorBallot> =
        agents.into_iter().map(|(integer, report)| DictatorBallot { integer, report }).collect();
    let out = derand::voting::derand_dictator(&ballots).map_err(err)?;
    Ok((out.dictator, out.winner))
}

/// Agents submit (integer in [0,4), position) pairs. Returns
/// (branch, location) where branch is "leftmost", "midpoint" or "rightmost".
#[pyfunction]
fn derand_lrm(agents: Vec<(u64, String)>) -> PyResult<(String, String)> {
    let reports: Vec<FacilityReport> = agents
        .into_iter()
        .map(|(integer, position)| Ok(FacilityReport { integer, position: rat(&position)? }))
        .collect::<PyResult<_>>()?;
    let out = derand::facility::derand_lrm(&reports).map_err(err)?;
    let branch = match out.branch {
        FacilityBranch::Leftmost => "leftmost",
        FacilityBranch::Midpoint => "midpoint",
        FacilityBranch::Rightmost => "rightmost",
    };
    Ok((branch.to_string(), out.location.to_string()))
}

#[pyfunction]
fn lrm_expected_ratio(positions: Vec<String>) -> PyResult<String> {
    Ok(derand::facility::lrm_expected_ratio(&rat_vec(positions)?).map_err(err)?.to_string())
}

fn task_tuple(out: TaskOutcome) -> (Vec<usize>, String, Vec<usize>, String) {
    (
        out.tasks_of(0).to_vec(),
        out.payment_of(0).to_string(),
        out.tasks_of(1).to_vec(),
        out.payment_of(1).to_string(),
    )
}

/// One favour bit per task. Returns (tasks of agent 0, payment of agent 0,
/// tasks of agent 1, payment of agent 1).
#[pyfunction]
fn biased_min_work(
    t1: Vec<String>,
    t2: Vec<String>,
    bits: Vec<u8>,
) -> PyResult<(Vec<usize>, String, Vec<usize>, String)> {
    let inst = TaskInstance::truthful(rat_vec(t1)?, rat_vec(t2)?).map_err(err)?;
    Ok(task_tuple(derand::tasks::biased_min_work(&inst, &bits).map_err(err)?))
}

/// Each task's favour bit is the XOR of the two agents' submitted bits.
#[pyfunction]
fn derand_biased_min_work(
    t1: Vec<String>,
    t2: Vec<String>,
    bit_pairs: Vec<(u8, u8)>,
) -> PyResult<(Vec<usize>, String, Vec<usize>, String)> {
    let inst = TaskInstance::truthful(rat_vec(t1)?, rat_vec(t2)?).map_err(err)?;
    Ok(task_tuple(derand::tasks::derand_biased_min_work(&inst, &bit_pairs).map_err(err)?))
}

/// Winner of the sequential elimination game for one order, by backward
/// induction reduced to sincere reversed removal (linear time).
#[pyfunction]
fn spe_winner(order: Vec<usize>, prefs: Vec<Vec<usize>>) -> PyResult<usize> {
    let order = Permutation::new(order).map_err(err)?;
    let profile = PeerProfile::new(prefs).map_err(err)?;
    derand::peer::spe_winner_linear(&order, &profile).map_err(err)
}

/// Same winner via exhaustive backward induction over elimination subsets.
#[pyfunction]
fn spe_winner_bruteforce(order: Vec<usize>, prefs: Vec<Vec<usize>>) -> PyResult<usize> {
    let order = Permutation::new(order).map_err(err)?;
    let profile = PeerProfile::new(prefs).map_err(err)?;
    derand::peer::spe_winner_oracle(&order, &profile).map_err(err)
}

/// Bids select the elimination order (sum mod n!); sincere play follows.
/// Returns (order, winner).
#[pyfunction]
fn derand_rse(bids: Vec<u64>, prefs: Vec<Vec<usize>>) -> PyResult<(Vec<usize>, usize)> {
    let profile = PeerProfile::new(prefs).map_err(err)?;
    let out =
        derand::peer::derand_rse(&bids, &profile, RsePlay::SincereReversed).map_err(err)?;
    Ok((out.order.as_slice().to_vec(), out.winner))
}

/// Two audience bits; their XOR picks the candidate side, plurality among
/// the other side's voters (lowest index breaking ties) picks the winner.
#[pyfunction]
fn partition_winner(prefs: Vec<Vec<usize>>, bits: (u8, u8)) -> PyResult<usize> {
    let profile = PeerProfile::new(prefs).map_err(err)?;
    derand::peer::partition_winner(&profile, &[bits.0, bits.1]).map_err(err)
}

/// Deferred acceptance with one shared tie-breaking permutation selected by
/// the bid sum mod n!. `groups[s]` lists each school's priority classes.
/// Returns (permutation, matching) where unmatched students map to None.
#[pyfunction]
fn derand_da(
    student_prefs: Vec<Vec<usize>>,
    capacities: Vec<usize>,
    groups: Vec<Vec<Vec<usize>>>,
    bids: Vec<u64>,
) -> PyResult<(Vec<usize>, Vec<Option<usize>>)> {
    if capacities.len() != groups.len() {
        return Err(PyValueError::new_err(format!(
            "{} capacities for {} schools",
            capacities.len(),
            groups.len()
        )));
    }
    let instance = SchoolInstance {
        students: student_prefs.into_iter().map(|prefs| Student { prefs }).collect(),
        schools: capacities
            .into_iter()
            .zip(groups)
            .map(|(capacity, groups)| School { capacity, groups })
            .collect(),
    };
    let transcript =
        derand::school::derand_da(&instance, &SchoolBids::Lehmer(bids)).map_err(err)?;
    Ok((transcript.perm.as_slice().to_vec(), transcript.matching.assignment))
}

/// Exact simultaneous-eating probabilities, row per agent, as "num/den"
/// strings.
#[pyfunction]
fn probabilistic_serial(prefs: Vec<Vec<usize>>) -> PyResult<Vec<Vec<String>>> {
    let inst = AllocInstance::new(prefs).map_err(err)?;
    let (matrix, _) = derand::allocation::probabilistic_serial(&inst).map_err(err)?;
    Ok(matrix.p.iter().map(|row| strings(row)).collect())
}

/// Turn a fractional matrix into a discrete allocation with the single draw
/// sigma (draw "shifted" or "literal"). Returns owner per item.
#[pyfunction]
fn realize_assignment(
    matrix: Vec<Vec<String>>,
    sigma: u64,
    modulus: u64,
    draw: &str,
) -> PyResult<Vec<usize>> {
    let matrix = RationalMatrix { p: rat_rows(matrix)? };
    let alloc = derand::allocation::realize_assignment(&matrix, sigma, modulus, draw_mode(draw)?)
        .map_err(err)?;
    Ok(alloc.owner)
}

#[pyfunction]
fn serial_dictatorship(order: Vec<usize>, prefs: Vec<Vec<usize>>) -> PyResult<Vec<usize>> {
    let order = Permutation::new(order).map_err(err)?;
    let inst = AllocInstance::new(prefs).map_err(err)?;
    Ok(derand::allocation::serial_dictatorship(&order, &inst).map_err(err)?.owner)
}

/// Bids select the priority order (sum mod n!). Returns (order, owners).
#[pyfunction]
fn derand_rp(bids: Vec<u64>, prefs: Vec<Vec<usize>>) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let inst = AllocInstance::new(prefs).map_err(err)?;
    let out = derand::allocation::derand_rp(&bids, &inst).map_err(err)?;
    Ok((out.order.as_slice().to_vec(), out.allocation.owner))
}

/// Exact random-priority distribution by enumerating all n! orders.
#[pyfunction]
fn rp_distribution(prefs: Vec<Vec<usize>>) -> PyResult<Vec<Vec<String>>> {
    let inst = AllocInstance::new(prefs).map_err(err)?;
    let matrix = derand::allocation::rp_distribution_oracle(&inst).map_err(err)?;
    Ok(matrix.p.iter().map(|row| strings(row)).collect())
}

/// Exact distribution of the sum-mod game under per-agent mixed strategies.
#[pyfunction]
fn outcome_distribution(profile: Vec<Vec<String>>, modulus: u64) -> PyResult<Vec<String>> {
    let strategies: Vec<MixedStrategy> = rat_rows(profile)?
        .into_iter()
        .map(MixedStrategy::from_probs)
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let dist = derand::modgame::outcome_distribution(&strategies, modulus).map_err(err)?;
    Ok(strings(dist.probs()))
}

/// Check a mixed profile for Nash equilibrium by exhausting pure deviations.
/// Returns (pass, witness) where witness is (agent, play, gain) or None.
#[pyfunction]
fn verify_nash(
    utilities: Vec<Vec<String>>,
    profile: Vec<Vec<String>>,
    modulus: u64,
) -> PyResult<(bool, Option<(usize, u64, String)>)> {
    let n = utilities.len();
    let game = ModGame::new(n, modulus, rat_rows(utilities)?).map_err(err)?;
    let strategies: Vec<MixedStrategy> = rat_rows(profile)?
        .into_iter()
        .map(MixedStrategy::from_probs)
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let verdict = derand::modgame::verify_nash(&game, &strategies).map_err(err)?;
    let witness =
        verdict.witness().map(|w| (w.agent, w.play, w.gain.to_string()));
    Ok((verdict.pass, witness))
}

/// Parse an instance document and replay it; returns the transcript as a
/// JSON string (byte-identical for identical inputs).
#[pyfunction]
fn run_instance(text: &str) -> PyResult<String> {
    let inst = derand::instance::parse_instance(text).map_err(err)?;
    let out = derand::instance::run_instance(&inst).map_err(err)?;
    Ok(serde_json::to_string(&out).expect("JSON value"))
}

/// Exact outcome distribution of an instance's embedded game, as JSON.
#[pyfunction]
fn exact_dist(text: &str) -> PyResult<String> {
    let inst = derand::instance::parse_instance(text).map_err(err)?;
    let out = derand::instance::exact_dist(&inst).map_err(err)?;
    Ok(serde_json::to_string(&out).expect("JSON value"))
}

/// Monte Carlo tally of the mechanism outcomes an instance's game induces,
/// as JSON. Deterministic in (trials, seed) for every worker count.
#[pyfunction]
#[pyo3(signature = (text, trials, seed, workers = 1))]
fn simulate(text: &str, trials: u64, seed: u64, workers: usize) -> PyResult<String> {
    let inst = derand::instance::parse_instance(text).map_err(err)?;
    let report =
        derand::instance::simulate_instance(&inst, trials, seed, workers).map_err(err)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

/// Names of the verification suites, in recommended execution order.
#[pyfunction]
fn suite_names() -> Vec<String> {
    derand::suites::suite_names().iter().map(|s| s.to_string()).collect()
}

/// Run one named verification suite; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (name, n = None, samples = None, seed = None))]
fn run_suite(
    name: &str,
    n: Option<usize>,
    samples: Option<u64>,
    seed: Option<u64>,
) -> PyResult<String> {
    let report =
        derand::suites::run_suite(name, &SuiteConfig { n, samples, seed }).map_err(err)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

#[pymodule]
fn derand_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(factorial, m)?)?;
    m.add_function(wrap_pyfunction!(lehmer_encode, m)?)?;
    m.add_function(wrap_pyfunction!(lehmer_decode, m)?)?;
    m.add_function(wrap_pyfunction!(derand_dictator, m)?)?;
    m.add_function(wrap_pyfunction!(derand_lrm, m)?)?;
    m.add_function(wrap_pyfunction!(lrm_expected_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(biased_min_work, m)?)?;
    m.add_function(wrap_pyfunction!(derand_biased_min_work, m)?)?;
    m.add_function(wrap_pyfunction!(spe_winner, m)?)?;
    m.add_function(wrap_pyfunction!(spe_winner_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(derand_rse, m)?)?;
    m.add_function(wrap_pyfunction!(partition_winner, m)?)?;
    m.add_function(wrap_pyfunction!(derand_da, m)?)?;
    m.add_function(wrap_pyfunction!(probabilistic_serial, m)?)?;
    m.add_function(wrap_pyfunction!(realize_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(serial_dictatorship, m)?)?;
    m.add_function(wrap_pyfunction!(derand_rp, m)?)?;
    m.add_function(wrap_pyfunction!(rp_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(outcome_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(verify_nash, m)?)?;
    m.add_function(wrap_pyfunction!(run_instance, m)?)?;
    m.add_function(wrap_pyfunction!(exact_dist, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(suite_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
