//! Deterministic counterparts of classically randomized mechanisms.
//!
//! The common trick: wherever a mechanism wants a coin flip or a random
//! permutation, let the participants themselves submit integers and use
//! their sum modulo the right base as the random seed. As long as at least
//! one participant randomizes uniformly, the seed is uniform; profiles where
//! at least two do are equilibria, because each agent then faces a uniform
//! residual sum and cannot move the distribution at all.
//!
//! The crate carries six mechanism families built on that idea, plus the
//! machinery to *check* their claimed properties with exact rational
//! arithmetic and brute-force oracles rather than sampling:
//!
//! * [`voting`]: random dictator over submitted ballots;
//! * [`facility`]: left-right-middle facility location on a line;
//! * [`tasks`]: two-machine task scheduling with payments, one parity game
//!   per task interleaved with the allocation;
//! * [`peer`]: peer selection by sequential elimination (seed drawn first)
//!   and a fixed-audience partition mechanism (parity game played last);
//! * [`school`]: school choice via deferred acceptance with a shared
//!   tie-breaking permutation, in full-width or compact-bid form;
//! * [`allocation`]: the probabilistic serial assignment realized from a
//!   single modular draw, and random priority via a permutation game.
//!
//! Supporting modules: [`modgame`] (the game itself), [`permute`] (Lehmer
//! codes and the compact permutation game), [`rational`] (exact arithmetic),
//! [`verdict`] (check results with witnesses), [`sim`] (seeded Monte Carlo),
//! [`instance`] (the JSON instance format used by the CLI), [`sampling`]
//! (seeded random instance generators) and [`suites`] (the named
//! verification suites the CLI exposes).

pub mod allocation;
pub mod facility;
pub mod instance;
pub mod modgame;
pub mod peer;
pub mod permute;
pub mod rational;
pub mod sampling;
pub mod school;
pub mod sim;
pub mod suites;
pub mod tasks;
pub mod verdict;
pub mod voting;

pub use rational::Rat;
pub use verdict::Verdict;
