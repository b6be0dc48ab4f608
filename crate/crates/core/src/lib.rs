//! Optimization toolkit built around expression-graph models with
//! permutation, subset and partition decision variables.
//!
//! * [`model`]: declare decisions, constants, constraints and a minimized
//!   objective; evaluate states against the graph.
//! * [`problems`]: TSP, knapsack and max-cut instances, file formats,
//!   model builders and exact oracles for small instances.
//! * [`solver`]: portfolio solver whose branches pair a classical
//!   heuristic loop with an asynchronous QUBO sub-solver.
//! * [`qubo`]: penalty-model QUBO encodings, a simulated-annealing sampler
//!   and decoders back to problem states.
//! * [`stats`] and [`bench`]: approximation ratios, Friedman/Holm/Wilcoxon
//!   tests, the experiment runner and CSV reports.

pub mod model;
pub mod problems;
pub mod qubo;
pub mod solver;
pub mod stats;
pub mod bench;
