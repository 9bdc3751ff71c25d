//! Deterministic derandomization by bilinear conditional expectations.

pub mod codes;
pub mod ensembles;
pub mod error;
pub mod rat;
pub mod bilinear;
pub mod mis;
pub mod oracles;
pub mod gbgame;
pub mod moments;
pub mod automata;
pub mod fooling;
pub mod apps;
pub mod cli;
