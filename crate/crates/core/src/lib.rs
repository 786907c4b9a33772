//! Stability analysis for two-dimensional Markov processes of QBD type with
//! countably many phases, on the quarter-plane and the half-plane.

pub mod halfplane;
pub mod markov;
pub mod qbd;
pub mod simulate;
pub mod stability;
