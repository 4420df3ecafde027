//! Reference implementations used as oracles by the test suites.
//!
//! Everything here is written for clarity over speed and deliberately avoids
//! the main crate: graph operators are evaluated through nalgebra dense
//! algebra, betweenness by exhaustive path enumeration, rank statistics by
//! full permutation enumeration. Tests compare the production code against
//! these independent routes.

pub mod betweenness_ref;
pub mod dense_ref;
pub mod gradcheck;
pub mod graphs;
pub mod mwu_ref;
pub mod ttest;
