//! Finite-scale machinery for tree constructions in computability theory:
//! string coding, trees and f-trees, ordinal notations, stagewise oracle
//! approximations, and deterministic simulators for priority-tree and
//! splitting constructions.

pub mod strings_codes;
pub mod trees;
pub mod homeo;
pub mod ordinals;
pub mod approx;
pub mod functionals;
pub mod engine;
pub mod split_sim;
pub mod fsplit_subtree;
pub mod tower;
