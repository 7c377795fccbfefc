//! Optimal anonymous multi-agent pathfinding.
//!
//! Robots are matched to interchangeable goals and routed on a 4-connected
//! grid so that the sum of arrival times is minimal and no two robots collide.
//! [`cbs::solve`] searches a forest of conflict-based search trees, one per
//! candidate matching, and asks [`kbest::AssignmentGenerator`] for the next
//! matching only when the forest can no longer make progress at the current
//! cost. Three enhancements can be toggled independently through
//! [`cbs::Variant`]; with all three off the solver behaves like CBS-TA.

pub mod assignment;
pub mod cbs;
pub mod error;
pub mod grid;
pub mod kbest;
pub mod oracle;
pub mod pathfinding;
pub mod validate;

pub use error::{Error, Result};
