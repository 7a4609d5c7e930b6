//! Safe action spaces on the tangent space of a constraint manifold.
//!
//! An agent acts in a low-dimensional box; the controller maps every action
//! onto the tangent space of the manifold `k(s) + mu = 0` (plus any equality
//! rows), adds drift compensation and a contraction term, and returns a plant
//! control that keeps every inequality satisfied.
//!
//! ```
//! use atacom::controller::{atacom_step, ControllerConfig, PlantState};
//! use atacom::manifold::{ConstraintSet, DiskKeepOut, SingleIntegrator, SlackModel, Variant};
//! use nalgebra::dvector;
//!
//! let system = SingleIntegrator::new(2, 1.0);
//! let constraints = ConstraintSet::new().with(DiskKeepOut::new(dvector![0.5, 0.5], 0.15));
//! let slack = SlackModel::exponential(4.0).unwrap();
//! let out = atacom_step(
//!     Variant::FirstOrder,
//!     &system,
//!     &constraints,
//!     &slack,
//!     &PlantState::new(dvector![0.2, 0.5]),
//!     &dvector![1.0, 0.0],
//!     &ControllerConfig::default(),
//! )
//! .unwrap();
//! assert_eq!(out.action.u_s.len(), 2);
//! ```

pub mod controller;
pub mod envs;
pub mod error;
pub mod manifold;
pub mod numgeo;
pub mod verify;

pub use error::{Error, Result};
