//! Constraint declarations, slack dynamics, plant models and the assembly of
//! the augmented constraint-manifold geometry.

pub mod assembly;
pub mod constraints;
pub mod slack;
pub mod system;

pub use assembly::{
    assemble, constraint_residual, inequality_values, second_order_constraint, AugmentedAssembly,
    AugmentedState, Variant,
};
pub use constraints::{
    BoxBounds, Constraint, ConstraintKind, ConstraintSet, DiskKeepOut, FnConstraint,
    LinearConstraint, MovingDiskKeepOut, SphereEquality,
};
pub use slack::{slack_alpha, slack_reset, SlackFamily, SlackModel};
pub use system::{
    clip_to_bounds, ControlAffineSystem, DoubleIntegrator, LinearSystem, SingleIntegrator,
    SystemOrder,
};
