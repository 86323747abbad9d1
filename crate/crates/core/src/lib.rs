//! Right-angled buildings presented as graph products, shadow coverings of
//! their boundaries, and combinatorial p-moduli of curve families on those
//! coverings.

pub mod boundary_approx;
pub mod experiments;
pub mod group_engine;
pub mod modulus_solver;
pub mod presentation;
pub mod wall_geometry;
