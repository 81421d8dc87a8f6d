//! Meshfree solver for the cardiac monodomain reaction–diffusion model.
//!
//! The solver discretizes the tissue into a scattered node cloud and enforces
//! the monodomain equation pointwise at every node (mixed collocation): both
//! the transmembrane potential and its flux are interpolated with local trial
//! functions, so no mesh or quadrature is needed. Two interpolating trial
//! functions are provided — radial point interpolation (RPI) and moving
//! Kriging interpolation (MKI) — both built on the multiquadric radial basis
//! function and both satisfying the Kronecker delta property.
//!
//! Module map:
//!
//! * [`node_cloud`] — node-cloud generation (regular grids, immersed grids
//!   clipped to a closed surface), support domains, boundary normals.
//! * [`approximants`] — RPI and MKI trial functions and their gradients.
//! * [`assembly`] — sparse mixed-collocation operators with penalty-enforced
//!   zero-flux boundary conditions.
//! * [`ionic`] — pluggable cell models (FitzHugh–Nagumo, Mitchell–Schaeffer)
//!   and stimulus protocols.
//! * [`solver`] — operator-splitting time integration, a structured-grid FEM
//!   reference solver, and comparison metrics (NRMS, TPD, LAT).
//!
//! All numerical kernels are generic over the floating-point scalar through
//! the [`Real`] trait; the aliases below fix `f64`, which is what the command
//! line front end uses.

pub mod approximants;
pub mod assembly;
pub mod ionic;
pub mod node_cloud;
pub mod point;
pub mod scalar;
pub mod solver;
pub mod sparse;

pub use point::Point;
pub use scalar::Real;

// Downstream crates build vector-valued fields (fibers, normals) with the
// same nalgebra version the cloud types use.
pub use nalgebra;

/// Node cloud over `f64` coordinates.
pub type Cloud = node_cloud::NodeCloud<f64>;
/// Closed triangulated surface over `f64` coordinates.
pub type Mesh = node_cloud::SurfaceMesh<f64>;
/// Support table over `f64` radii.
pub type Supports = node_cloud::SupportTable<f64>;
/// Trial-function set over `f64`.
pub type Shapes = approximants::ShapeFunctionSet<f64>;
/// Assembled collocation operators over `f64`.
pub type Operators = assembly::SystemMatrices<f64>;
/// Simulation configuration over `f64`.
pub type Config = solver::SimulationConfig<f64>;
