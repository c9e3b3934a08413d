//! Exponential integrators for parabolic initial-boundary-value problems
//! with non-homogeneous boundary conditions.
//!
//! The library integrates linear problems ∂t u = Du + f(t) and semilinear
//! problems ∂t u = Du + f(t,u) under a boundary condition Bu = b(t) by
//! subtracting a smooth extension z of the boundary data (the correction
//! field), which reformulates the problem with homogeneous boundary
//! conditions and modified source g = f + k, k = Dz − ∂t z. Exponential
//! quadrature rules and explicit exponential Runge–Kutta methods are then
//! applied spectrally on fixed grids.
//!
//! Modules:
//! * [`grid`] / [`operator`] — spatial discretizations, spectral transforms,
//!   discrete and fractional-power norms;
//! * [`phi`] — φ functions, quadrature nodes and operator-valued weights;
//! * [`correction`] — analytic, harmonic, stationary and chain corrections;
//! * [`scheme`] — steppers, tableaux, step sequences and the integrator.

pub mod correction;
pub mod error;
pub mod grid;
pub mod operator;
pub mod phi;
pub mod scheme;

pub use error::{Error, Result};
