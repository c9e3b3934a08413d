//! Uniform grids on the unit interval and unit square.
//!
//! State vectors live on interior nodes; for a Neumann right end the boundary
//! node x = 1 is an unknown and is appended to the state. Dirichlet boundary
//! values never enter the state — they reach the schemes only through
//! correction fields and boundary lifts.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Boundary operator kind on one side: trace value or outward flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Equidistant grid on (0,1) with `n_interior` inner points, dx = 1/(n_interior+1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n_interior: usize,
    pub bc_left: BcKind,
    pub bc_right: BcKind,
}

impl Grid1D {
    pub fn new(n_interior: usize, bc_left: BcKind, bc_right: BcKind) -> Result<Self> {
        if n_interior < 2 {
            return Err(Error::GridTooSmall { min: 2, got: n_interior });
        }
        Ok(Self { n_interior, bc_left, bc_right })
    }

    pub fn dirichlet(n_interior: usize) -> Result<Self> {
        Self::new(n_interior, BcKind::Dirichlet, BcKind::Dirichlet)
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n_interior as f64 + 1.0)
    }

    /// Number of unknowns: interior nodes, plus the x = 1 node if it is Neumann.
    pub fn unknowns(&self) -> usize {
        self.n_interior + usize::from(self.bc_right == BcKind::Neumann)
    }

    /// Coordinates of the unknowns, x_i = i dx.
    pub fn coords(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..=self.unknowns()).map(|i| i as f64 * dx).collect()
    }
}

/// Square grid on (0,1)² with Dirichlet data on all four sides.
///
/// Unknowns are ordered lexicographically with x fastest: the node
/// (x_i, y_j) = (i dx, j dx), i, j = 1..n, has linear index (j-1)*n + (i-1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub n_per_dim: usize,
}

impl Grid2D {
    pub fn new(n_per_dim: usize) -> Result<Self> {
        if n_per_dim < 2 {
            return Err(Error::GridTooSmall { min: 2, got: n_per_dim });
        }
        Ok(Self { n_per_dim })
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n_per_dim as f64 + 1.0)
    }

    pub fn unknowns(&self) -> usize {
        self.n_per_dim * self.n_per_dim
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        let n = self.n_per_dim;
        let dx = self.dx();
        let mut xs = Vec::with_capacity(n * n);
        for j in 1..=n {
            for i in 1..=n {
                xs.push((i as f64 * dx, j as f64 * dx));
            }
        }
        xs
    }
}

/// Node coordinates of the unknowns, 1D or 2D.
#[derive(Debug, Clone)]
pub enum Coords {
    OneD(Vec<f64>),
    TwoD(Vec<(f64, f64)>),
}

impl Coords {
    pub fn len(&self) -> usize {
        match self {
            Coords::OneD(v) => v.len(),
            Coords::TwoD(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What kind of domain the unknowns discretize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Interval { bc_left: BcKind, bc_right: BcKind },
    /// Unit square, Dirichlet on all four sides.
    Square,
    /// Synthetic operator without a physical boundary.
    Synthetic,
}

/// Grid metadata carried by an operator: spacing, spatial dimension,
/// per-node quadrature weights (None = all ones) and node coordinates.
///
/// A weight of 1/2 marks the Neumann end node: it is weighted dx/2 in the
/// L¹/L² norms and excluded from L∞.
#[derive(Debug, Clone)]
pub struct GridMeta {
    pub dx: f64,
    pub spatial_dim: usize,
    pub mass: Option<Vec<f64>>,
    pub coords: Coords,
    pub kind: GridKind,
}

impl GridMeta {
    pub fn volume_element(&self) -> f64 {
        self.dx.powi(self.spatial_dim as i32)
    }
}

/// A scalar field over space and time, matching the grid dimension.
#[derive(Clone)]
pub enum SpaceTimeFn {
    OneD(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    TwoD(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl SpaceTimeFn {
    pub fn one_d(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SpaceTimeFn::OneD(Arc::new(f))
    }

    pub fn two_d(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SpaceTimeFn::TwoD(Arc::new(f))
    }

    /// Sample the field at time `t` on the given nodes.
    pub fn sample(&self, t: f64, coords: &Coords) -> Result<Vec<f64>> {
        match (self, coords) {
            (SpaceTimeFn::OneD(f), Coords::OneD(xs)) => Ok(xs.iter().map(|&x| f(t, x)).collect()),
            (SpaceTimeFn::TwoD(f), Coords::TwoD(xy)) => {
                Ok(xy.iter().map(|&(x, y)| f(t, x, y)).collect())
            }
            _ => Err(Error::InvalidCorrection(
                "field dimensionality does not match the grid".into(),
            )),
        }
    }

    /// Point evaluation; the unused coordinate is ignored in 1D.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            SpaceTimeFn::OneD(f) => f(t, x),
            SpaceTimeFn::TwoD(f) => f(t, x, y),
        }
    }
}

impl std::fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpaceTimeFn::OneD(_) => write!(f, "SpaceTimeFn::OneD"),
            SpaceTimeFn::TwoD(_) => write!(f, "SpaceTimeFn::TwoD"),
        }
    }
}
