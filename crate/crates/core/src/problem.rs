//! The benchmark boundary-value problems.

use std::fmt;
use std::str::FromStr;

use crate::dense::DenseMatrix;
use crate::fem::{self, DofMap, PdeCoefficients, StiffnessMatrix};
use crate::mesh::{self, Mesh};
use crate::{Error, Result};

/// Diffusion coefficient of the convection–diffusion benchmark.
pub const CONVDIFF_DIFFUSION: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    /// `-Δu` on the unit square, Dirichlet on `x₁ = 0` and `x₂ = 0`.
    Mixed2d,
    /// Stabilized pure-Neumann Laplacian on the unit square.
    Neumann2d,
    /// `-Δu` on the unit cube, Dirichlet on the three faces `x_i = 0`.
    Mixed3d,
    Neumann3d,
    /// `-c Δu + b·∇u` on the L-shape, Neumann on `x₂ = 0` and `x₁ = 1`.
    ConvDiffLShape,
}

impl Problem {
    pub const ALL: [Problem; 5] =
        [Problem::Mixed2d, Problem::Neumann2d, Problem::Mixed3d, Problem::Neumann3d, Problem::ConvDiffLShape];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Mixed2d => "mixed-2d",
            Problem::Neumann2d => "neumann-2d",
            Problem::Mixed3d => "mixed-3d",
            Problem::Neumann3d => "neumann-3d",
            Problem::ConvDiffLShape => "convdiff-lshape",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Problem::Mixed3d | Problem::Neumann3d => 3,
            _ => 2,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != Problem::ConvDiffLShape
    }

    pub fn is_pure_neumann(self) -> bool {
        matches!(self, Problem::Neumann2d | Problem::Neumann3d)
    }

    /// Mesh with `n` subdivisions per axis and classified boundary.
    pub fn build_mesh(self, n: usize) -> Result<Mesh> {
        let mut m = match self {
            Problem::Mixed2d | Problem::Neumann2d => mesh::build_unit_square(n)?,
            Problem::Mixed3d | Problem::Neumann3d => mesh::build_unit_cube(n)?,
            Problem::ConvDiffLShape => mesh::build_lshape(n)?,
        };
        m.classify_boundary(self)?;
        Ok(m)
    }

    /// Number of free DOFs without assembling anything.
    pub fn num_dofs(self, n: usize) -> Result<usize> {
        Ok(DofMap::from_mesh(&self.build_mesh(n)?).len())
    }

    pub fn setup(self, n: usize) -> Result<ProblemSetup> {
        let mesh = self.build_mesh(n)?;
        let dofmap = DofMap::from_mesh(&mesh);
        let matrix = match self {
            Problem::Mixed2d | Problem::Mixed3d => fem::assemble(&mesh, &PdeCoefficients::laplace(self.dim()), &dofmap)?,
            Problem::Neumann2d | Problem::Neumann3d => fem::assemble_neumann(&mesh, DenseMatrix::identity(self.dim()))?,
            Problem::ConvDiffLShape => fem::assemble_convdiff(&mesh, CONVDIFF_DIFFUSION, &dofmap)?,
        };
        Ok(ProblemSetup { problem: self, mesh, dofmap, matrix })
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

/// Mesh, DOF numbering and assembled matrix of one problem instance.
pub struct ProblemSetup {
    pub problem: Problem,
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub matrix: StiffnessMatrix,
}
