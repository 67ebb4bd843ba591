//! P1 Galerkin assembly over the free degrees of freedom.
//!
//! The assembled bilinear form is
//! `a(u,v) = ⟨C∇u,∇v⟩ + ⟨b·∇u + βu, v⟩ + ⟨αu, v⟩_Robin`,
//! optionally augmented with the stabilization term `⟨u,1⟩⟨v,1⟩` used for
//! pure Neumann problems. Constant-coefficient terms are integrated exactly;
//! variable convection and reaction coefficients are evaluated at element
//! barycenters.

use crate::dense::{self, DenseMatrix};
use crate::mesh::{BoundaryTag, Mesh};
use crate::norm::LinearOperator;
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

type VectorField = Box<dyn Fn(&[f64]) -> [f64; 3] + Send + Sync>;
type ScalarField = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub struct PdeCoefficients {
    dim: usize,
    diffusion: DenseMatrix,
    convection: Option<VectorField>,
    reaction: Option<ScalarField>,
    stabilization: bool,
}

impl PdeCoefficients {
    /// Pure diffusion with `C = I`.
    pub fn laplace(dim: usize) -> Self {
        PdeCoefficients {
            dim,
            diffusion: DenseMatrix::identity(dim),
            convection: None,
            reaction: None,
            stabilization: false,
        }
    }

    /// Constant diffusion tensor; must be symmetric positive definite.
    pub fn with_diffusion(mut self, diffusion: DenseMatrix) -> Result<Self> {
        if diffusion.nrows() != self.dim || diffusion.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: diffusion.nrows() });
        }
        dense::cholesky(&diffusion)?;
        self.diffusion = diffusion;
        Ok(self)
    }

    /// Convection field `b(x)`; only the first `dim` components are used.
    pub fn with_convection(mut self, b: impl Fn(&[f64]) -> [f64; 3] + Send + Sync + 'static) -> Self {
        self.convection = Some(Box::new(b));
        self
    }

    pub fn with_reaction(mut self, beta: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.reaction = Some(Box::new(beta));
        self
    }

    /// Adds the rank-one term `⟨u,1⟩⟨v,1⟩`.
    pub fn stabilized(mut self) -> Self {
        self.stabilization = true;
        self
    }

    pub fn diffusion(&self) -> &DenseMatrix {
        &self.diffusion
    }

    pub fn is_symmetric(&self) -> bool {
        self.convection.is_none()
    }
}

/// Numbering of the free (non-Dirichlet) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    free_nodes: Vec<usize>,
    node_to_dof: Vec<Option<usize>>,
}

impl DofMap {
    /// Free nodes in node order; a node is constrained iff it touches a
    /// Dirichlet facet.
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let dirichlet = mesh.dirichlet_nodes();
        let mut node_to_dof = vec![None; mesh.num_nodes()];
        let mut free_nodes = Vec::new();
        for (node, &fixed) in dirichlet.iter().enumerate() {
            if !fixed {
                node_to_dof[node] = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
        DofMap { free_nodes, node_to_dof }
    }

    pub fn len(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free_nodes.is_empty()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof.get(node).copied().flatten()
    }
}

/// Assembled system matrix: a sparse part plus the optional rank-one
/// stabilization `m mᵀ`, kept factored so the matrix stays sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    pub sparse: SparseMatrix,
    pub stabilization: Option<Vec<f64>>,
}

impl StiffnessMatrix {
    pub fn dim(&self) -> usize {
        self.sparse.nrows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = self.sparse.to_dense();
        if let Some(m) = &self.stabilization {
            for (i, &mi) in m.iter().enumerate() {
                dense::axpy(mi, m, d.row_mut(i));
            }
        }
        d
    }

    /// Materializes `K + m mᵀ` as a (dense-pattern) sparse matrix.
    pub fn to_sparse(&self) -> SparseMatrix {
        match &self.stabilization {
            None => self.sparse.clone(),
            Some(m) => {
                let mut t: Vec<_> = self.sparse.triplets().collect();
                for (i, &mi) in m.iter().enumerate() {
                    t.extend(m.iter().enumerate().map(|(j, &mj)| (i, j, mi * mj)));
                }
                SparseMatrix::from_triplets(self.dim(), self.dim(), t).expect("indices in range")
            }
        }
    }

    pub fn permuted(&self, new_of_old: &[usize]) -> Result<Self> {
        let sparse = self.sparse.permuted(new_of_old)?;
        let stabilization = self.stabilization.as_ref().map(|m| {
            let mut p = vec![0.0; m.len()];
            for (old, &new) in new_of_old.iter().enumerate() {
                p[new] = m[old];
            }
            p
        });
        Ok(StiffnessMatrix { sparse, stabilization })
    }
}

impl LinearOperator for StiffnessMatrix {
    fn nrows(&self) -> usize {
        self.dim()
    }
    fn ncols(&self) -> usize {
        self.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.sparse.apply(x, y);
        if let Some(m) = &self.stabilization {
            dense::axpy(dense::dot(m, x), m, y);
        }
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.sparse.apply_transpose(x, y);
        if let Some(m) = &self.stabilization {
            dense::axpy(dense::dot(m, x), m, y);
        }
    }
}

/// Geometry of one P1 simplex: barycentric gradients, volume, barycenter.
pub(crate) struct ElementGeometry {
    pub grads: Vec<[f64; 3]>,
    pub volume: f64,
    pub barycenter: [f64; 3],
}

pub(crate) fn element_geometry(mesh: &Mesh, verts: &[usize]) -> ElementGeometry {
    let d = mesh.dim();
    let x0 = mesh.node(verts[0]);
    // jac[r][c] = (x_{c+1} - x_0)_r
    let mut jac = [[0.0; 3]; 3];
    for c in 0..d {
        let xc = mesh.node(verts[c + 1]);
        for r in 0..d {
            jac[r][c] = xc[r] - x0[r];
        }
    }
    let (inv, det) = invert_small(&jac, d);
    let mut grads = vec![[0.0; 3]; d + 1];
    // grad λ_{i+1} = row i of J⁻¹
    for i in 0..d {
        for k in 0..d {
            grads[i + 1][k] = inv[i][k];
            grads[0][k] -= inv[i][k];
        }
    }
    let factorial = if d == 2 { 2.0 } else { 6.0 };
    let mut barycenter = [0.0; 3];
    for &v in verts {
        for (k, b) in barycenter.iter_mut().enumerate().take(d) {
            *b += mesh.node(v)[k] / (d + 1) as f64;
        }
    }
    ElementGeometry { grads, volume: det.abs() / factorial, barycenter }
}

fn invert_small(a: &[[f64; 3]; 3], d: usize) -> ([[f64; 3]; 3], f64) {
    let mut inv = [[0.0; 3]; 3];
    if d == 2 {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        inv[0][0] = a[1][1] / det;
        inv[0][1] = -a[0][1] / det;
        inv[1][0] = -a[1][0] / det;
        inv[1][1] = a[0][0] / det;
        return (inv, det);
    }
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    let det = a[0][0] * cof(1, 2, 1, 2) - a[0][1] * cof(1, 2, 0, 2) + a[0][2] * cof(1, 2, 0, 1);
    inv[0][0] = cof(1, 2, 1, 2) / det;
    inv[0][1] = -cof(0, 2, 1, 2) / det;
    inv[0][2] = cof(0, 1, 1, 2) / det;
    inv[1][0] = -cof(1, 2, 0, 2) / det;
    inv[1][1] = cof(0, 2, 0, 2) / det;
    inv[1][2] = -cof(0, 1, 0, 2) / det;
    inv[2][0] = cof(1, 2, 0, 1) / det;
    inv[2][1] = -cof(0, 2, 0, 1) / det;
    inv[2][2] = cof(0, 1, 0, 1) / det;
    (inv, det)
}

/// Local element matrix of the volume terms, row `i` = test function `ψ_i`.
pub(crate) fn element_matrix(geo: &ElementGeometry, coeffs: &PdeCoefficients) -> Vec<Vec<f64>> {
    let d = coeffs.dim;
    let nloc = d + 1;
    let c = &coeffs.diffusion;
    let beta = coeffs.reaction.as_ref().map(|f| f(&geo.barycenter[..d]));
    let mass_scale = geo.volume / ((d + 1) * (d + 2)) as f64;
    let mut local = vec![vec![0.0; nloc]; nloc];
    for i in 0..nloc {
        for j in i..nloc {
            let mut cg = 0.0;
            for r in 0..d {
                for s in 0..d {
                    cg += geo.grads[i][r] * c[(r, s)] * geo.grads[j][s];
                }
            }
            let mut v = geo.volume * cg;
            if let Some(beta) = beta {
                v += beta * mass_scale * if i == j { 2.0 } else { 1.0 };
            }
            local[i][j] = v;
            local[j][i] = v;
        }
    }
    if let Some(b) = &coeffs.convection {
        let bv = b(&geo.barycenter[..d]);
        let weight = geo.volume / nloc as f64;
        for (j, grad) in geo.grads.iter().enumerate() {
            let bg: f64 = (0..d).map(|k| bv[k] * grad[k]).sum();
            for row in local.iter_mut() {
                row[j] += weight * bg;
            }
        }
    }
    local
}

fn facet_measure(mesh: &Mesh, facet: &[usize]) -> f64 {
    let p0 = mesh.node(facet[0]);
    let p1 = mesh.node(facet[1]);
    let e1: Vec<f64> = p1.iter().zip(p0).map(|(a, b)| a - b).collect();
    if mesh.dim() == 2 {
        return e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let p2 = mesh.node(facet[2]);
    let e2: Vec<f64> = p2.iter().zip(p0).map(|(a, b)| a - b).collect();
    let cross = [
        e1[1] * e2[2] - e1[2] * e2[1],
        e1[2] * e2[0] - e1[0] * e2[2],
        e1[0] * e2[1] - e1[1] * e2[0],
    ];
    0.5 * cross.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrals `∫ ψ_j` of the free basis functions.
pub fn basis_integrals(mesh: &Mesh, dofmap: &DofMap) -> Vec<f64> {
    let mut m = vec![0.0; dofmap.len()];
    let nloc = mesh.dim() + 1;
    for (e, verts) in mesh.elements().enumerate() {
        let share = mesh.element_volume(e) / nloc as f64;
        for &v in verts {
            if let Some(j) = dofmap.dof(v) {
                m[j] += share;
            }
        }
    }
    m
}

/// Assembles the Galerkin matrix `A_jk = a(ψ_k, ψ_j)` over the free DOFs.
pub fn assemble(mesh: &Mesh, coeffs: &PdeCoefficients, dofmap: &DofMap) -> Result<StiffnessMatrix> {
    if coeffs.dim != mesh.dim() {
        return Err(Error::DimensionMismatch { expected: mesh.dim(), got: coeffs.dim });
    }
    if dofmap.is_empty() {
        return Err(Error::InvalidArgument("no free degrees of freedom".into()));
    }
    dense::cholesky(&coeffs.diffusion)?;
    let d = mesh.dim();
    let mut triplets = Vec::with_capacity(mesh.num_elements() * (d + 1) * (d + 1));
    for verts in mesh.elements() {
        let geo = element_geometry(mesh, verts);
        let local = element_matrix(&geo, coeffs);
        push_local(&mut triplets, dofmap, verts, &local);
    }
    for (facet, tag) in mesh.boundary_facets() {
        if let BoundaryTag::Robin(alpha) = tag {
            if alpha <= 0.0 {
                return Err(Error::InvalidArgument(format!("Robin coefficient must be positive, got {alpha}")));
            }
            let scale = alpha * facet_measure(mesh, facet) / (d * (d + 1)) as f64;
            let local: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| scale * if i == j { 2.0 } else { 1.0 }).collect())
                .collect();
            push_local(&mut triplets, dofmap, facet, &local);
        }
    }
    let n = dofmap.len();
    let sparse = SparseMatrix::from_triplets(n, n, triplets)?;
    let stabilization = coeffs.stabilization.then(|| basis_integrals(mesh, dofmap));
    Ok(StiffnessMatrix { sparse, stabilization })
}

fn push_local(triplets: &mut Vec<(usize, usize, f64)>, dofmap: &DofMap, verts: &[usize], local: &[Vec<f64>]) {
    for (a, &va) in verts.iter().enumerate() {
        let Some(row) = dofmap.dof(va) else { continue };
        for (b, &vb) in verts.iter().enumerate() {
            if let Some(col) = dofmap.dof(vb) {
                triplets.push((row, col, local[a][b]));
            }
        }
    }
}

/// Stabilized pure-Neumann matrix `K + m mᵀ` with `m_j = ∫ψ_j`, over all
/// nodes.
pub fn assemble_neumann(mesh: &Mesh, diffusion: DenseMatrix) -> Result<StiffnessMatrix> {
    if mesh.boundary_facets().any(|(_, t)| t == BoundaryTag::Dirichlet) {
        return Err(Error::InvalidArgument("pure Neumann assembly on a mesh with Dirichlet facets".into()));
    }
    let coeffs = PdeCoefficients::laplace(mesh.dim()).with_diffusion(diffusion)?.stabilized();
    assemble(mesh, &coeffs, &DofMap::from_mesh(mesh))
}

/// Convection–diffusion form `c⟨∇u,∇v⟩ + ⟨b·∇u, v⟩` with the rotating
/// field `b(x) = (-x₂, x₁)`.
pub fn assemble_convdiff(mesh: &Mesh, c: f64, dofmap: &DofMap) -> Result<StiffnessMatrix> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("diffusion coefficient must be positive, got {c}")));
    }
    let mut diffusion = DenseMatrix::identity(mesh.dim());
    diffusion.scale(c);
    let coeffs = PdeCoefficients::laplace(mesh.dim())
        .with_diffusion(diffusion)?
        .with_convection(|x| [-x[1], x[0], 0.0]);
    assemble(mesh, &coeffs, dofmap)
}

// Degree-5 rule on the reference triangle (barycentric point, weight).
const TRI_RULE: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;
// Degree-2 rule on the reference tetrahedron.
const TET_RULE: [([f64; 4], f64); 4] = [
    ([TET_A, TET_B, TET_B, TET_B], 0.25),
    ([TET_B, TET_A, TET_B, TET_B], 0.25),
    ([TET_B, TET_B, TET_A, TET_B], 0.25),
    ([TET_B, TET_B, TET_B, TET_A], 0.25),
];

fn for_each_quadrature_point(mesh: &Mesh, verts: &[usize], mut f: impl FnMut(&[f64], &[f64], f64)) {
    let d = mesh.dim();
    let point = |bary: &[f64]| {
        let mut x = [0.0; 3];
        for (&v, &l) in verts.iter().zip(bary) {
            for k in 0..d {
                x[k] += l * mesh.node(v)[k];
            }
        }
        x
    };
    if d == 2 {
        for (bary, w) in TRI_RULE {
            f(&point(&bary)[..2], &bary, w);
        }
    } else {
        for (bary, w) in TET_RULE {
            f(&point(&bary)[..3], &bary, w);
        }
    }
}

/// Load vector `f_j = ∫ f ψ_j` over the free DOFs.
pub fn load_vector(mesh: &Mesh, dofmap: &DofMap, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; dofmap.len()];
    for (e, verts) in mesh.elements().enumerate() {
        let vol = mesh.element_volume(e);
        for_each_quadrature_point(mesh, verts, |x, bary, w| {
            let fx = f(x) * w * vol;
            for (&v, &l) in verts.iter().zip(bary) {
                if let Some(j) = dofmap.dof(v) {
                    rhs[j] += fx * l;
                }
            }
        });
    }
    rhs
}

/// `‖u_h - u‖_{L²}` for the P1 function with free coefficients `uh`
/// (constrained nodes are zero).
pub fn l2_error(mesh: &Mesh, dofmap: &DofMap, uh: &[f64], u: impl Fn(&[f64]) -> f64) -> f64 {
    let mut sum = 0.0;
    for (e, verts) in mesh.elements().enumerate() {
        let vol = mesh.element_volume(e);
        for_each_quadrature_point(mesh, verts, |x, bary, w| {
            let value: f64 =
                verts.iter().zip(bary).map(|(&v, &l)| l * dofmap.dof(v).map_or(0.0, |j| uh[j])).sum();
            let diff = value - u(x);
            sum += diff * diff * w * vol;
        });
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh;
    use crate::problem::Problem;

    fn reference_triangle() -> Mesh {
        Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn reference_triangle_stiffness() {
        let m = reference_triangle();
        let k = assemble(&m, &PdeCoefficients::laplace(2), &DofMap::from_mesh(&m)).unwrap().to_dense();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - expected[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn reference_triangle_mass() {
        let m = reference_triangle();
        let dofs = DofMap::from_mesh(&m);
        let stiff = assemble(&m, &PdeCoefficients::laplace(2), &dofs).unwrap().to_dense();
        let full = assemble(&m, &PdeCoefficients::laplace(2).with_reaction(|_| 1.0), &dofs).unwrap().to_dense();
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((full[(i, j)] - stiff[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn robin_facet_mass() {
        let mut m = reference_triangle();
        // only the hypotenuse carries a Robin condition
        m.classify_with(|p| {
            if p.iter().all(|x| (x[0] + x[1] - 1.0).abs() < 1e-12) {
                BoundaryTag::Robin(3.0)
            } else {
                BoundaryTag::Neumann
            }
        });
        let dofs = DofMap::from_mesh(&m);
        let a = assemble(&m, &PdeCoefficients::laplace(2), &dofs).unwrap().to_dense();
        let len = 2f64.sqrt();
        assert!((a[(1, 1)] - (0.5 + 3.0 * len / 3.0)).abs() < 1e-14);
        assert!((a[(1, 2)] - 3.0 * len / 6.0).abs() < 1e-14);
        assert_eq!(a[(0, 0)], 1.0);
    }

    #[test]
    fn robin_needs_positive_alpha() {
        let mut m = reference_triangle();
        m.classify_with(|_| BoundaryTag::Robin(-1.0));
        assert!(assemble(&m, &PdeCoefficients::laplace(2), &DofMap::from_mesh(&m)).is_err());
    }

    #[test]
    fn mixed_square_dof_count() {
        let mut m = mesh::build_unit_square(4).unwrap();
        m.classify_boundary(Problem::Mixed2d).unwrap();
        assert_eq!(DofMap::from_mesh(&m).len(), 16);
    }

    #[test]
    fn all_dirichlet_without_free_nodes_rejected() {
        let mut m = mesh::build_unit_square(1).unwrap();
        m.classify_with(|_| BoundaryTag::Dirichlet);
        let dofs = DofMap::from_mesh(&m);
        assert!(dofs.is_empty());
        assert!(assemble(&m, &PdeCoefficients::laplace(2), &dofs).is_err());
    }

    #[test]
    fn non_spd_diffusion_rejected() {
        let c = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PdeCoefficients::laplace(2).with_diffusion(c).is_err());
    }

    #[test]
    fn neumann_kernel_and_moments() {
        let m = mesh::build_unit_square(2).unwrap();
        let a = assemble_neumann(&m, DenseMatrix::identity(2)).unwrap();
        let ones = vec![1.0; a.dim()];
        let mut k1 = vec![0.0; a.dim()];
        a.sparse.apply(&ones, &mut k1);
        assert!(k1.iter().all(|v| v.abs() < 1e-14));
        let moments = a.stabilization.as_ref().unwrap();
        assert!((moments.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut a1 = vec![0.0; a.dim()];
        a.apply(&ones, &mut a1);
        assert!((dense::dot(&ones, &a1) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn neumann_assembly_rejects_dirichlet() {
        let mut m = mesh::build_unit_square(2).unwrap();
        m.classify_boundary(Problem::Mixed2d).unwrap();
        assert!(assemble_neumann(&m, DenseMatrix::identity(2)).is_err());
    }

    #[test]
    fn convdiff_with_zero_field_is_scaled_laplacian() {
        let mut m = mesh::build_lshape(4).unwrap();
        m.classify_boundary(Problem::ConvDiffLShape).unwrap();
        let dofs = DofMap::from_mesh(&m);
        let mut c = DenseMatrix::identity(2);
        c.scale(0.01);
        let coeffs = PdeCoefficients::laplace(2).with_diffusion(c).unwrap().with_convection(|_| [0.0; 3]);
        let a = assemble(&m, &coeffs, &dofs).unwrap().to_dense();
        let mut k = assemble(&m, &PdeCoefficients::laplace(2), &dofs).unwrap().to_dense();
        k.scale(0.01);
        assert!(a.sub(&k).max_abs() < 1e-17);
        assert!(assemble_convdiff(&m, 0.0, &dofs).is_err());
    }

    #[test]
    fn symmetric_assembly_is_bitwise_symmetric() {
        let mut m = mesh::build_unit_cube(3).unwrap();
        m.classify_boundary(Problem::Mixed3d).unwrap();
        let coeffs = PdeCoefficients::laplace(3).with_reaction(|x| 1.0 + x[0]);
        let a = assemble(&m, &coeffs, &DofMap::from_mesh(&m)).unwrap();
        assert_eq!(a.sparse.symmetry_defect(), 0.0);
    }
}
