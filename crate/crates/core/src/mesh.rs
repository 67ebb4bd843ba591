//! Structured simplicial meshes with tagged boundary facets.
//!
//! Nodes, elements and facets are stored flat with a fixed stride (`dim`
//! coordinates per node, `dim + 1` vertices per element, `dim` vertices per
//! boundary facet). Elements are oriented so that their signed volume is
//! positive.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::problem::Problem;
use crate::{Error, Result};

/// Coordinate tolerance used by the boundary predicates.
pub const COORD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    /// Robin condition with a positive coefficient, constant on the facet.
    Robin(f64),
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Dirichlet => write!(f, "dirichlet"),
            BoundaryTag::Neumann => write!(f, "neumann"),
            BoundaryTag::Robin(alpha) => write!(f, "robin:{alpha}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    facets: Vec<usize>,
    tags: Vec<BoundaryTag>,
    h: f64,
}

impl Mesh {
    /// Builds a mesh from raw node coordinates and element connectivity.
    ///
    /// Elements are reoriented to positive volume, boundary facets are
    /// extracted (all tagged Neumann) and the mesh width is computed.
    pub fn new(dim: usize, coords: Vec<f64>, mut elements: Vec<usize>) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("unsupported dimension {dim}")));
        }
        if !coords.len().is_multiple_of(dim) || !elements.len().is_multiple_of(dim + 1) {
            return Err(Error::InvalidArgument("ragged mesh arrays".into()));
        }
        let num_nodes = coords.len() / dim;
        if let Some(&bad) = elements.iter().find(|&&v| v >= num_nodes) {
            return Err(Error::InvalidArgument(format!("element references missing node {bad}")));
        }
        let stride = dim + 1;
        for element in elements.chunks_mut(stride) {
            let vol = signed_volume(dim, &coords, element);
            if vol.abs() <= f64::EPSILON * 1e-3 {
                return Err(Error::InvalidArgument("degenerate element".into()));
            }
            if vol < 0.0 {
                element.swap(0, 1);
            }
        }
        let mut mesh = Mesh { dim, coords, elements, facets: Vec::new(), tags: Vec::new(), h: 0.0 };
        mesh.h = (0..mesh.num_elements()).map(|e| mesh.element_diameter(e)).fold(0.0, f64::max);
        mesh.facets = mesh.extract_boundary_facets();
        mesh.tags = vec![BoundaryTag::Neumann; mesh.num_facets()];
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len() / self.dim
    }

    /// Mesh width: the largest element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.elements[e * s..(e + 1) * s]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks(self.dim + 1)
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facets[f * self.dim..(f + 1) * self.dim]
    }

    pub fn facet_tag(&self, f: usize) -> BoundaryTag {
        self.tags[f]
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = (&[usize], BoundaryTag)> {
        self.facets.chunks(self.dim).zip(self.tags.iter().copied())
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        signed_volume(self.dim, &self.coords, self.element(e))
    }

    /// Sum of all element volumes.
    pub fn measure(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_volume(e)).sum()
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let verts = self.element(e);
        let mut diam: f64 = 0.0;
        for (a, &i) in verts.iter().enumerate() {
            for &j in &verts[a + 1..] {
                diam = diam.max(distance(self.node(i), self.node(j)));
            }
        }
        diam
    }

    /// Retags every boundary facet from the coordinates of its vertices.
    pub fn classify_with<F>(&mut self, mut rule: F)
    where
        F: FnMut(&[&[f64]]) -> BoundaryTag,
    {
        let dim = self.dim;
        for f in 0..self.num_facets() {
            let pts: Vec<&[f64]> =
                self.facets[f * dim..(f + 1) * dim].iter().map(|&v| self.node(v)).collect();
            self.tags[f] = rule(&pts);
        }
    }

    /// Tags the boundary according to the boundary conditions of `problem`.
    ///
    /// A facet is Dirichlet iff all of its vertices lie on one of the
    /// problem's Dirichlet planes; everything else is Neumann.
    pub fn classify_boundary(&mut self, problem: Problem) -> Result<()> {
        if problem.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "problem {problem} needs a {}-d mesh, got {}-d",
                problem.dim(),
                self.dim
            )));
        }
        let on_plane = |pts: &[&[f64]], axis: usize, value: f64| {
            pts.iter().all(|p| (p[axis] - value).abs() <= COORD_TOL)
        };
        match problem {
            Problem::Mixed2d | Problem::Mixed3d => {
                let dim = self.dim;
                self.classify_with(|pts| {
                    if (0..dim).any(|axis| on_plane(pts, axis, 0.0)) {
                        BoundaryTag::Dirichlet
                    } else {
                        BoundaryTag::Neumann
                    }
                });
            }
            Problem::Neumann2d | Problem::Neumann3d => self.classify_with(|_| BoundaryTag::Neumann),
            Problem::ConvDiffLShape => self.classify_with(|pts| {
                if on_plane(pts, 1, 0.0) || on_plane(pts, 0, 1.0) {
                    BoundaryTag::Neumann
                } else {
                    BoundaryTag::Dirichlet
                }
            }),
        }
        Ok(())
    }

    /// Nodes lying on the closure of the Dirichlet boundary.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_nodes()];
        for (facet, tag) in self.boundary_facets() {
            if tag == BoundaryTag::Dirichlet {
                for &v in facet {
                    flags[v] = true;
                }
            }
        }
        flags
    }

    /// Writes the plain-text mesh dump: node coordinates, element
    /// connectivity and tagged boundary facets, each section introduced by a
    /// `# <section> <count>` line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes {}", self.num_nodes())?;
        for i in 0..self.num_nodes() {
            writeln!(out, "{}", join(self.node(i)))?;
        }
        writeln!(out, "# elements {}", self.num_elements())?;
        for element in self.elements() {
            writeln!(out, "{}", join(element))?;
        }
        writeln!(out, "# facets {}", self.num_facets())?;
        for (facet, tag) in self.boundary_facets() {
            writeln!(out, "{} {tag}", join(facet))?;
        }
        Ok(())
    }

    fn extract_boundary_facets(&self) -> Vec<usize> {
        let dim = self.dim;
        let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
        for element in self.elements() {
            for skip in 0..=dim {
                *counts.entry(facet_key(element, skip)).or_insert(0) += 1;
            }
        }
        let mut boundary: Vec<[usize; 3]> =
            counts.into_iter().filter(|&(_, c)| c == 1).map(|(k, _)| k).collect();
        boundary.sort_unstable();
        boundary.iter().flat_map(|k| k[..dim].iter().copied()).collect()
    }
}

/// Sorted vertex list of the facet opposite to vertex `skip`, padded with
/// `usize::MAX` in 2D.
pub(crate) fn facet_key(element: &[usize], skip: usize) -> [usize; 3] {
    let mut key = [usize::MAX; 3];
    let mut k = 0;
    for (i, &v) in element.iter().enumerate() {
        if i != skip {
            key[k] = v;
            k += 1;
        }
    }
    key[..k].sort_unstable();
    key
}

fn signed_volume(dim: usize, coords: &[f64], element: &[usize]) -> f64 {
    let p = |i: usize, c: usize| coords[element[i] * dim + c];
    match dim {
        2 => {
            let (ax, ay) = (p(1, 0) - p(0, 0), p(1, 1) - p(0, 1));
            let (bx, by) = (p(2, 0) - p(0, 0), p(2, 1) - p(0, 1));
            0.5 * (ax * by - ay * bx)
        }
        _ => {
            let e = |i: usize| [p(i, 0) - p(0, 0), p(i, 1) - p(0, 1), p(i, 2) - p(0, 2)];
            let (a, b, c) = (e(1), e(2), e(3));
            let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]);
            det / 6.0
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh needs at least one subdivision".into()));
    }
    Ok(())
}

/// Unit square with `n` subdivisions per axis; every cell is cut along the
/// diagonal through its lower-left and upper-right corners.
pub fn build_unit_square(n: usize) -> Result<Mesh> {
    check_n(n)?;
    build_square_cells(n, |_, _| true)
}

/// L-shaped domain `(0,1)×(0,½) ∪ (0,½)×[½,1)` on the lattice of the unit
/// square. `n` must be even so the re-entrant corner is a node.
pub fn build_lshape(n: usize) -> Result<Mesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("L-shape needs even n >= 2, got {n}")));
    }
    let half = n / 2;
    build_square_cells(n, |i, j| i < half || j < half)
}

fn build_square_cells(n: usize, keep: impl Fn(usize, usize) -> bool) -> Result<Mesh> {
    let side = n + 1;
    let mut used = vec![false; side * side];
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if keep(i, j) {
                let v00 = j * side + i;
                let quad = [v00, v00 + 1, v00 + side, v00 + side + 1];
                for v in quad {
                    used[v] = true;
                }
                cells.push(quad);
            }
        }
    }
    let mut renumber = vec![usize::MAX; side * side];
    let mut coords = Vec::new();
    for j in 0..side {
        for i in 0..side {
            let lattice = j * side + i;
            if used[lattice] {
                renumber[lattice] = coords.len() / 2;
                coords.push(i as f64 / n as f64);
                coords.push(j as f64 / n as f64);
            }
        }
    }
    let mut elements = Vec::with_capacity(cells.len() * 6);
    for [v00, v10, v01, v11] in cells {
        let [a, b, c, d] = [v00, v10, v01, v11].map(|v| renumber[v]);
        elements.extend_from_slice(&[a, b, d, a, d, c]);
    }
    Mesh::new(2, coords, elements)
}

/// Unit cube with `n` subdivisions per axis; every cell is split into six
/// tetrahedra by the Kuhn subdivision along its main diagonal.
pub fn build_unit_cube(n: usize) -> Result<Mesh> {
    check_n(n)?;
    let side = n + 1;
    let index = |i: usize, j: usize, k: usize| (k * side + j) * side + i;
    let mut coords = Vec::with_capacity(3 * side * side * side);
    for k in 0..side {
        for j in 0..side {
            for i in 0..side {
                coords.extend_from_slice(&[i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64]);
            }
        }
    }
    const AXIS_ORDERS: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut elements = Vec::with_capacity(24 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for order in AXIS_ORDERS {
                    let mut corner = [i, j, k];
                    elements.push(index(corner[0], corner[1], corner[2]));
                    for axis in order {
                        corner[axis] += 1;
                        elements.push(index(corner[0], corner[1], corner[2]));
                    }
                }
            }
        }
    }
    Mesh::new(3, coords, elements)
}
