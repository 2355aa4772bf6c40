//! Uniform axis-aligned rectangular meshes on a bounded box.
//!
//! Cells are numbered row-major with axis 0 fastest: the cell with
//! multi-index `(i0, i1, i2)` has linear index `i0 + n0 * (i1 + n1 * i2)`.
//! Faces are enumerated once, at construction, in a fixed order: for each
//! axis, for each cell in canonical order, first the lower boundary face
//! (Dirichlet axes only, when the cell touches the lower wall) and then the
//! upper face.

use crate::error::{Error, Result};

/// Largest supported number of axes.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() || lower.len() > MAX_DIM {
            return Err(Error::UnsupportedDimension(lower.len()));
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::DegenerateBox {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi)^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    /// Opposite faces are identified.
    Periodic,
    /// Zero normal flux; boundary faces are not enumerated.
    Neumann,
    /// Zero inflow density; outflow leaves the domain.
    Dirichlet,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "periodic" => Ok(Self::Periodic),
            "neumann" => Ok(Self::Neumann),
            "dirichlet" => Ok(Self::Dirichlet),
            other => Err(Error::Parse(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Periodic => "periodic",
            Self::Neumann => "neumann",
            Self::Dirichlet => "dirichlet",
        })
    }
}

/// A cell interface.
///
/// `normal_a` is the sign of the face normal along `axis`, pointing from
/// `cell_a` into `cell_b` (or out of the domain when `cell_b` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub cell_a: usize,
    pub cell_b: Option<usize>,
    pub axis: usize,
    pub normal_a: i8,
    pub measure: f64,
    pub midpoint: [f64; MAX_DIM],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cell_b.is_none()
    }
}

/// One entry of a cell's neighbour list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Neighbouring cell, or `None` for a Dirichlet boundary face.
    pub cell: Option<usize>,
    /// Index into [`Grid::edges`].
    pub edge: usize,
    /// `+1.0` when the owning cell is the edge's `cell_a`, `-1.0` otherwise.
    /// Multiplying a stored edge flux by this gives the outward flux.
    pub orientation: f64,
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: BoxDomain,
    n: Vec<usize>,
    bc: Vec<BoundaryCondition>,
    h: Vec<f64>,
    strides: Vec<usize>,
    edges: Vec<Edge>,
    nbr_offsets: Vec<usize>,
    nbrs: Vec<Neighbor>,
}

impl Grid {
    pub fn new(domain: BoxDomain, n: Vec<usize>, bc: Vec<BoundaryCondition>) -> Result<Self> {
        let d = domain.dim();
        if n.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: n.len(),
            });
        }
        if bc.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bc.len(),
            });
        }
        if let Some((axis, &k)) = n.iter().enumerate().find(|(_, &k)| k < 2) {
            return Err(Error::TooFewCells { axis, n: k });
        }
        let h: Vec<f64> = (0..d).map(|a| domain.width(a) / n[a] as f64).collect();
        let mut strides = vec![1usize; d];
        for a in 1..d {
            strides[a] = strides[a - 1] * n[a - 1];
        }
        let mut grid = Self {
            domain,
            n,
            bc,
            h,
            strides,
            edges: Vec::new(),
            nbr_offsets: Vec::new(),
            nbrs: Vec::new(),
        };
        grid.build_topology();
        Ok(grid)
    }

    fn build_topology(&mut self) {
        let d = self.dim();
        let cells = self.num_cells();
        let mut edges = Vec::new();
        for axis in 0..d {
            let measure: f64 = (0..d).filter(|&j| j != axis).map(|j| self.h[j]).product();
            for cell in 0..cells {
                let mi = self.multi_index(cell);
                let centre = self.cell_center(cell);
                let i = mi[axis];
                let last = self.n[axis] - 1;
                if i == 0 && self.bc[axis] == BoundaryCondition::Dirichlet {
                    let mut midpoint = centre;
                    midpoint[axis] = self.domain.lower[axis];
                    edges.push(Edge {
                        cell_a: cell,
                        cell_b: None,
                        axis,
                        normal_a: -1,
                        measure,
                        midpoint,
                    });
                }
                let mut midpoint = centre;
                midpoint[axis] = self.domain.lower[axis] + (i + 1) as f64 * self.h[axis];
                let cell_b = if i < last {
                    Some(Some(cell + self.strides[axis]))
                } else {
                    match self.bc[axis] {
                        BoundaryCondition::Periodic => Some(Some(cell - last * self.strides[axis])),
                        BoundaryCondition::Dirichlet => {
                            midpoint[axis] = self.domain.upper[axis];
                            Some(None)
                        }
                        BoundaryCondition::Neumann => None,
                    }
                };
                if let Some(cell_b) = cell_b {
                    edges.push(Edge {
                        cell_a: cell,
                        cell_b,
                        axis,
                        normal_a: 1,
                        measure,
                        midpoint,
                    });
                }
            }
        }

        let mut counts = vec![0usize; cells];
        for e in &edges {
            counts[e.cell_a] += 1;
            if let Some(b) = e.cell_b {
                counts[b] += 1;
            }
        }
        let mut offsets = vec![0usize; cells + 1];
        for c in 0..cells {
            offsets[c + 1] = offsets[c] + counts[c];
        }
        let mut fill = offsets[..cells].to_vec();
        let placeholder = Neighbor {
            cell: None,
            edge: usize::MAX,
            orientation: 0.0,
        };
        let mut nbrs = vec![placeholder; offsets[cells]];
        for (id, e) in edges.iter().enumerate() {
            nbrs[fill[e.cell_a]] = Neighbor {
                cell: e.cell_b,
                edge: id,
                orientation: 1.0,
            };
            fill[e.cell_a] += 1;
            if let Some(b) = e.cell_b {
                nbrs[fill[b]] = Neighbor {
                    cell: Some(e.cell_a),
                    edge: id,
                    orientation: -1.0,
                };
                fill[b] += 1;
            }
        }
        self.edges = edges;
        self.nbr_offsets = offsets;
        self.nbrs = nbrs;
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn boundary_conditions(&self) -> &[BoundaryCondition] {
        &self.bc
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Largest cell side length.
    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn num_cells(&self) -> usize {
        self.n.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn multi_index(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = cell;
        for (a, &k) in self.n.iter().enumerate() {
            out[a] = rest % k;
            rest /= k;
        }
        out
    }

    pub fn index_of(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: multi.len(),
            });
        }
        let mut idx = 0;
        for (a, &i) in multi.iter().enumerate() {
            if i >= self.n[a] {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n[a],
                });
            }
            idx += i * self.strides[a];
        }
        Ok(idx)
    }

    /// Cell midpoint; entries past `dim()` are zero.
    pub fn cell_center(&self, cell: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(cell);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = self.domain.lower[a] + (mi[a] as f64 + 0.5) * self.h[a];
        }
        x
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, cell: usize) -> Result<&[Neighbor]> {
        if cell >= self.num_cells() {
            return Err(Error::IndexOutOfRange {
                index: cell,
                len: self.num_cells(),
            });
        }
        Ok(&self.nbrs[self.nbr_offsets[cell]..self.nbr_offsets[cell + 1]])
    }

    /// Same box, counts and boundary conditions.
    pub fn same_mesh(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.domain == other.domain && self.n == other.n && self.bc == other.bc)
    }

    /// Per-axis refinement ratio of `fine` relative to `self`, if it is an
    /// integer on every axis and the boxes coincide.
    pub fn refinement_ratio(&self, fine: &Grid) -> Option<Vec<usize>> {
        if self.domain != fine.domain {
            return None;
        }
        self.n
            .iter()
            .zip(&fine.n)
            .map(|(&c, &f)| (f % c == 0).then_some(f / c))
            .collect()
    }
}

/// Builds a [`Grid`]. Thin wrapper over [`Grid::new`].
pub fn build_grid(domain: BoxDomain, n: Vec<usize>, bc: Vec<BoundaryCondition>) -> Result<Grid> {
    Grid::new(domain, n, bc)
}

/// All faces carrying flux, each shared interface once.
pub fn enumerate_edges(grid: &Grid) -> &[Edge] {
    grid.edges()
}
