//! Uniform tensor grids on box domains in 2 or 3 dimensions, with the
//! boundary organized as an atlas of flat faces.
//!
//! Interior quadrature is the tensor trapezoid rule (weights halved on the
//! outermost layer); each face carries its own trapezoid rule over its
//! tangential lattice, so edge and corner nodes receive their surface weight
//! split evenly among the faces that contain them. Difference operators
//! annihilate constants and reproduce affine functions exactly.

use std::sync::Arc;

use crate::expr::Expression;
use crate::varexp::{Carrier, CarrierKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("resolution along axis {axis} must be at least 3, got {got}")]
    ResolutionTooSmall { axis: usize, got: usize },
    #[error("side length along axis {axis} must be positive, got {got}")]
    NonPositiveLength { axis: usize, got: f64 },
    #[error("spec lists {got} entries for {what}, expected {expected}")]
    SpecShape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("face index {face} out of range ({n_faces} faces)")]
    FaceOutOfRange { face: usize, n_faces: usize },
    #[error("field has length {got}, carrier expects {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("field contains a non-finite value at index {index}")]
    NonFiniteField { index: usize },
}

/// Requested box geometry and resolution.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dimension: usize,
    pub lengths: Vec<f64>,
    pub resolution: Vec<usize>,
}

/// The discretized box: node lattice, spacings, and interior quadrature.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    dim: usize,
    lengths: [f64; 3],
    res: [usize; 3],
    spacing: [f64; 3],
    strides: [usize; 3],
    n_nodes: usize,
    weights: Arc<Vec<f64>>,
}

/// Which side of the box a face lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

/// One flat face of the boundary.
#[derive(Debug, Clone)]
pub struct Face {
    /// Axis of the outward normal.
    pub normal_axis: usize,
    pub side: Side,
    /// Outward unit normal (axis-aligned).
    pub normal: [f64; 3],
    /// Coordinate axes tangential to the face, ascending. The j-th entry is
    /// the direction of the j-th tangential derivative on this face.
    pub tangent_axes: Vec<usize>,
    /// Node counts along the tangential axes.
    pub shape: Vec<usize>,
    /// Grid node ids of the face lattice, first tangent axis fastest.
    pub nodes: Vec<usize>,
    /// In-face trapezoid weights; they sum to the face measure.
    pub weights: Vec<f64>,
}

/// The boundary as a set of faces plus global boundary-node bookkeeping.
#[derive(Debug, Clone)]
pub struct BoundaryAtlas {
    pub faces: Vec<Face>,
    /// Grid node ids of all boundary nodes, ascending. This ordering defines
    /// the boundary field layout used everywhere else.
    pub boundary_nodes: Vec<usize>,
    /// Total surface weight per boundary node (sum of in-face weights).
    weights: Arc<Vec<f64>>,
    /// Number of faces containing each boundary node (1 = face interior,
    /// 2 = edge, 3 = corner).
    pub multiplicity: Vec<u8>,
    grid_to_boundary: Vec<u32>,
}

const NO_BOUNDARY: u32 = u32::MAX;

impl BoxDomain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    /// Node coordinates; unused components are 0.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rem = idx;
        for d in 0..self.dim {
            let i = rem % self.res[d];
            rem /= self.res[d];
            x[d] = i as f64 * self.spacing[d];
        }
        x
    }

    fn multi_index(&self, idx: usize) -> [usize; 3] {
        let mut mi = [0usize; 3];
        let mut rem = idx;
        for d in 0..self.dim {
            mi[d] = rem % self.res[d];
            rem /= self.res[d];
        }
        mi
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|d| mi[d] == 0 || mi[d] == self.res[d] - 1)
    }

    /// Interior trapezoid weights (positive, summing to the box volume).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interior_carrier(&self) -> Carrier {
        Carrier::new(CarrierKind::Interior, self.weights.clone())
    }

    /// Evaluate an expression at every node.
    pub fn eval_expression(&self, e: &Expression) -> Vec<f64> {
        (0..self.n_nodes).map(|i| e.eval(self.coords(i))).collect()
    }

    fn check_interior_field(&self, f: &[f64]) -> Result<(), GridError> {
        if f.len() != self.n_nodes {
            return Err(GridError::FieldLength {
                expected: self.n_nodes,
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Nodal partial derivative along `axis`: second-order central differences
    /// at interior nodes, second-order one-sided stencils on the boundary
    /// layer. Exact for affine fields.
    pub fn interior_gradient(&self, u: &[f64], axis: usize) -> Result<Vec<f64>, GridError> {
        if axis >= self.dim {
            return Err(GridError::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        self.check_interior_field(u)?;
        let n = self.res[axis];
        let s = self.strides[axis];
        let h = self.spacing[axis];
        let mut out = vec![0.0; self.n_nodes];
        for idx in 0..self.n_nodes {
            let i = self.multi_index(idx)[axis];
            out[idx] = if i == 0 {
                (-3.0 * u[idx] + 4.0 * u[idx + s] - u[idx + 2 * s]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * u[idx] - 4.0 * u[idx - s] + u[idx - 2 * s]) / (2.0 * h)
            } else {
                (u[idx + s] - u[idx - s]) / (2.0 * h)
            };
        }
        Ok(out)
    }

    /// Weighted sum of an interior field (the discrete volume integral).
    pub fn integrate_interior(&self, f: &[f64]) -> Result<f64, GridError> {
        self.check_interior_field(f)?;
        if let Some(index) = f.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteField { index });
        }
        Ok(crate::par::sum_indexed(f.len(), |i| self.weights[i] * f[i]))
    }
}

impl BoundaryAtlas {
    pub fn n_boundary_nodes(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// Total surface weight per boundary node; sums to the surface measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_carrier(&self) -> Carrier {
        Carrier::new(CarrierKind::Boundary, self.weights.clone())
    }

    /// Boundary index of a grid node, if it lies on the boundary.
    pub fn boundary_index(&self, grid_idx: usize) -> Option<usize> {
        match self.grid_to_boundary.get(grid_idx) {
            Some(&b) if b != NO_BOUNDARY => Some(b as usize),
            _ => None,
        }
    }

    fn check_boundary_field(&self, g: &[f64]) -> Result<(), GridError> {
        if g.len() != self.boundary_nodes.len() {
            return Err(GridError::FieldLength {
                expected: self.boundary_nodes.len(),
                got: g.len(),
            });
        }
        Ok(())
    }

    /// Restrict an interior field to the boundary nodes.
    pub fn trace(&self, u: &[f64]) -> Vec<f64> {
        self.boundary_nodes.iter().map(|&i| u[i]).collect()
    }

    /// Weighted sum of a boundary field (the discrete surface integral).
    pub fn integrate_boundary(&self, g: &[f64]) -> Result<f64, GridError> {
        self.check_boundary_field(g)?;
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteField { index });
        }
        Ok(crate::par::sum_indexed(g.len(), |i| self.weights[i] * g[i]))
    }

    /// Tangential derivative of a boundary field along the `axis`-th tangent
    /// direction of face `face`, returned in face-lattice order. Differences
    /// never leave the face: central in the face interior, second-order
    /// one-sided at the face edges.
    pub fn tangential_gradient(
        &self,
        g: &[f64],
        face: usize,
        axis: usize,
        spacing: &[f64],
    ) -> Result<Vec<f64>, GridError> {
        self.check_boundary_field(g)?;
        let f = self.faces.get(face).ok_or(GridError::FaceOutOfRange {
            face,
            n_faces: self.faces.len(),
        })?;
        if axis >= f.tangent_axes.len() {
            return Err(GridError::AxisOutOfRange {
                axis,
                dim: f.tangent_axes.len(),
            });
        }
        let h = spacing[f.tangent_axes[axis]];
        let (n_fast, stride, extent) = if axis == 0 {
            (f.shape[0], 1usize, f.shape[0])
        } else {
            (f.shape[0], f.shape[0], f.shape[1])
        };
        let _ = n_fast;
        let val = |k: usize| -> f64 {
            let b = self.grid_to_boundary[f.nodes[k]] as usize;
            g[b]
        };
        let mut out = vec![0.0; f.nodes.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            let pos = if axis == 0 {
                k % f.shape[0]
            } else {
                k / f.shape[0]
            };
            *slot = if pos == 0 {
                (-3.0 * val(k) + 4.0 * val(k + stride) - val(k + 2 * stride)) / (2.0 * h)
            } else if pos == extent - 1 {
                (3.0 * val(k) - 4.0 * val(k - stride) + val(k - 2 * stride)) / (2.0 * h)
            } else {
                (val(k + stride) - val(k - stride)) / (2.0 * h)
            };
        }
        Ok(out)
    }
}

/// The domain together with its boundary atlas.
#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: BoxDomain,
    pub atlas: BoundaryAtlas,
}

impl Grid {
    pub fn build(spec: &GridSpec) -> Result<Self, GridError> {
        let (domain, atlas) = build_grid(spec)?;
        Ok(Self { domain, atlas })
    }

    /// Evaluate an expression at the boundary nodes, in boundary order.
    pub fn eval_boundary_expression(&self, e: &Expression) -> Vec<f64> {
        self.atlas
            .boundary_nodes
            .iter()
            .map(|&i| e.eval(self.domain.coords(i)))
            .collect()
    }
}

fn axis_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i == n - 1 {
        0.5 * h
    } else {
        h
    }
}

/// Build the domain and its boundary atlas from a spec.
pub fn build_grid(spec: &GridSpec) -> Result<(BoxDomain, BoundaryAtlas), GridError> {
    let dim = spec.dimension;
    if dim != 2 && dim != 3 {
        return Err(GridError::InvalidDimension(dim));
    }
    if spec.lengths.len() != dim {
        return Err(GridError::SpecShape {
            what: "lengths",
            expected: dim,
            got: spec.lengths.len(),
        });
    }
    if spec.resolution.len() != dim {
        return Err(GridError::SpecShape {
            what: "resolution",
            expected: dim,
            got: spec.resolution.len(),
        });
    }
    let mut lengths = [1.0; 3];
    let mut res = [1usize; 3];
    let mut spacing = [0.0; 3];
    for d in 0..dim {
        if spec.lengths[d] <= 0.0 || !spec.lengths[d].is_finite() {
            return Err(GridError::NonPositiveLength {
                axis: d,
                got: spec.lengths[d],
            });
        }
        if spec.resolution[d] < 3 {
            return Err(GridError::ResolutionTooSmall {
                axis: d,
                got: spec.resolution[d],
            });
        }
        lengths[d] = spec.lengths[d];
        res[d] = spec.resolution[d];
        spacing[d] = lengths[d] / (res[d] - 1) as f64;
    }
    let n_nodes: usize = res[..dim].iter().product();
    let mut strides = [0usize; 3];
    strides[0] = 1;
    for d in 1..dim {
        strides[d] = strides[d - 1] * res[d - 1];
    }

    // Interior trapezoid weights.
    let mut weights = vec![0.0; n_nodes];
    for (idx, w) in weights.iter_mut().enumerate() {
        let mut rem = idx;
        let mut acc = 1.0;
        for d in 0..dim {
            let i = rem % res[d];
            rem /= res[d];
            acc *= axis_weight(i, res[d], spacing[d]);
        }
        *w = acc;
    }

    let domain = BoxDomain {
        dim,
        lengths,
        res,
        spacing,
        strides,
        n_nodes,
        weights: Arc::new(weights),
    };

    // Boundary node enumeration, ascending grid id.
    let boundary_nodes: Vec<usize> = (0..n_nodes).filter(|&i| domain.is_boundary(i)).collect();
    let mut grid_to_boundary = vec![NO_BOUNDARY; n_nodes];
    for (b, &g) in boundary_nodes.iter().enumerate() {
        grid_to_boundary[g] = b as u32;
    }

    let mut faces = Vec::with_capacity(2 * dim);
    let mut totals = vec![0.0; boundary_nodes.len()];
    let mut multiplicity = vec![0u8; boundary_nodes.len()];
    for normal_axis in 0..dim {
        for side in [Side::Low, Side::High] {
            let tangent_axes: Vec<usize> = (0..dim).filter(|&d| d != normal_axis).collect();
            let shape: Vec<usize> = tangent_axes.iter().map(|&d| res[d]).collect();
            let fixed = match side {
                Side::Low => 0,
                Side::High => res[normal_axis] - 1,
            };
            let mut normal = [0.0; 3];
            normal[normal_axis] = match side {
                Side::Low => -1.0,
                Side::High => 1.0,
            };
            let count: usize = shape.iter().product();
            let mut nodes = Vec::with_capacity(count);
            let mut fweights = Vec::with_capacity(count);
            for k in 0..count {
                let mut mi = [0usize; 3];
                mi[normal_axis] = fixed;
                let mut rem = k;
                let mut w = 1.0;
                for (t, &d) in tangent_axes.iter().enumerate() {
                    let j = rem % shape[t];
                    rem /= shape[t];
                    mi[d] = j;
                    w *= axis_weight(j, res[d], spacing[d]);
                }
                let gid: usize = (0..dim).map(|d| mi[d] * strides[d]).sum();
                nodes.push(gid);
                fweights.push(w);
                let b = grid_to_boundary[gid] as usize;
                totals[b] += w;
                multiplicity[b] += 1;
            }
            faces.push(Face {
                normal_axis,
                side,
                normal,
                tangent_axes,
                shape,
                nodes,
                weights: fweights,
            });
        }
    }

    let atlas = BoundaryAtlas {
        faces,
        boundary_nodes,
        weights: Arc::new(totals),
        multiplicity,
        grid_to_boundary,
    };
    Ok((domain, atlas))
}
