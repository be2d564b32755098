//! The discrete Wentzell energy: anisotropic gradient terms in the volume,
//! tangential gradient terms on each boundary face, and zeroth-order
//! absorption terms weighted by the coefficients.
//!
//! The functional is assembled from two-point difference terms (central in
//! the interior of a line, one-sided first order where a line meets the
//! domain or face edge, never coupling across faces). Two-point stencils make
//! the lattice inequalities behind order preservation and sup-norm
//! non-expansivity hold exactly for the discrete functional, not just in the
//! continuum limit. The gradient and Hessian are the exact derivatives of the
//! discrete energy, so energy decay and monotonicity hold at solver
//! precision.

use std::sync::Arc;
use thiserror::Error;

use crate::grid::Grid;
use crate::par;
use crate::varexp::{CarrierKind, PairFunction, VectorExponent};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("coefficient field invalid: {0}")]
    InvalidCoefficient(String),
    #[error("exponent carrier mismatch: {0}")]
    ExponentCarrier(String),
    #[error("regularization must be positive when an exponent is below 2 (min interior {p_min}, min boundary {q_min})")]
    NeedsRegularization { p_min: f64, q_min: f64 },
    #[error("field has length {got}, expected {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error(transparent)]
    NonConforming(#[from] crate::varexp::VarexpError),
    #[error("monotonicity gap needs exponent > 1, got {0}")]
    BadGapExponent(f64),
}

/// Reaction coefficients with their positive lower bounds.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha0: f64,
    pub beta0: f64,
}

impl CoefficientField {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, EnergyError> {
        let alpha0 = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        let beta0 = beta.iter().copied().fold(f64::INFINITY, f64::min);
        if !(alpha0 > 0.0) || !alpha0.is_finite() {
            return Err(EnergyError::InvalidCoefficient(format!(
                "interior coefficient minimum {alpha0} is not positive"
            )));
        }
        if !(beta0 > 0.0) || !beta0.is_finite() {
            return Err(EnergyError::InvalidCoefficient(format!(
                "boundary coefficient minimum {beta0} is not positive"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            alpha0,
            beta0,
        })
    }

    pub fn constant(
        alpha: f64,
        beta: f64,
        n_nodes: usize,
        n_bnodes: usize,
    ) -> Result<Self, EnergyError> {
        Self::new(vec![alpha; n_nodes], vec![beta; n_bnodes])
    }
}

/// One two-point difference term: D(x) = coeff * (x[a] - x[b]), entering the
/// energy as weight * e(D(x); exponent).
#[derive(Debug, Clone, Copy)]
struct DiffTerm {
    a: u32,
    b: u32,
    coeff: f64,
    weight: f64,
    exponent: f64,
}

/// Node-to-term incidence in flattened form.
#[derive(Debug, Clone, Default)]
struct Incidence {
    offsets: Vec<u32>,
    terms: Vec<u32>,
    coeffs: Vec<f64>,
}

impl Incidence {
    fn build(n_nodes: usize, terms: &[DiffTerm]) -> Self {
        let mut counts = vec![0u32; n_nodes + 1];
        for t in terms {
            counts[t.a as usize + 1] += 1;
            counts[t.b as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            counts[i + 1] += counts[i];
        }
        let total = counts[n_nodes] as usize;
        let mut term_ids = vec![0u32; total];
        let mut coeffs = vec![0.0; total];
        let mut cursor = counts.clone();
        for (ti, t) in terms.iter().enumerate() {
            let slot = cursor[t.a as usize] as usize;
            term_ids[slot] = ti as u32;
            coeffs[slot] = t.coeff;
            cursor[t.a as usize] += 1;
            let slot = cursor[t.b as usize] as usize;
            term_ids[slot] = ti as u32;
            coeffs[slot] = -t.coeff;
            cursor[t.b as usize] += 1;
        }
        Self {
            offsets: counts,
            terms: term_ids,
            coeffs,
        }
    }

    #[inline]
    fn entries(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.offsets[node] as usize;
        let hi = self.offsets[node + 1] as usize;
        (lo..hi).map(move |k| (self.terms[k] as usize, self.coeffs[k]))
    }
}

#[inline]
fn density(g: f64, r: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        g.abs().powf(r) / r
    } else {
        ((g * g + eps * eps).powf(0.5 * r) - eps.powf(r)) / r
    }
}

#[inline]
fn force(g: f64, r: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        if g == 0.0 {
            0.0
        } else {
            g.abs().powf(r - 2.0) * g
        }
    } else {
        (g * g + eps * eps).powf(0.5 * (r - 2.0)) * g
    }
}

#[inline]
fn stiffness(g: f64, r: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        (r - 1.0) * g.abs().powf(r - 2.0)
    } else {
        (g * g + eps * eps).powf(0.5 * (r - 4.0)) * ((r - 1.0) * g * g + eps * eps)
    }
}

/// One group of energy terms over a fixed index space (volume nodes or
/// boundary nodes).
#[derive(Debug, Clone)]
struct TermGroup {
    terms: Vec<DiffTerm>,
    incidence: Incidence,
    /// Fused mass weights (quadrature weight times coefficient) per node.
    mass_w: Vec<f64>,
    /// Mass exponents per node.
    mass_r: Vec<f64>,
}

impl TermGroup {
    fn n_nodes(&self) -> usize {
        self.mass_w.len()
    }

    fn check_len(&self, x: &[f64]) -> Result<(), EnergyError> {
        if x.len() != self.n_nodes() {
            return Err(EnergyError::FieldLength {
                expected: self.n_nodes(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn energy(&self, x: &[f64], eps: f64) -> f64 {
        let grad = par::sum_indexed(self.terms.len(), |t| {
            let dt = &self.terms[t];
            let d = dt.coeff * (x[dt.a as usize] - x[dt.b as usize]);
            dt.weight * density(d, dt.exponent, eps)
        });
        let mass = par::sum_indexed(self.n_nodes(), |i| {
            self.mass_w[i] * x[i].abs().powf(self.mass_r[i]) / self.mass_r[i]
        });
        grad + mass
    }

    /// Euclidean gradient of the group energy with respect to the nodal
    /// values of this index space.
    fn gradient(&self, x: &[f64], eps: f64) -> Vec<f64> {
        let lam = par::map_vec(self.terms.len(), |t| {
            let dt = &self.terms[t];
            let d = dt.coeff * (x[dt.a as usize] - x[dt.b as usize]);
            dt.weight * force(d, dt.exponent, eps)
        });
        par::map_vec(self.n_nodes(), |i| {
            let mut acc = 0.0;
            for (t, c) in self.incidence.entries(i) {
                acc += c * lam[t];
            }
            let u = x[i];
            let r = self.mass_r[i];
            acc + self.mass_w[i]
                * if u == 0.0 {
                    0.0
                } else {
                    u.abs().powf(r - 2.0) * u
                }
        })
    }

    /// Hessian-vector product of the group energy.
    fn hess_apply(&self, x: &[f64], v: &[f64], eps: f64) -> Vec<f64> {
        let mu = par::map_vec(self.terms.len(), |t| {
            let dt = &self.terms[t];
            let d = dt.coeff * (x[dt.a as usize] - x[dt.b as usize]);
            let dv = dt.coeff * (v[dt.a as usize] - v[dt.b as usize]);
            dt.weight * stiffness(d, dt.exponent, eps) * dv
        });
        par::map_vec(self.n_nodes(), |i| {
            let mut acc = 0.0;
            for (t, c) in self.incidence.entries(i) {
                acc += c * mu[t];
            }
            acc + self.mass_diag_at(i, x[i], eps) * v[i]
        })
    }

    fn mass_diag_at(&self, i: usize, u: f64, eps: f64) -> f64 {
        let r = self.mass_r[i];
        // Exponents below 2 get an eps-smoothed curvature so Newton systems
        // stay finite; the gradient itself is exact.
        let curv = if r >= 2.0 || eps == 0.0 {
            (r - 1.0) * u.abs().powf(r - 2.0)
        } else {
            (r - 1.0) * (u * u + eps * eps).powf(0.5 * (r - 2.0))
        };
        self.mass_w[i] * curv
    }

    fn hess_diag(&self, x: &[f64], eps: f64) -> Vec<f64> {
        let mut diag: Vec<f64> = (0..self.n_nodes())
            .map(|i| self.mass_diag_at(i, x[i], eps))
            .collect();
        for dt in &self.terms {
            let d = dt.coeff * (x[dt.a as usize] - x[dt.b as usize]);
            let s = dt.weight * stiffness(d, dt.exponent, eps) * dt.coeff * dt.coeff;
            diag[dt.a as usize] += s;
            diag[dt.b as usize] += s;
        }
        diag
    }
}

/// The assembled discrete functional.
#[derive(Debug, Clone)]
pub struct WentzellEnergy {
    grid: Arc<Grid>,
    pub exponents: VectorExponent,
    pub coefficients: CoefficientField,
    pub eps_reg: f64,
    interior: TermGroup,
    boundary: TermGroup,
    x2_mass: Vec<f64>,
}

impl WentzellEnergy {
    pub fn build(
        grid: Arc<Grid>,
        exponents: VectorExponent,
        coefficients: CoefficientField,
        eps_reg: f64,
    ) -> Result<Self, EnergyError> {
        let dim = grid.domain.dim();
        let n = grid.domain.n_nodes();
        let nb = grid.atlas.n_boundary_nodes();
        if exponents.p.len() != dim {
            return Err(EnergyError::ExponentCarrier(format!(
                "need {dim} interior exponent components, got {}",
                exponents.p.len()
            )));
        }
        if exponents.q.len() != dim - 1 {
            return Err(EnergyError::ExponentCarrier(format!(
                "need {} boundary exponent components, got {}",
                dim - 1,
                exponents.q.len()
            )));
        }
        for f in &exponents.p {
            if f.kind() != CarrierKind::Interior || f.len() != n {
                return Err(EnergyError::ExponentCarrier(
                    "interior exponent component does not match the grid".into(),
                ));
            }
        }
        for f in &exponents.q {
            if f.kind() != CarrierKind::Boundary || f.len() != nb {
                return Err(EnergyError::ExponentCarrier(
                    "boundary exponent component does not match the boundary".into(),
                ));
            }
        }
        if coefficients.alpha.len() != n || coefficients.beta.len() != nb {
            return Err(EnergyError::InvalidCoefficient(format!(
                "coefficients have lengths {}/{}, grid has {}/{} nodes",
                coefficients.alpha.len(),
                coefficients.beta.len(),
                n,
                nb
            )));
        }
        if eps_reg == 0.0 && (exponents.p_min.min() < 2.0 || exponents.q_min.min() < 2.0) {
            return Err(EnergyError::NeedsRegularization {
                p_min: exponents.p_min.min(),
                q_min: exponents.q_min.min(),
            });
        }

        // Interior difference terms, one per node and axis.
        let res = grid.domain.resolution().to_vec();
        let spacing = grid.domain.spacing().to_vec();
        let weights = grid.domain.weights();
        let mut strides = vec![1usize; dim];
        for d in 1..dim {
            strides[d] = strides[d - 1] * res[d - 1];
        }
        let mut int_terms = Vec::with_capacity(n * dim);
        for idx in 0..n {
            let mut rem = idx;
            for d in 0..dim {
                let i = rem % res[d];
                rem /= res[d];
                let s = strides[d];
                let h = spacing[d];
                let (a, b, c) = if i == 0 {
                    (idx + s, idx, 1.0 / h)
                } else if i == res[d] - 1 {
                    (idx, idx - s, 1.0 / h)
                } else {
                    (idx + s, idx - s, 1.0 / (2.0 * h))
                };
                int_terms.push(DiffTerm {
                    a: a as u32,
                    b: b as u32,
                    coeff: c,
                    weight: weights[idx],
                    exponent: exponents.p[d].values()[idx],
                });
            }
        }
        let interior = TermGroup {
            incidence: Incidence::build(n, &int_terms),
            terms: int_terms,
            mass_w: (0..n).map(|i| weights[i] * coefficients.alpha[i]).collect(),
            mass_r: exponents.p_max.values().to_vec(),
        };

        // Tangential difference terms, per face, tangent slot, and face node.
        let mut bnd_terms = Vec::new();
        for face in &grid.atlas.faces {
            for (slot, &axis) in face.tangent_axes.iter().enumerate() {
                let h = spacing[axis];
                let (stride, extent) = if slot == 0 {
                    (1usize, face.shape[0])
                } else {
                    (face.shape[0], face.shape[1])
                };
                for (k, &gid) in face.nodes.iter().enumerate() {
                    let pos = if slot == 0 {
                        k % face.shape[0]
                    } else {
                        k / face.shape[0]
                    };
                    let (ka, kb, c) = if pos == 0 {
                        (k + stride, k, 1.0 / h)
                    } else if pos == extent - 1 {
                        (k, k - stride, 1.0 / h)
                    } else {
                        (k + stride, k - stride, 1.0 / (2.0 * h))
                    };
                    let bi = grid.atlas.boundary_index(gid).unwrap();
                    let ba = grid.atlas.boundary_index(face.nodes[ka]).unwrap();
                    let bb = grid.atlas.boundary_index(face.nodes[kb]).unwrap();
                    bnd_terms.push(DiffTerm {
                        a: ba as u32,
                        b: bb as u32,
                        coeff: c,
                        weight: face.weights[k],
                        exponent: exponents.q[slot].values()[bi],
                    });
                }
            }
        }
        let bweights = grid.atlas.weights();
        let boundary = TermGroup {
            incidence: Incidence::build(nb, &bnd_terms),
            terms: bnd_terms,
            mass_w: (0..nb)
                .map(|b| bweights[b] * coefficients.beta[b])
                .collect(),
            mass_r: exponents.q_max.values().to_vec(),
        };

        let mut x2_mass = weights.to_vec();
        for (b, &gid) in grid.atlas.boundary_nodes.iter().enumerate() {
            x2_mass[gid] += bweights[b];
        }

        Ok(Self {
            grid,
            exponents,
            coefficients,
            eps_reg,
            interior,
            boundary,
            x2_mass,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n_nodes(&self) -> usize {
        self.interior.n_nodes()
    }

    pub fn n_boundary_nodes(&self) -> usize {
        self.boundary.n_nodes()
    }

    /// Diagonal mass of the pair space: volume weight plus surface weight on
    /// boundary nodes, indexed by grid node.
    pub fn x2_mass(&self) -> &[f64] {
        &self.x2_mass
    }

    /// Volume part of the energy (anisotropic gradient terms plus
    /// alpha-weighted absorption), evaluated on an interior field.
    pub fn interior_energy(&self, u: &[f64]) -> Result<f64, EnergyError> {
        self.interior.check_len(u)?;
        Ok(self.interior.energy(u, self.eps_reg))
    }

    /// Surface part of the energy (tangential gradient terms plus
    /// beta-weighted absorption), evaluated on a boundary field.
    pub fn boundary_energy(&self, w: &[f64]) -> Result<f64, EnergyError> {
        self.boundary.check_len(w)?;
        Ok(self.boundary.energy(w, self.eps_reg))
    }

    /// The full functional on a conforming pair.
    pub fn total_energy(&self, u: &PairFunction) -> Result<f64, EnergyError> {
        u.check_conforming(&self.grid.atlas)?;
        Ok(self.interior_energy(&u.interior)? + self.boundary_energy(&u.boundary)?)
    }

    /// Energy of a full nodal vector with implied conforming boundary values.
    pub fn energy_of_nodal(&self, u: &[f64]) -> f64 {
        let w = self.grid.atlas.trace(u);
        self.interior.energy(u, self.eps_reg) + self.boundary.energy(&w, self.eps_reg)
    }

    /// The pair-space gradient: the unique pair (f, g) with
    /// ⟨(f, g), (v, v|_Γ)⟩ equal to the directional derivative of the energy
    /// for every variation v. The components group by energy part: f is the
    /// volume-weighted derivative of the volume terms (diffusion stencils
    /// plus absorption; at boundary nodes it carries the surface-scaled flux
    /// remainders of the one-sided stencils), g the surface-weighted
    /// derivative of the surface terms (tangential stencils plus
    /// absorption).
    pub fn energy_gradient(&self, u: &PairFunction) -> Result<PairFunction, EnergyError> {
        u.check_conforming(&self.grid.atlas)?;
        if self.eps_reg == 0.0
            && (self.exponents.p_min.min() < 2.0 || self.exponents.q_min.min() < 2.0)
        {
            return Err(EnergyError::NeedsRegularization {
                p_min: self.exponents.p_min.min(),
                q_min: self.exponents.q_min.min(),
            });
        }
        let gi = self.interior.gradient(&u.interior, self.eps_reg);
        let gb = self.boundary.gradient(&u.boundary, self.eps_reg);
        let wv = self.grid.domain.weights();
        let wb = self.grid.atlas.weights();
        Ok(PairFunction::new(
            (0..gi.len()).map(|i| gi[i] / wv[i]).collect(),
            (0..gb.len()).map(|b| gb[b] / wb[b]).collect(),
        ))
    }

    /// Euclidean gradient with respect to the full nodal vector (boundary
    /// values tied to the trace).
    pub fn gradient_nodal(&self, u: &[f64]) -> Vec<f64> {
        let w = self.grid.atlas.trace(u);
        let mut g = self.interior.gradient(u, self.eps_reg);
        let gb = self.boundary.gradient(&w, self.eps_reg);
        for (b, &gid) in self.grid.atlas.boundary_nodes.iter().enumerate() {
            g[gid] += gb[b];
        }
        g
    }

    /// Hessian-vector product with respect to the full nodal vector.
    pub fn hess_apply_nodal(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let wu = self.grid.atlas.trace(u);
        let wv = self.grid.atlas.trace(v);
        let mut h = self.interior.hess_apply(u, v, self.eps_reg);
        let hb = self.boundary.hess_apply(&wu, &wv, self.eps_reg);
        for (b, &gid) in self.grid.atlas.boundary_nodes.iter().enumerate() {
            h[gid] += hb[b];
        }
        h
    }

    /// Hessian diagonal with respect to the full nodal vector.
    pub fn hess_diag_nodal(&self, u: &[f64]) -> Vec<f64> {
        let wu = self.grid.atlas.trace(u);
        let mut d = self.interior.hess_diag(u, self.eps_reg);
        let db = self.boundary.hess_diag(&wu, self.eps_reg);
        for (b, &gid) in self.grid.atlas.boundary_nodes.iter().enumerate() {
            d[gid] += db[b];
        }
        d
    }
}

/// The elementary monotonicity quantities for the vector map
/// x ↦ |x|^{r-2} x: the pairing with the increment and the two comparison
/// magnitudes used in coercivity estimates.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicityGap {
    /// (|a|^{r-2}a - |b|^{r-2}b) · (a - b)
    pub lhs: f64,
    /// (|a| + |b|)^{r-2} |a - b|^2
    pub weighted_square: f64,
    /// |a - b|^r
    pub increment_power: f64,
}

pub fn monotonicity_gap(a: &[f64], b: &[f64], r: f64) -> Result<MonotonicityGap, EnergyError> {
    if !(r > 1.0) {
        return Err(EnergyError::BadGapExponent(r));
    }
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let na = norm(a);
    let nb = norm(b);
    let mut lhs = 0.0;
    let mut diff_sq = 0.0;
    for i in 0..a.len() {
        let fa = if na == 0.0 {
            0.0
        } else {
            na.powf(r - 2.0) * a[i]
        };
        let fb = if nb == 0.0 {
            0.0
        } else {
            nb.powf(r - 2.0) * b[i]
        };
        lhs += (fa - fb) * (a[i] - b[i]);
        diff_sq += (a[i] - b[i]) * (a[i] - b[i]);
    }
    let nd = diff_sq.sqrt();
    Ok(MonotonicityGap {
        lhs,
        weighted_square: (na + nb).powf(r - 2.0) * diff_sq,
        increment_power: nd.powf(r),
    })
}
