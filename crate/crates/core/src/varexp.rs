//! Variable-exponent calculus on discretized carriers: exponent fields,
//! modulars, Luxemburg norms, and norms on interior/boundary pairs.
//!
//! A carrier is a node set with positive quadrature weights; "almost
//! everywhere" statements become "at every node". Only finite exponents enter
//! modulars; the essential-sup part of the theory is covered by the dedicated
//! sup norm on pairs.

use std::sync::Arc;
use thiserror::Error;

use crate::par;

#[derive(Debug, Error)]
pub enum VarexpError {
    #[error("carrier mismatch: {context} expects {expected:?} of length {expected_len}, got {got:?} of length {got_len}")]
    CarrierMismatch {
        context: &'static str,
        expected: CarrierKind,
        expected_len: usize,
        got: CarrierKind,
        got_len: usize,
    },
    #[error("field has length {got}, carrier has {expected} nodes")]
    FieldLength { expected: usize, got: usize },
    #[error("exponent field invalid: {0}")]
    InvalidExponent(String),
    #[error("vector exponent needs {expected} components for {what}, got {got}")]
    ComponentCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("pair is not conforming: boundary value at node {index} differs from the trace")]
    NonConforming { index: usize },
}

/// Which node set a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CarrierKind {
    Interior,
    Boundary,
    Custom,
}

/// A node set with positive quadrature weights.
#[derive(Debug, Clone)]
pub struct Carrier {
    kind: CarrierKind,
    weights: Arc<Vec<f64>>,
}

impl Carrier {
    pub fn new(kind: CarrierKind, weights: Arc<Vec<f64>>) -> Self {
        Self { kind, weights }
    }

    /// A custom carrier from explicit weights (used by tests and 1d checks).
    pub fn custom(weights: Vec<f64>) -> Self {
        Self {
            kind: CarrierKind::Custom,
            weights: Arc::new(weights),
        }
    }

    pub fn kind(&self) -> CarrierKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn matches(
        &self,
        kind: CarrierKind,
        len: usize,
        context: &'static str,
    ) -> Result<(), VarexpError> {
        if self.kind != kind || self.len() != len {
            return Err(VarexpError::CarrierMismatch {
                context,
                expected: self.kind,
                expected_len: self.len(),
                got: kind,
                got_len: len,
            });
        }
        Ok(())
    }

    fn check_field(&self, f: &[f64]) -> Result<(), VarexpError> {
        if f.len() != self.len() {
            return Err(VarexpError::FieldLength {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// A pointwise exponent r(·) on a carrier, with cached extrema.
#[derive(Debug, Clone)]
pub struct ExponentField {
    values: Vec<f64>,
    lo: f64,
    hi: f64,
    kind: CarrierKind,
}

impl ExponentField {
    pub fn new(values: Vec<f64>, kind: CarrierKind) -> Result<Self, VarexpError> {
        if values.is_empty() {
            return Err(VarexpError::InvalidExponent("empty field".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &values {
            if !v.is_finite() {
                return Err(VarexpError::InvalidExponent(format!(
                    "non-finite exponent value {v}"
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo < 1.0 {
            return Err(VarexpError::InvalidExponent(format!(
                "pointwise minimum {lo} is below 1"
            )));
        }
        Ok(Self {
            values,
            lo,
            hi,
            kind,
        })
    }

    pub fn constant(value: f64, len: usize, kind: CarrierKind) -> Result<Self, VarexpError> {
        Self::new(vec![value; len], kind)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise minimum r⁻.
    pub fn min(&self) -> f64 {
        self.lo
    }

    /// Pointwise maximum r⁺.
    pub fn max(&self) -> f64 {
        self.hi
    }

    pub fn kind(&self) -> CarrierKind {
        self.kind
    }

    /// Pointwise conjugate exponent 1/r + 1/r' = 1; requires r⁻ > 1.
    pub fn conjugate(&self) -> Result<Self, VarexpError> {
        if self.lo <= 1.0 {
            return Err(VarexpError::InvalidExponent(
                "conjugate needs pointwise exponent > 1".into(),
            ));
        }
        let values = self.values.iter().map(|&r| r / (r - 1.0)).collect();
        Self::new(values, self.kind)
    }
}

/// The anisotropic exponent data: one field per interior direction and one
/// per tangential direction, with pointwise envelope fields.
#[derive(Debug, Clone)]
pub struct VectorExponent {
    pub p: Vec<ExponentField>,
    pub q: Vec<ExponentField>,
    pub p_min: ExponentField,
    pub p_max: ExponentField,
    pub q_min: ExponentField,
    pub q_max: ExponentField,
}

/// Nodewise minimum and maximum across component fields.
pub fn pointwise_extrema(
    components: &[ExponentField],
) -> Result<(ExponentField, ExponentField), VarexpError> {
    let first = components.first().ok_or(VarexpError::ComponentCount {
        what: "extrema",
        expected: 1,
        got: 0,
    })?;
    for c in components {
        if c.kind() != first.kind() || c.len() != first.len() {
            return Err(VarexpError::CarrierMismatch {
                context: "pointwise_extrema",
                expected: first.kind(),
                expected_len: first.len(),
                got: c.kind(),
                got_len: c.len(),
            });
        }
    }
    let n = first.len();
    let mut lo = first.values().to_vec();
    let mut hi = first.values().to_vec();
    for c in &components[1..] {
        for i in 0..n {
            lo[i] = lo[i].min(c.values()[i]);
            hi[i] = hi[i].max(c.values()[i]);
        }
    }
    Ok((
        ExponentField::new(lo, first.kind())?,
        ExponentField::new(hi, first.kind())?,
    ))
}

impl VectorExponent {
    /// Assemble from per-direction fields; validates 1 < min and max < ∞ on
    /// both carriers.
    pub fn new(p: Vec<ExponentField>, q: Vec<ExponentField>) -> Result<Self, VarexpError> {
        if p.is_empty() || q.is_empty() {
            return Err(VarexpError::ComponentCount {
                what: "vector exponent",
                expected: 1,
                got: 0,
            });
        }
        let (p_min, p_max) = pointwise_extrema(&p)?;
        let (q_min, q_max) = pointwise_extrema(&q)?;
        if p_min.min() <= 1.0 || q_min.min() <= 1.0 {
            return Err(VarexpError::InvalidExponent(format!(
                "pointwise minima must exceed 1 (got {} interior, {} boundary)",
                p_min.min(),
                q_min.min()
            )));
        }
        Ok(Self {
            p,
            q,
            p_min,
            p_max,
            q_min,
            q_max,
        })
    }
}

/// A state on the closed box: interior nodal values plus boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFunction {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl PairFunction {
    pub fn new(interior: Vec<f64>, boundary: Vec<f64>) -> Self {
        Self { interior, boundary }
    }

    /// Build the conforming pair (u, u|_Γ).
    pub fn conforming(interior: Vec<f64>, atlas: &crate::grid::BoundaryAtlas) -> Self {
        let boundary = atlas.trace(&interior);
        Self { interior, boundary }
    }

    /// Check that the boundary values equal the trace exactly.
    pub fn check_conforming(&self, atlas: &crate::grid::BoundaryAtlas) -> Result<(), VarexpError> {
        let tr = atlas.trace(&self.interior);
        for (i, (&a, &b)) in tr.iter().zip(&self.boundary).enumerate() {
            if a != b {
                return Err(VarexpError::NonConforming { index: i });
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            interior: vec![0.0; self.interior.len()],
            boundary: vec![0.0; self.boundary.len()],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            interior: self.interior.iter().map(|v| v * s).collect(),
            boundary: self.boundary.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            interior: self
                .interior
                .iter()
                .zip(&other.interior)
                .map(|(a, b)| a - b)
                .collect(),
            boundary: self
                .boundary
                .iter()
                .zip(&other.boundary)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// The modular Θ(f) = Σ w_i |f_i|^{r_i} over the carrier.
pub fn modular(f: &[f64], r: &ExponentField, carrier: &Carrier) -> Result<f64, VarexpError> {
    carrier.matches(r.kind(), r.len(), "modular")?;
    carrier.check_field(f)?;
    let w = carrier.weights();
    let rv = r.values();
    Ok(par::sum_indexed(f.len(), |i| w[i] * f[i].abs().powf(rv[i])))
}

/// Relative bracket width for the Luxemburg bisection.
const LUX_TOL: f64 = 1e-12;

/// The Luxemburg norm inf{ μ > 0 : Θ(f/μ) ≤ 1 }, computed by bracketing and
/// bisection on the strictly decreasing map μ ↦ Θ(f/μ).
pub fn luxemburg_norm(f: &[f64], r: &ExponentField, carrier: &Carrier) -> Result<f64, VarexpError> {
    carrier.matches(r.kind(), r.len(), "luxemburg_norm")?;
    carrier.check_field(f)?;
    if f.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let theta = |mu: f64| -> f64 {
        let w = carrier.weights();
        let rv = r.values();
        par::sum_indexed(f.len(), |i| w[i] * (f[i].abs() / mu).powf(rv[i]))
    };
    let mut mu = 1.0;
    let t = theta(mu);
    if t == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi);
    if t > 1.0 {
        // Grow until Θ ≤ 1.
        loop {
            let next = mu * 2.0;
            if theta(next) <= 1.0 {
                lo = mu;
                hi = next;
                break;
            }
            mu = next;
        }
    } else {
        // Shrink until Θ ≥ 1.
        loop {
            let next = mu * 0.5;
            if next == 0.0 {
                return Ok(0.0);
            }
            if theta(next) >= 1.0 {
                lo = next;
                hi = mu;
                break;
            }
            mu = next;
        }
    }
    while (hi - lo) > LUX_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if theta(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pair norm: Luxemburg norm of the interior part plus Luxemburg norm of the
/// boundary part.
pub fn pair_norm(
    u: &PairFunction,
    r: &ExponentField,
    s: &ExponentField,
    interior: &Carrier,
    boundary: &Carrier,
) -> Result<f64, VarexpError> {
    Ok(luxemburg_norm(&u.interior, r, interior)? + luxemburg_norm(&u.boundary, s, boundary)?)
}

/// Sup norm of the pair: max of the two component sup norms.
pub fn sup_pair_norm(u: &PairFunction) -> f64 {
    let a = u.interior.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let b = u.boundary.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    a.max(b)
}
