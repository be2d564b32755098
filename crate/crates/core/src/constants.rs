//! Explicit decay constants for the flow: the ten auxiliary integrals per
//! side, the six assembled constants, and the ultracontractivity parameters
//! of both the Hölder and the Lipschitz regime.
//!
//! Every integral is evaluated twice, by adaptive Simpson (with geometric
//! subdivision toward the logarithmic endpoint where needed) and by composite
//! Gauss-Legendre, and the reported error is the larger of the adaptive
//! estimate and the difference between the two routes. The non-explicit
//! analytical constants (the coercivity and log-Sobolev constants, the
//! slack multipliers) are explicit user inputs defaulting to 1; the outputs
//! that depend on them are flagged as parameterized, while γ, k₁, k₄ and the
//! decay exponents are fully determined by the branch inputs.

use serde::Serialize;
use thiserror::Error;

use crate::quad::{
    adaptive_simpson, adaptive_simpson_log_endpoint, gauss_legendre, gauss_legendre_log_endpoint,
    QuadError,
};

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("invalid branch inputs: {0}")]
    InvalidInputs(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("argument out of range: need 0 <= xi < t, got xi = {xi}, t = {t}")]
    ArgOutOfRange { xi: f64, t: f64 },
    #[error("integral index must be 1..=5, got {0}")]
    BadIndex(usize),
    #[error(
        "Lipschitz-regime constants need both branch values equal to 2, got {p_check} and {q_check}"
    )]
    LipschitzBranch { p_check: f64, q_check: f64 },
    #[error(transparent)]
    Varexp(#[from] crate::varexp::VarexpError),
}

/// The scalar inputs selecting a branch of the constants pipeline: the
/// minimum initial-norm exponent, the two norm-branch values, the two
/// entropy-branch values, and the maximal exponents.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchInputs {
    /// Minimum of the two initial-data norm exponents; at least 2.
    pub a: f64,
    /// Norm-branch value on the volume side (one of the two envelope extrema).
    pub p_check: f64,
    /// Norm-branch value on the surface side.
    pub q_check: f64,
    /// Entropy-branch value on the volume side; strictly above 2.
    pub p_tilde: f64,
    /// Entropy-branch value on the surface side; strictly above 2.
    pub q_tilde: f64,
    /// Maximal volume exponent; at least `p_tilde`.
    pub d1: f64,
    /// Maximal surface exponent; at least `q_tilde`.
    pub d2: f64,
}

impl BranchInputs {
    pub fn validate(&self) -> Result<(), ConstantsError> {
        let fail = |msg: String| Err(ConstantsError::InvalidInputs(msg));
        if !(self.a >= 2.0) {
            return fail(format!("a must be >= 2, got {}", self.a));
        }
        if !(self.p_tilde > 2.0) || !(self.q_tilde > 2.0) {
            return fail(format!(
                "entropy branch values must exceed 2, got {} and {}",
                self.p_tilde, self.q_tilde
            ));
        }
        if !(self.p_check >= 2.0) || !(self.q_check >= 2.0) {
            return fail(format!(
                "norm branch values must be >= 2, got {} and {}",
                self.p_check, self.q_check
            ));
        }
        if !(self.d1 >= self.p_tilde) || !(self.d2 >= self.q_tilde) {
            return fail(format!(
                "maximal exponents must dominate the branch values: d1 = {}, d2 = {}",
                self.d1, self.d2
            ));
        }
        for v in [
            self.a,
            self.p_check,
            self.q_check,
            self.p_tilde,
            self.q_tilde,
            self.d1,
            self.d2,
        ] {
            if !v.is_finite() {
                return fail("non-finite input".into());
            }
        }
        Ok(())
    }

    fn exp_p(&self) -> f64 {
        (self.p_check - 2.0) * self.p_tilde / (self.p_tilde - 2.0)
    }

    fn exp_q(&self) -> f64 {
        (self.q_check - 2.0) * self.q_tilde / (self.q_tilde - 2.0)
    }

    fn factor_p(&self, x: f64) -> f64 {
        1.0 - (self.p_tilde - 2.0) * x / (self.a + self.p_tilde - 2.0)
    }

    fn factor_q(&self, x: f64) -> f64 {
        1.0 - (self.q_tilde - 2.0) * x / (self.a + self.q_tilde - 2.0)
    }
}

/// The analytically non-explicit constants, supplied by the user. Defaults
/// are all 1; reported absolute constants are parameterized by these.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnknownConstants {
    /// Coercivity constants of the two gradient-term estimates.
    pub c_star_p: f64,
    pub c_star_q: f64,
    /// Logarithmic-inequality constants of the two sides.
    pub c_eps_p: f64,
    pub c_eps_q: f64,
    /// Slack multipliers; at least 1.
    pub kappa_p: f64,
    pub kappa_q: f64,
    /// Aggregated remainder constants of the two sides.
    pub g_p: f64,
    pub g_q: f64,
    /// Dissipation constant (sign-only in all checks).
    pub c1: f64,
}

impl Default for UnknownConstants {
    fn default() -> Self {
        Self {
            c_star_p: 1.0,
            c_star_q: 1.0,
            c_eps_p: 1.0,
            c_eps_q: 1.0,
            kappa_p: 1.0,
            kappa_q: 1.0,
            g_p: 1.0,
            g_q: 1.0,
            c1: 1.0,
        }
    }
}

impl UnknownConstants {
    pub fn validate(&self) -> Result<(), ConstantsError> {
        let all = [
            self.c_star_p,
            self.c_star_q,
            self.c_eps_p,
            self.c_eps_q,
            self.kappa_p,
            self.kappa_q,
            self.g_p,
            self.g_q,
            self.c1,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(ConstantsError::InvalidInputs(
                "unknown constants must be positive".into(),
            ));
        }
        if self.kappa_p < 1.0 || self.kappa_q < 1.0 {
            return Err(ConstantsError::InvalidInputs(
                "slack multipliers must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Which exponent family an auxiliary integral belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    P,
    Q,
}

/// A value computed along two independent quadrature routes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualEstimate {
    pub value: f64,
    /// max(adaptive estimate, |adaptive - Gauss-Legendre|)
    pub error: f64,
    pub adaptive: f64,
    pub gauss: f64,
}

const QUAD_TOL: f64 = 1e-11;

fn dual<F>(f: F, singular_at_one: bool) -> Result<DualEstimate, ConstantsError>
where
    F: Fn(f64) -> f64 + Copy,
{
    let (adaptive, est) = if singular_at_one {
        let e = adaptive_simpson_log_endpoint(f, 0.0, 1.0, QUAD_TOL)?;
        (e.value, e.error)
    } else {
        let e = adaptive_simpson(f, 0.0, 1.0, QUAD_TOL)?;
        (e.value, e.error)
    };
    let gauss = if singular_at_one {
        gauss_legendre_log_endpoint(f, 0.0, 1.0, QUAD_TOL)
    } else {
        gauss_legendre(f, 0.0, 1.0, 16)
    };
    Ok(DualEstimate {
        value: adaptive,
        error: est.max((adaptive - gauss).abs()),
        adaptive,
        gauss,
    })
}

/// The first integral family: weights of the decaying-exponent route.
/// Index 2 carries the integrable log(1-x) endpoint singularity.
pub fn integral_i(
    index: usize,
    family: Family,
    inp: &BranchInputs,
) -> Result<DualEstimate, ConstantsError> {
    inp.validate()?;
    if !(1..=5).contains(&index) {
        return Err(ConstantsError::BadIndex(index));
    }
    let ep = inp.exp_p();
    let eq = inp.exp_q();
    let a = inp.a;
    let (own_exp, other_exp, own_d, tilde) = match family {
        Family::P => (ep, eq, inp.d1, inp.p_tilde),
        Family::Q => (eq, ep, inp.d2, inp.q_tilde),
    };
    let own = |x: f64| match family {
        Family::P => inp.factor_p(x),
        Family::Q => inp.factor_q(x),
    };
    let other = |x: f64| match family {
        Family::P => inp.factor_q(x),
        Family::Q => inp.factor_p(x),
    };
    let base = move |x: f64| own(x).powf(own_exp - 1.0) * other(x).powf(other_exp);
    match index {
        1 => dual(base, false),
        2 => dual(move |x| base(x) * (1.0 - x).ln(), true),
        3 => dual(
            move |x| base(x) * (a + (tilde - 2.0) * (1.0 - x)).ln(),
            false,
        ),
        4 => dual(move |x| base(x) * (a - x).ln(), false),
        5 => dual(
            move |x| {
                (a - x)
                    * (1.0 - x).powf(own_d - 1.0)
                    * own(x).powf(own_exp - own_d)
                    * other(x).powf(other_exp)
            },
            false,
        ),
        _ => unreachable!(),
    }
}

/// The second integral family: weights of the constant-exponent route.
/// Index 3 carries the log(1-x) endpoint singularity; indices 1 and 2 have
/// closed forms used as cross-checks.
pub fn integral_j(
    index: usize,
    family: Family,
    inp: &BranchInputs,
) -> Result<DualEstimate, ConstantsError> {
    inp.validate()?;
    if !(1..=5).contains(&index) {
        return Err(ConstantsError::BadIndex(index));
    }
    let a = inp.a;
    let (tilde, d) = match family {
        Family::P => (inp.p_tilde, inp.d1),
        Family::Q => (inp.q_tilde, inp.d2),
    };
    let denom = move |x: f64| a + (tilde - 2.0) * (1.0 - x);
    match index {
        1 => dual(move |x| 1.0 / denom(x), false),
        2 => dual(move |x| denom(x).ln() / denom(x), false),
        3 => dual(move |x| (1.0 - x).ln() / denom(x), true),
        4 => dual(move |x| (a - x).ln() / denom(x), false),
        5 => dual(
            move |x| (a - x) * (1.0 - x).powf(d - 1.0) / denom(x).powf(d),
            false,
        ),
        _ => unreachable!(),
    }
}

/// Closed form of the first constant-route integral.
pub fn j1_closed(family: Family, inp: &BranchInputs) -> f64 {
    let tilde = match family {
        Family::P => inp.p_tilde,
        Family::Q => inp.q_tilde,
    };
    ((inp.a + tilde - 2.0).ln() - inp.a.ln()) / (tilde - 2.0)
}

/// Closed form of the second constant-route integral (the symmetric form in
/// the lower limit).
pub fn j2_closed(family: Family, inp: &BranchInputs) -> f64 {
    let tilde = match family {
        Family::P => inp.p_tilde,
        Family::Q => inp.q_tilde,
    };
    ((inp.a + tilde - 2.0).ln().powi(2) - inp.a.ln().powi(2)) / (2.0 * (tilde - 2.0))
}

/// The variant of the surface-side closed form as printed in the source
/// derivation, with the exponent value where symmetry suggests the lower
/// limit. Reported alongside the symmetric form; quadrature is authoritative.
pub fn j2q_printed_form(inp: &BranchInputs) -> f64 {
    ((inp.a + inp.q_tilde - 2.0).ln().powi(2) - inp.q_tilde.ln().powi(2))
        / (2.0 * (inp.q_tilde - 2.0))
}

/// The integrand weight of the homogeneous decay route at `xi` of `[0, t)`.
pub fn eval_p(xi: f64, t: f64, inp: &BranchInputs) -> Result<f64, ConstantsError> {
    inp.validate()?;
    if !(0.0..).contains(&xi) || xi >= t {
        return Err(ConstantsError::ArgOutOfRange { xi, t });
    }
    let term = |check: f64, tilde: f64| {
        (check - 2.0) * tilde / ((inp.a + tilde - 2.0) * t - (tilde - 2.0) * xi)
    };
    Ok(term(inp.p_check, inp.p_tilde) + term(inp.q_check, inp.q_tilde))
}

/// Closed form of the running integral of `eval_p` from 0 to `xi`.
pub fn integral_p(xi: f64, t: f64, inp: &BranchInputs) -> Result<f64, ConstantsError> {
    inp.validate()?;
    if !(0.0..).contains(&xi) || xi > t {
        return Err(ConstantsError::ArgOutOfRange { xi, t });
    }
    let term = |check: f64, tilde: f64| {
        let top = (inp.a + tilde - 2.0) * t;
        (check - 2.0) * tilde / (tilde - 2.0) * (top / (top - (tilde - 2.0) * xi)).ln()
    };
    Ok(term(inp.p_check, inp.p_tilde) + term(inp.q_check, inp.q_tilde))
}

/// The inhomogeneous integrand at `xi` of `[0, t)`: two logarithmic terms and
/// two slack terms, evaluated literally.
pub fn eval_q(
    xi: f64,
    t: f64,
    inp: &BranchInputs,
    unk: &UnknownConstants,
) -> Result<f64, ConstantsError> {
    inp.validate()?;
    unk.validate()?;
    if !(0.0..).contains(&xi) || xi >= t {
        return Err(ConstantsError::ArgOutOfRange { xi, t });
    }
    let side = |tilde: f64, d: f64, c_star: f64, c_eps: f64, kappa: f64| -> f64 {
        let denom = (inp.a + tilde - 2.0) * t - (tilde - 2.0) * xi;
        let log_arg = c_star * tilde.powf(d - 1.0) * (inp.a * t - xi) * (t - xi).powf(d - 1.0)
            / (c_eps * denom.powf(d - 1.0));
        debug_assert!(log_arg > 0.0);
        let log_term = tilde / denom * log_arg.ln();
        let slack =
            (tilde * (inp.a * t - xi).powf(1.0 / d) * (t - xi).powf((d - 1.0) / d) / denom).powf(d);
        log_term - 2.0 * c_star * kappa * slack
    };
    Ok(
        side(inp.p_tilde, inp.d1, unk.c_star_p, unk.c_eps_p, unk.kappa_p)
            + side(inp.q_tilde, inp.d2, unk.c_star_q, unk.c_eps_q, unk.kappa_q),
    )
}

/// The six assembled constants, with quadrature error propagation and the
/// alternate conventions for the second one.
#[derive(Debug, Clone, Serialize)]
pub struct KConstants {
    pub values: [f64; 6],
    pub errors: [f64; 6],
    /// The intermediate derivation defines the second constant with a
    /// leading minus; the statement form (positive) is authoritative.
    pub k2_proof_convention: f64,
    /// The value the underlying limit integral actually produces: the
    /// statement divides by the first power of the shifted exponent sum,
    /// the derivation by its d-th power. Both are reported.
    pub k2_derivation: f64,
}

struct SideIntegrals {
    i: [DualEstimate; 5],
    j: [DualEstimate; 5],
}

fn side_integrals(family: Family, inp: &BranchInputs) -> Result<SideIntegrals, ConstantsError> {
    let mut i = [DualEstimate {
        value: 0.0,
        error: 0.0,
        adaptive: 0.0,
        gauss: 0.0,
    }; 5];
    let mut j = i;
    for idx in 1..=5 {
        i[idx - 1] = integral_i(idx, family, inp)?;
        j[idx - 1] = integral_j(idx, family, inp)?;
    }
    Ok(SideIntegrals { i, j })
}

fn assemble_k(
    inp: &BranchInputs,
    unk: &UnknownConstants,
    p: &SideIntegrals,
    q: &SideIntegrals,
) -> KConstants {
    let a = inp.a;
    let (pt, qt) = (inp.p_tilde, inp.q_tilde);
    let (d1, d2) = (inp.d1, inp.d2);
    let wp = pt / (a + pt - 2.0);
    let wq = qt / (a + qt - 2.0);

    let k1 = wp * p.i[0].value + wq * q.i[0].value;
    let k1_err = wp * p.i[0].error + wq * q.i[0].error;

    let k2_p = 2.0 * unk.c_star_p * unk.kappa_p * pt.powf(d1) / (a + pt - 2.0);
    let k2_q = 2.0 * unk.c_star_q * unk.kappa_q * qt.powf(d2) / (a + qt - 2.0);
    let k2 = k2_p * p.i[4].value + k2_q * q.i[4].value;
    let k2_err = k2_p * p.i[4].error + k2_q * q.i[4].error;
    let k2_derivation =
        2.0 * unk.c_star_p * unk.kappa_p * (pt / (a + pt - 2.0)).powf(d1) * p.i[4].value
            + 2.0 * unk.c_star_q * unk.kappa_q * (qt / (a + qt - 2.0)).powf(d2) * q.i[4].value;

    let log_p = (unk.c_star_p * pt.powf(d1 - 1.0) / unk.c_eps_p).ln();
    let log_q = (unk.c_star_q * qt.powf(d2 - 1.0) / unk.c_eps_q).ln();
    let k3 = wp
        * (log_p * p.i[0].value + (d1 - 1.0) * (p.i[1].value - p.i[2].value) + p.i[3].value)
        + wq * (log_q * q.i[0].value + (d2 - 1.0) * (q.i[1].value - q.i[2].value) + q.i[3].value);
    let k3_err = wp
        * (log_p.abs() * p.i[0].error + (d1 - 1.0) * (p.i[1].error + p.i[2].error) + p.i[3].error)
        + wq * (log_q.abs() * q.i[0].error
            + (d2 - 1.0) * (q.i[1].error + q.i[2].error)
            + q.i[3].error);

    let k4 =
        pt / (pt - 2.0) * ((a + pt - 2.0) / a).ln() + qt / (qt - 2.0) * ((a + qt - 2.0) / a).ln();

    let k5_p = 2.0 * unk.c_star_p * unk.kappa_p * pt.powf(d1);
    let k5_q = 2.0 * unk.c_star_q * unk.kappa_q * qt.powf(d2);
    let k5 = k5_p * p.j[4].value + k5_q * q.j[4].value;
    let k5_err = k5_p * p.j[4].error + k5_q * q.j[4].error;

    let k6 = pt
        * (log_p * p.j[0].value + (d1 - 1.0) * (p.j[2].value - p.j[1].value) + p.j[3].value)
        + qt * (log_q * q.j[0].value + (d2 - 1.0) * (q.j[2].value - q.j[1].value) + q.j[3].value);
    let k6_err = pt
        * (log_p.abs() * p.j[0].error + (d1 - 1.0) * (p.j[1].error + p.j[2].error) + p.j[3].error)
        + qt * (log_q.abs() * q.j[0].error
            + (d2 - 1.0) * (q.j[1].error + q.j[2].error)
            + q.j[3].error);

    KConstants {
        values: [k1, k2, k3, k4, k5, k6],
        errors: [k1_err, k2_err, k3_err, 0.0, k5_err, k6_err],
        k2_proof_convention: -k2,
        k2_derivation,
    }
}

/// Assemble the six constants from the integral values and the unknowns.
pub fn constants_k(
    inp: &BranchInputs,
    unk: &UnknownConstants,
) -> Result<KConstants, ConstantsError> {
    inp.validate()?;
    unk.validate()?;
    let p = side_integrals(Family::P, inp)?;
    let q = side_integrals(Family::Q, inp)?;
    Ok(assemble_k(inp, unk, &p, &q))
}

/// The Hölder exponent of the smoothing bound; in (0, 1], equal to 1 exactly
/// when both norm-branch values are 2.
pub fn gamma(inp: &BranchInputs) -> f64 {
    let fp = inp.a / (inp.a + inp.p_tilde - 2.0);
    let fq = inp.a / (inp.a + inp.q_tilde - 2.0);
    fp.powf(inp.exp_p()) * fq.powf(inp.exp_q())
}

/// Parameters of the Lipschitz-regime bound (norm-branch values equal 2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzParams {
    pub kappa: f64,
    pub c0: f64,
    /// Statement convention (positive).
    pub c0_prime: f64,
    /// The derivation's sign convention for the same constant.
    pub c0_prime_proof: f64,
}

/// The full parameter set of the smoothing bounds.
#[derive(Debug, Clone, Serialize)]
pub struct UltraParams {
    pub gamma: f64,
    /// Decay exponent as stated.
    pub kappa: f64,
    /// Decay exponent as the limiting formula suggests (statement value
    /// scaled by gamma); both are reported and fitted against.
    pub kappa_alt: f64,
    pub c_prime: f64,
    /// Prefactor, including the embedding factor supplied by the caller.
    pub c: f64,
    pub lipschitz: Option<LipschitzParams>,
}

/// Compute the decay parameters; the Lipschitz branch is present exactly when
/// both norm-branch values are 2.
pub fn ultracontractivity_params(
    inp: &BranchInputs,
    unk: &UnknownConstants,
    c_omega: f64,
) -> Result<UltraParams, ConstantsError> {
    let k = constants_k(inp, unk)?;
    let g = gamma(inp);
    let lipschitz = if inp.p_check == 2.0 && inp.q_check == 2.0 {
        Some(lipschitz_params(inp, unk, c_omega)?)
    } else {
        None
    };
    Ok(UltraParams {
        gamma: g,
        kappa: k.values[0],
        kappa_alt: g * k.values[0],
        c_prime: k.values[1],
        c: (-k.values[2]).exp() * c_omega,
        lipschitz,
    })
}

/// The Lipschitz-regime parameters; errors unless both norm-branch values
/// are 2.
pub fn lipschitz_params(
    inp: &BranchInputs,
    unk: &UnknownConstants,
    c_omega: f64,
) -> Result<LipschitzParams, ConstantsError> {
    if inp.p_check != 2.0 || inp.q_check != 2.0 {
        return Err(ConstantsError::LipschitzBranch {
            p_check: inp.p_check,
            q_check: inp.q_check,
        });
    }
    let k = constants_k(inp, unk)?;
    let a = inp.a;
    let kappa = inp.p_tilde / (inp.p_tilde - 2.0) * ((a + inp.p_tilde - 2.0) / a).ln()
        + inp.q_tilde / (inp.q_tilde - 2.0) * ((a + inp.q_tilde - 2.0) / a).ln();
    Ok(LipschitzParams {
        kappa,
        c0: k.values[5].exp() * c_omega,
        c0_prime: k.values[4],
        c0_prime_proof: -k.values[4],
    })
}

/// The complete constants report for one branch-input set.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantBundle {
    pub inputs: BranchInputs,
    pub unknowns: UnknownConstants,
    pub c_omega: f64,
    pub i_p: Vec<DualEstimate>,
    pub i_q: Vec<DualEstimate>,
    pub j_p: Vec<DualEstimate>,
    pub j_q: Vec<DualEstimate>,
    pub k: KConstants,
    pub params: UltraParams,
    pub j1_closed_p: f64,
    pub j1_closed_q: f64,
    pub j2_closed_p: f64,
    /// Surface-side closed form as printed in the source derivation.
    pub j2q_printed: f64,
    /// Surface-side closed form with the symmetric lower limit.
    pub j2q_symmetric: f64,
    pub discrepancies: Vec<String>,
    /// Total measure of the configured domain when one is supplied; the
    /// entropy-branch normalization assumes 1.
    pub m_sigma: Option<f64>,
    pub notes: Vec<String>,
}

/// Compute every integral, constant and parameter for one input set.
pub fn compute_bundle(
    inp: &BranchInputs,
    unk: &UnknownConstants,
    c_omega: f64,
) -> Result<ConstantBundle, ConstantsError> {
    inp.validate()?;
    unk.validate()?;
    let p = side_integrals(Family::P, inp)?;
    let q = side_integrals(Family::Q, inp)?;
    let k = assemble_k(inp, unk, &p, &q);
    let g = gamma(inp);
    let lipschitz = if inp.p_check == 2.0 && inp.q_check == 2.0 {
        Some(LipschitzParams {
            kappa: k.values[3],
            c0: k.values[5].exp() * c_omega,
            c0_prime: k.values[4],
            c0_prime_proof: -k.values[4],
        })
    } else {
        None
    };
    let params = UltraParams {
        gamma: g,
        kappa: k.values[0],
        kappa_alt: g * k.values[0],
        c_prime: k.values[1],
        c: (-k.values[2]).exp() * c_omega,
        lipschitz,
    };
    let j2q_printed = j2q_printed_form(inp);
    let j2q_symmetric = j2_closed(Family::Q, inp);
    let mut discrepancies = Vec::new();
    if (j2q_printed - q.j[1].value).abs() > 1e-8 * (1.0 + q.j[1].value.abs()) {
        discrepancies.push(format!(
            "surface-side second closed form as printed ({j2q_printed}) disagrees with quadrature ({}); the symmetric form ({j2q_symmetric}) is used",
            q.j[1].value
        ));
    }
    if (k.values[1] - k.k2_derivation).abs() > 1e-10 * (1.0 + k.values[1].abs()) {
        discrepancies.push(format!(
            "k2 as stated ({}) differs from the value the limit integral produces ({}); the stated form is reported as authoritative",
            k.values[1], k.k2_derivation
        ));
    }
    let notes = vec![
        "gamma, k1, k4 and both decay exponents are fully determined by the branch inputs".into(),
        "k2, k3, k5, k6 and the absolute prefactors are parameterized by the user-supplied unknown constants".into(),
        "the decay exponent is reported both as stated (kappa) and as the limiting formula suggests (kappa_alt = gamma * kappa)".into(),
        "k2 is emitted in three conventions: as stated (positive, first-power denominator), with the derivation's sign, and with the derivation's d-th power denominator".into(),
    ];
    Ok(ConstantBundle {
        inputs: *inp,
        unknowns: *unk,
        c_omega,
        i_p: p.i.to_vec(),
        i_q: q.i.to_vec(),
        j_p: p.j.to_vec(),
        j_q: q.j.to_vec(),
        k,
        params,
        j1_closed_p: j1_closed(Family::P, inp),
        j1_closed_q: j1_closed(Family::Q, inp),
        j2_closed_p: j2_closed(Family::P, inp),
        j2q_printed,
        j2q_symmetric,
        discrepancies,
        m_sigma: None,
        notes,
    })
}

/// Derive branch inputs from a trajectory snapshot: the norm-branch values
/// come from whether the difference's variable-exponent norms exceed 1, the
/// entropy-branch values from the sign of the normalized entropy functional
/// on each carrier. When `rescale_measure` is set, the quadrature weights are
/// normalized to total measure 1 first (the entropy normalization assumed by
/// the branch selection).
#[allow(clippy::too_many_arguments)]
pub fn derive_branch_inputs(
    energy: &crate::energy::WentzellEnergy,
    diff: &crate::varexp::PairFunction,
    r_min: f64,
    s_min: f64,
    rescale_measure: bool,
) -> Result<BranchInputs, ConstantsError> {
    use crate::varexp::{luxemburg_norm, Carrier, CarrierKind, ExponentField};
    let grid = energy.grid();
    let a = r_min.min(s_min);
    if a < 2.0 {
        return Err(ConstantsError::InvalidInputs(format!(
            "initial-norm exponents must be at least 2, got minimum {a}"
        )));
    }
    let vol_measure: f64 = grid.domain.weights().iter().sum();
    let surf_measure: f64 = grid.atlas.weights().iter().sum();
    let m_sigma = vol_measure + surf_measure;
    let scale = if rescale_measure { 1.0 / m_sigma } else { 1.0 };
    let int_car = Carrier::custom(grid.domain.weights().iter().map(|w| w * scale).collect());
    let bnd_car = Carrier::custom(grid.atlas.weights().iter().map(|w| w * scale).collect());

    let exps = &energy.exponents;
    let p_min_vals = exps.p_min.values();
    let q_min_vals = exps.q_min.values();

    // Norm-branch values from the shifted-exponent norms of the difference.
    let eta_p = ExponentField::new(
        p_min_vals.iter().map(|&v| a + v - 2.0).collect(),
        CarrierKind::Custom,
    )?;
    let norm_p = luxemburg_norm(&diff.interior, &eta_p, &int_car)?;
    let p_check = if norm_p > 1.0 {
        exps.p_min.min()
    } else {
        exps.p_min.max()
    };
    let eta_q = ExponentField::new(
        q_min_vals.iter().map(|&v| a + v - 2.0).collect(),
        CarrierKind::Custom,
    )?;
    let norm_q = luxemburg_norm(&diff.boundary, &eta_q, &bnd_car)?;
    let q_check = if norm_q > 1.0 {
        exps.q_min.min()
    } else {
        exps.q_min.max()
    };

    // Entropy-branch values: sign of ∫ z^eta log z with z the difference
    // normalized by its own shifted-exponent norm on the same carrier.
    let entropy =
        |vals: &[f64], eta: &ExponentField, car: &Carrier| -> Result<f64, ConstantsError> {
            let norm = luxemburg_norm(vals, eta, car)?;
            if norm == 0.0 {
                return Ok(0.0);
            }
            let w = car.weights();
            let e = eta.values();
            Ok(crate::par::sum_indexed(vals.len(), |i| {
                let z = vals[i].abs() / norm;
                if z == 0.0 {
                    0.0
                } else {
                    w[i] * z.powf(e[i]) * z.ln()
                }
            }))
        };
    let s_p = entropy(&diff.interior, &eta_p, &int_car)?;
    let p_tilde = if s_p <= 0.0 {
        exps.p_min.min()
    } else {
        exps.p_min.max()
    };
    let s_q = entropy(&diff.boundary, &eta_q, &bnd_car)?;
    let q_tilde = if s_q <= 0.0 {
        exps.q_min.min()
    } else {
        exps.q_min.max()
    };

    let out = BranchInputs {
        a,
        p_check,
        q_check,
        p_tilde,
        q_tilde,
        d1: exps.p_max.max(),
        d2: exps.q_max.max(),
    };
    out.validate()?;
    Ok(out)
}

/// Total measure (volume plus surface) of a grid, for the normalization
/// report.
pub fn m_sigma(grid: &crate::grid::Grid) -> f64 {
    grid.domain.weights().iter().sum::<f64>() + grid.atlas.weights().iter().sum::<f64>()
}
