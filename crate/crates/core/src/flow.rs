//! Implicit-Euler proximal stepping for the gradient flow of the Wentzell
//! energy on the pair space.
//!
//! Each step minimizes v ↦ ‖v − u_n‖² / (2τ) + Φ(v) over conforming pairs by
//! damped Newton with backtracking on the objective; the Newton systems are
//! solved matrix-free by Jacobi-preconditioned conjugate gradients. A
//! preconditioned gradient step serves as fallback when the Newton direction
//! stalls. The iteration is accepted only once the pair-space norm of the
//! objective gradient is below tolerance, so energy decay and the proximal
//! inequality hold at solver precision.

use serde::Serialize;
use thiserror::Error;

use crate::energy::WentzellEnergy;
use crate::par;
use crate::varexp::PairFunction;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("field has length {got}, expected {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error(
        "inner solver did not converge at step {step}: residual {residual:e} above tolerance {tol:e} after {iterations} iterations"
    )]
    InnerSolve {
        step: usize,
        iterations: usize,
        residual: f64,
        tol: f64,
    },
}

/// Time-stepping parameters.
#[derive(Debug, Clone, Serialize)]
pub struct FlowConfig {
    /// Implicit-Euler step size.
    pub tau: f64,
    /// Relative gradient tolerance of the inner solver (scaled by the initial
    /// residual of each step).
    pub tolerance: f64,
    pub max_inner: usize,
    pub eps_reg: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            tolerance: 1e-10,
            max_inner: 60,
            eps_reg: 0.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(FlowError::BadStep(self.tau));
        }
        if !(self.tolerance > 0.0) {
            return Err(FlowError::BadTolerance(self.tolerance));
        }
        Ok(())
    }
}

/// Per-step inner-solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub fallback_steps: usize,
    pub residual: f64,
    pub objective: f64,
}

/// A computed trajectory of the flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PairFunction>,
    pub energies: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &PairFunction {
        self.states.last().expect("trajectory has initial state")
    }
}

/// Pair-space inner product ∫ uv + ∫ u|_Γ v|_Γ under the grid quadratures.
pub fn x2_inner(energy: &WentzellEnergy, u: &PairFunction, v: &PairFunction) -> f64 {
    let grid = energy.grid();
    let wv = grid.domain.weights();
    let wb = grid.atlas.weights();
    par::sum_indexed(u.interior.len(), |i| wv[i] * u.interior[i] * v.interior[i])
        + par::sum_indexed(u.boundary.len(), |b| wb[b] * u.boundary[b] * v.boundary[b])
}

pub fn x2_norm(energy: &WentzellEnergy, u: &PairFunction) -> f64 {
    x2_inner(energy, u, u).sqrt()
}

/// Jacobi-preconditioned conjugate gradients on the (symmetric positive
/// definite) Newton system. Returns the iterate and iteration count.
fn pcg<A>(apply: A, rhs: &[f64], diag: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, usize)
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = par::map_vec(n, |i| r[i] / diag[i]);
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let rhs_norm = par::dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return (x, 0);
    }
    for it in 0..max_iter {
        let ap = apply(&p);
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 {
            // Loss of positive definiteness in floating point; stop here and
            // let the caller fall back.
            return (x, it);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if par::dot(&r, &r).sqrt() <= rel_tol * rhs_norm {
            return (x, it + 1);
        }
        z = par::map_vec(n, |i| r[i] / diag[i]);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iter)
}

struct ProxProblem<'a> {
    energy: &'a WentzellEnergy,
    anchor: &'a [f64],
    tau: f64,
    mass: &'a [f64],
}

impl ProxProblem<'_> {
    fn objective(&self, v: &[f64]) -> f64 {
        let quad = par::sum_indexed(v.len(), |i| {
            let d = v[i] - self.anchor[i];
            self.mass[i] * d * d
        });
        quad / (2.0 * self.tau) + self.energy.energy_of_nodal(v)
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = self.energy.gradient_nodal(v);
        for i in 0..g.len() {
            g[i] += self.mass[i] * (v[i] - self.anchor[i]) / self.tau;
        }
        g
    }

    /// Pair-space norm of the Euclidean gradient (the natural residual).
    fn residual(&self, g: &[f64]) -> f64 {
        par::sum_indexed(g.len(), |i| g[i] * g[i] / self.mass[i]).sqrt()
    }
}

/// One backward-Euler resolvent solve from the nodal state `u`.
///
/// Returns the minimizer of the proximal objective together with solver
/// diagnostics. `step_index` only labels error reports.
pub fn proximal_step_nodal(
    energy: &WentzellEnergy,
    u: &[f64],
    cfg: &FlowConfig,
    step_index: usize,
) -> Result<(Vec<f64>, StepDiagnostics), FlowError> {
    cfg.validate()?;
    if u.len() != energy.n_nodes() {
        return Err(FlowError::FieldLength {
            expected: energy.n_nodes(),
            got: u.len(),
        });
    }
    let mass = energy.x2_mass();
    let prob = ProxProblem {
        energy,
        anchor: u,
        tau: cfg.tau,
        mass,
    };
    let mut v = u.to_vec();
    let mut obj = prob.objective(&v);
    let mut g = prob.gradient(&v);
    let mut res = prob.residual(&g);
    // Problem scale is the residual at the anchor, so the solve stays
    // meaningful for states of any magnitude.
    let tol = cfg.tolerance * res.max(f64::MIN_POSITIVE);
    let mut newton_iterations = 0;
    let mut cg_iterations = 0;
    let mut fallback_steps = 0;

    while res > tol {
        if newton_iterations >= cfg.max_inner {
            return Err(FlowError::InnerSolve {
                step: step_index,
                iterations: newton_iterations,
                residual: res,
                tol,
            });
        }
        newton_iterations += 1;
        // Newton system: (M/tau + Hess Phi) delta = -g.
        let hdiag: Vec<f64> = {
            let ed = energy.hess_diag_nodal(&v);
            (0..ed.len()).map(|i| ed[i] + mass[i] / cfg.tau).collect()
        };
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let vv = v.clone();
        let apply = |d: &[f64]| -> Vec<f64> {
            let mut h = energy.hess_apply_nodal(&vv, d);
            for i in 0..h.len() {
                h[i] += mass[i] * d[i] / cfg.tau;
            }
            h
        };
        let (delta, iters) = pcg(apply, &rhs, &hdiag, 1e-10, 400);
        cg_iterations += iters;

        let slope = par::dot(&g, &delta);
        // Within floating noise of the objective the decrease is invisible
        // to a value-based line search; take the full (descent) step.
        let noise = 8.0 * f64::EPSILON * obj.abs().max(1.0);
        let mut accepted = false;
        if slope < 0.0 && -slope <= noise {
            v = par::map_vec(v.len(), |i| v[i] + delta[i]);
            obj = prob.objective(&v);
            accepted = true;
        } else if slope < 0.0 {
            let mut s = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> = par::map_vec(v.len(), |i| v[i] + s * delta[i]);
                let trial_obj = prob.objective(&trial);
                if trial_obj <= obj + 1e-4 * s * slope + noise {
                    v = trial;
                    obj = trial_obj;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
        }
        if !accepted {
            // Preconditioned gradient descent fallback.
            fallback_steps += 1;
            let dir: Vec<f64> = (0..v.len()).map(|i| -g[i] / hdiag[i]).collect();
            let slope = par::dot(&g, &dir);
            let mut s = 1.0;
            let mut ok = false;
            for _ in 0..60 {
                let trial: Vec<f64> = par::map_vec(v.len(), |i| v[i] + s * dir[i]);
                let trial_obj = prob.objective(&trial);
                if trial_obj <= obj + 1e-4 * s * slope + noise {
                    v = trial;
                    obj = trial_obj;
                    ok = true;
                    break;
                }
                s *= 0.5;
            }
            if !ok {
                return Err(FlowError::InnerSolve {
                    step: step_index,
                    iterations: newton_iterations,
                    residual: res,
                    tol,
                });
            }
        }
        g = prob.gradient(&v);
        res = prob.residual(&g);
    }

    Ok((
        v,
        StepDiagnostics {
            newton_iterations,
            cg_iterations,
            fallback_steps,
            residual: res,
            objective: obj,
        },
    ))
}

/// One proximal step on a conforming pair.
pub fn proximal_step(
    energy: &WentzellEnergy,
    u: &PairFunction,
    cfg: &FlowConfig,
) -> Result<PairFunction, FlowError> {
    let (v, _) = proximal_step_nodal(energy, &u.interior, cfg, 0)?;
    Ok(PairFunction::conforming(v, &energy.grid().atlas))
}

/// Iterate proximal steps from `u0` until time `horizon`.
pub fn evolve(
    energy: &WentzellEnergy,
    u0: &PairFunction,
    horizon: f64,
    cfg: &FlowConfig,
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    if !(horizon > 0.0) {
        return Err(FlowError::BadHorizon(horizon));
    }
    let n_steps = (horizon / cfg.tau - 1e-12).ceil().max(1.0) as usize;
    let atlas = &energy.grid().atlas;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut energies = Vec::with_capacity(n_steps + 1);
    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut current = u0.interior.clone();
    times.push(0.0);
    energies.push(energy.energy_of_nodal(&current));
    states.push(PairFunction::conforming(current.clone(), atlas));
    for step in 0..n_steps {
        let (next, diag) = proximal_step_nodal(energy, &current, cfg, step)?;
        current = next;
        times.push((step + 1) as f64 * cfg.tau);
        energies.push(energy.energy_of_nodal(&current));
        states.push(PairFunction::conforming(current.clone(), atlas));
        diagnostics.push(diag);
    }
    Ok(Trajectory {
        times,
        states,
        energies,
        diagnostics,
    })
}
