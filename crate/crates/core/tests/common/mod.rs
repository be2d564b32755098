//! Shared helpers for the integration suites: energy builders over simple
//! boxes, seeded fields, and an independently assembled sparse operator with
//! its own conjugate-gradient solver for the quadratic case.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use wentzell_lab::energy::CoefficientField;
use wentzell_lab::grid::{Grid, GridSpec};
use wentzell_lab::varexp::{CarrierKind, ExponentField, VectorExponent};
use wentzell_lab::WentzellEnergy;

pub fn build_box(dimension: usize, n: usize) -> Arc<Grid> {
    Arc::new(
        Grid::build(&GridSpec {
            dimension,
            lengths: vec![1.0; dimension],
            resolution: vec![n; dimension],
        })
        .unwrap(),
    )
}

pub fn constant_energy(grid: &Arc<Grid>, p: f64, q: f64, alpha: f64, beta: f64) -> WentzellEnergy {
    let dim = grid.domain.dim();
    let nn = grid.domain.n_nodes();
    let nb = grid.atlas.n_boundary_nodes();
    let vexp = VectorExponent::new(
        (0..dim)
            .map(|_| ExponentField::constant(p, nn, CarrierKind::Interior).unwrap())
            .collect(),
        (0..dim - 1)
            .map(|_| ExponentField::constant(q, nb, CarrierKind::Boundary).unwrap())
            .collect(),
    )
    .unwrap();
    let coeff = CoefficientField::constant(alpha, beta, nn, nb).unwrap();
    WentzellEnergy::build(grid.clone(), vexp, coeff, 0.0).unwrap()
}

/// Energy with smooth exponent fields mapped into [lo, hi], seeded.
pub fn random_energy(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> WentzellEnergy {
    let dim = grid.domain.dim();
    let nn = grid.domain.n_nodes();
    let nb = grid.atlas.n_boundary_nodes();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut field = |len: usize, coords: &dyn Fn(usize) -> [f64; 3]| -> Vec<f64> {
        let k1 = rng.gen_range(1..4) as f64;
        let k2 = rng.gen_range(1..4) as f64;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        (0..len)
            .map(|i| {
                let x = coords(i);
                mid + half * (k1 * x[0] + k2 * x[1] + phase).sin() * 0.9
            })
            .collect()
    };
    let p = (0..dim)
        .map(|_| {
            ExponentField::new(field(nn, &|i| grid.domain.coords(i)), CarrierKind::Interior)
                .unwrap()
        })
        .collect();
    let q = (0..dim - 1)
        .map(|_| {
            ExponentField::new(
                field(nb, &|b| grid.domain.coords(grid.atlas.boundary_nodes[b])),
                CarrierKind::Boundary,
            )
            .unwrap()
        })
        .collect();
    let vexp = VectorExponent::new(p, q).unwrap();
    let alpha = rng.gen_range(0.5..2.0);
    let beta = rng.gen_range(0.5..2.0);
    let coeff = CoefficientField::constant(alpha, beta, nn, nb).unwrap();
    WentzellEnergy::build(grid.clone(), vexp, coeff, 0.0).unwrap()
}

/// A sparse symmetric operator in triplet-accumulated CSR form, assembled
/// entry by entry, independent of the library's term tables.
pub struct SparseOp {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOp {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        for e in self.rows[i].iter_mut() {
            if e.0 == j {
                e.1 += v;
                return;
            }
        }
        self.rows[i].push((j, v));
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, v) in row {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j == i {
                    d[i] += v;
                }
            }
        }
        d
    }
}

/// Plain conjugate gradients with Jacobi preconditioning, written for the
/// oracle path only.
pub fn cg_solve(op: &SparseOp, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = rhs.len();
    let diag = op.diag();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return x;
    }
    for _ in 0..max_iter {
        let ap = op.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= rel_tol * rhs_norm {
            break;
        }
        z = (0..n).map(|i| r[i] / diag[i]).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Assemble the quadratic-case operator (stiffness plus absorption plus the
/// surface coupling) and the diagonal pair mass directly from the scheme
/// definition: two-point differences (central inside a line, one-sided at
/// its ends), trapezoid weights per carrier, unit coefficients.
pub fn assemble_quadratic_operator(grid: &Grid) -> (SparseOp, Vec<f64>) {
    let dim = grid.domain.dim();
    let res = grid.domain.resolution().to_vec();
    let spacing = grid.domain.spacing().to_vec();
    let n = grid.domain.n_nodes();
    let wv = grid.domain.weights();
    let mut strides = vec![1usize; dim];
    for d in 1..dim {
        strides[d] = strides[d - 1] * res[d - 1];
    }
    let mut a = SparseOp::new(n);
    // Volume: for each node and axis, the difference functional D u = c (u_i - u_j)
    // contributes w * D(u) * D(e_k) to row k.
    for idx in 0..n {
        let mut rem = idx;
        for d in 0..dim {
            let i = rem % res[d];
            rem /= res[d];
            let s = strides[d];
            let h = spacing[d];
            let (hi, lo, c) = if i == 0 {
                (idx + s, idx, 1.0 / h)
            } else if i == res[d] - 1 {
                (idx, idx - s, 1.0 / h)
            } else {
                (idx + s, idx - s, 1.0 / (2.0 * h))
            };
            let w = wv[idx] * c * c;
            a.add(hi, hi, w);
            a.add(hi, lo, -w);
            a.add(lo, hi, -w);
            a.add(lo, lo, w);
        }
        a.add(idx, idx, wv[idx]); // absorption, alpha = 1
    }
    // Surface: per face and tangent slot, same structure on the face lattice.
    for face in &grid.atlas.faces {
        for (slot, &axis) in face.tangent_axes.iter().enumerate() {
            let h = spacing[axis];
            let (stride, extent) = if slot == 0 {
                (1usize, face.shape[0])
            } else {
                (face.shape[0], face.shape[1])
            };
            for (k, _) in face.nodes.iter().enumerate() {
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
                let (ga, gb) = (face.nodes[ka], face.nodes[kb]);
                let w = face.weights[k] * c * c;
                a.add(ga, ga, w);
                a.add(ga, gb, -w);
                a.add(gb, ga, -w);
                a.add(gb, gb, w);
            }
        }
    }
    let wb = grid.atlas.weights();
    for (b, &gid) in grid.atlas.boundary_nodes.iter().enumerate() {
        a.add(gid, gid, wb[b]); // absorption, beta = 1
    }
    // Pair mass: volume weight plus surface weight on boundary nodes.
    let mut mass = wv.to_vec();
    for (b, &gid) in grid.atlas.boundary_nodes.iter().enumerate() {
        mass[gid] += wb[b];
    }
    (a, mass)
}

pub fn seeded_field(grid: &Grid, seed: u64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wentzell_lab::verify::random_smooth_field(&grid.domain, &mut rng, amplitude)
}
