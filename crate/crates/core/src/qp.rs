//! Concave quadratic maximization over the probability simplex:
//!
//! ```text
//! max  -½ αᵀHα + cᵀα   s.t.  Σα = 1, α ≥ 0
//! ```
//!
//! with `H` symmetric positive semidefinite. This is the dual of the bundle
//! model update. Each step first tries a Newton move on the face spanned by
//! the support and the coordinate with the largest gradient, clipped at the
//! simplex boundary; if that makes no progress it falls back to a pairwise
//! exchange, moving mass from the support coordinate with the smallest
//! gradient to the one with the largest, with an exact line search.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

const SYMMETRY_TOL: f64 = 1e-12;
/// The gradient is updated incrementally; refresh it this often to keep
/// round-off from accumulating.
const REFRESH_EVERY: usize = 256;
/// Relative ridge added to face Hessians in the Newton step.
const NEWTON_RIDGE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("qp dimension mismatch: {0}")]
    Shape(String),
    #[error("qp contains non-finite entries")]
    NonFinite,
    #[error("qp hessian not symmetric (|H_ij - H_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("qp did not converge within {iterations} iterations (KKT residual {residual:e})")]
    NotConverged {
        best: Box<QpSolution>,
        residual: f64,
        iterations: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexQp {
    k: usize,
    /// row-major `k × k`
    hessian: Vec<f64>,
    linear: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub dual_value: f64,
    /// `max_i g_i - Σ_j α_j g_j` at the returned point, `g = c - Hα`.
    pub residual: f64,
    pub iterations: usize,
}

impl SimplexQp {
    pub fn new(hessian: Vec<f64>, linear: Vec<f64>) -> Result<Self, QpError> {
        let k = linear.len();
        if k == 0 {
            return Err(QpError::Shape("empty problem".into()));
        }
        if hessian.len() != k * k {
            return Err(QpError::Shape(format!(
                "hessian has {} entries, expected {}",
                hessian.len(),
                k * k
            )));
        }
        if hessian.iter().chain(&linear).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        for i in 0..k {
            for j in 0..i {
                let d = (hessian[i * k + j] - hessian[j * k + i]).abs();
                if d > SYMMETRY_TOL {
                    return Err(QpError::NotSymmetric(d));
                }
            }
        }
        Ok(SimplexQp {
            k,
            hessian,
            linear,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    fn h(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.k + j]
    }

    /// `-½ αᵀHα + cᵀα`
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.k {
            if alpha[i] == 0.0 {
                continue;
            }
            let row: f64 = (0..self.k).map(|j| self.h(i, j) * alpha[j]).sum();
            quad += alpha[i] * row;
        }
        -0.5 * quad + crate::vector::dot(&self.linear, alpha)
    }

    /// `c - Hα`
    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                let hs: f64 = (0..self.k)
                    .filter(|&j| alpha[j] != 0.0)
                    .map(|j| self.h(i, j) * alpha[j])
                    .sum();
                self.linear[i] - hs
            })
            .collect()
    }

    pub fn kkt_residual(&self, alpha: &[f64]) -> f64 {
        let g = self.gradient(alpha);
        residual_of(&g, alpha)
    }

    /// Best single vertex of the simplex; smallest index wins ties.
    fn best_vertex(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for j in 0..self.k {
            let v = -0.5 * self.h(j, j) + self.linear[j];
            if v > best_val {
                best = j;
                best_val = v;
            }
        }
        best
    }
}

fn residual_of(g: &[f64], alpha: &[f64]) -> f64 {
    let max_g = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max_g - crate::vector::dot(alpha, g)
}

pub fn solve_simplex_qp(qp: &SimplexQp) -> Result<QpSolution, QpError> {
    solve_simplex_qp_from(qp, None)
}

/// Solves from a warm start. `warm` may be shorter than the problem (new
/// coordinates start at zero); it is projected onto the simplex by clipping
/// negatives and renormalizing, falling back to the best vertex.
pub fn solve_simplex_qp_from(qp: &SimplexQp, warm: Option<&[f64]>) -> Result<QpSolution, QpError> {
    let k = qp.k;
    let mut alpha = vec![0.0; k];
    if let Some(warm) = warm {
        if warm.len() > k {
            return Err(QpError::Shape(format!(
                "warm start has {} entries for a {k}-dimensional problem",
                warm.len()
            )));
        }
        for (a, &v) in alpha.iter_mut().zip(warm) {
            *a = if v.is_finite() { v.max(0.0) } else { 0.0 };
        }
    }
    let total: f64 = alpha.iter().sum();
    if total > 0.0 {
        alpha.iter_mut().for_each(|a| *a /= total);
    } else {
        alpha[qp.best_vertex()] = 1.0;
    }

    let mut g = qp.gradient(&alpha);
    let mut iterations = 0;
    let mut since_refresh = 0;
    loop {
        let residual = residual_of(&g, &alpha);
        if residual <= qp.tol {
            // confirm against a fresh gradient before accepting
            g = qp.gradient(&alpha);
            since_refresh = 0;
            let fresh_residual = residual_of(&g, &alpha);
            if fresh_residual <= qp.tol {
                return Ok(QpSolution {
                    dual_value: qp.objective(&alpha),
                    residual: fresh_residual,
                    alpha,
                    iterations,
                });
            }
            continue;
        }
        if iterations >= qp.max_iter {
            let best = QpSolution {
                dual_value: qp.objective(&alpha),
                residual,
                alpha,
                iterations,
            };
            return Err(QpError::NotConverged {
                best: Box::new(best),
                residual,
                iterations,
            });
        }

        let up = first_max(&g, |_| true);
        let moved = newton_step(qp, &mut alpha, &mut g, up) || pairwise_step(qp, &mut alpha, &mut g, up);
        if !moved {
            // numerically stationary: the residual is pure round-off
            let fresh = qp.gradient(&alpha);
            let fresh_residual = residual_of(&fresh, &alpha);
            return Ok(QpSolution {
                dual_value: qp.objective(&alpha),
                residual: fresh_residual,
                alpha,
                iterations,
            });
        }
        iterations += 1;
        since_refresh += 1;
        if since_refresh == REFRESH_EVERY {
            g = qp.gradient(&alpha);
            since_refresh = 0;
        }
    }
}

/// Moves along the direction that maximizes the objective on the face
/// spanned by the current support plus `up`, clipped to stay feasible.
/// Returns false when the face step makes no progress.
fn newton_step(qp: &SimplexQp, alpha: &mut [f64], g: &mut [f64], up: usize) -> bool {
    let mut face: Vec<usize> = (0..qp.k).filter(|&j| alpha[j] > 0.0).collect();
    if !face.contains(&up) {
        face.push(up);
    }
    let m = face.len();
    if m < 2 {
        return false;
    }
    // [H_FF 1; 1ᵀ 0] [d; μ] = [g_F; 0], lightly regularized so faces on
    // which H is singular still yield an ascent direction
    let scale = face.iter().map(|&i| qp.h(i, i).abs()).fold(1.0, f64::max);
    let ridge = NEWTON_RIDGE * scale;
    let kkt = DMatrix::from_fn(m + 1, m + 1, |r, c| match (r < m, c < m) {
        (true, true) => qp.h(face[r], face[c]) + if r == c { ridge } else { 0.0 },
        (true, false) | (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let rhs = DVector::from_fn(m + 1, |r, _| if r < m { g[face[r]] } else { 0.0 });
    let Some(solution) = kkt.lu().solve(&rhs) else {
        return false;
    };
    let d: Vec<f64> = solution.iter().take(m).copied().collect();
    if d.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let slope: f64 = face.iter().zip(&d).map(|(&i, di)| g[i] * di).sum();
    if slope <= 0.0 {
        return false;
    }
    let mut curvature = 0.0;
    for (a, &i) in face.iter().enumerate() {
        for (b, &j) in face.iter().enumerate() {
            curvature += d[a] * qp.h(i, j) * d[b];
        }
    }
    let mut step = if curvature > 0.0 {
        slope / curvature
    } else {
        f64::INFINITY
    };
    let mut blocking = None;
    for (a, &i) in face.iter().enumerate() {
        if d[a] < 0.0 {
            let limit = alpha[i] / -d[a];
            if limit < step {
                step = limit;
                blocking = Some(i);
            }
        }
    }
    if !(step.is_finite() && step > 0.0) {
        return false;
    }
    let old: Vec<f64> = face.iter().map(|&i| alpha[i]).collect();
    for (a, &i) in face.iter().enumerate() {
        alpha[i] = (alpha[i] + step * d[a]).max(0.0);
    }
    if let Some(i) = blocking {
        alpha[i] = 0.0;
    }
    renormalize(alpha);
    let delta: Vec<(usize, f64)> = face
        .iter()
        .zip(&old)
        .map(|(&i, &o)| (i, alpha[i] - o))
        .filter(|&(_, dv)| dv != 0.0)
        .collect();
    if delta.is_empty() {
        return false;
    }
    for (r, gr) in g.iter_mut().enumerate() {
        *gr -= delta.iter().map(|&(i, dv)| qp.h(r, i) * dv).sum::<f64>();
    }
    true
}

/// Moves mass from the worst support coordinate to `up` with an exact line
/// search along that edge.
fn pairwise_step(qp: &SimplexQp, alpha: &mut [f64], g: &mut [f64], up: usize) -> bool {
    let down = first_min(g, |j| alpha[j] > 0.0);
    let gain = g[up] - g[down];
    if up == down || gain <= 0.0 {
        return false;
    }
    let curvature = qp.h(up, up) + qp.h(down, down) - 2.0 * qp.h(up, down);
    let step = if curvature > 0.0 {
        (gain / curvature).min(alpha[down])
    } else {
        alpha[down]
    };
    if step == alpha[down] {
        alpha[up] += alpha[down];
        alpha[down] = 0.0;
    } else {
        alpha[up] += step;
        alpha[down] -= step;
    }
    for (i, gi) in g.iter_mut().enumerate() {
        *gi -= step * (qp.h(i, up) - qp.h(i, down));
    }
    true
}

fn renormalize(alpha: &mut [f64]) {
    let total: f64 = alpha.iter().sum();
    if total > 0.0 && total != 1.0 {
        alpha.iter_mut().for_each(|a| *a /= total);
    }
}

fn first_max(values: &[f64], keep: impl Fn(usize) -> bool) -> usize {
    let mut best = usize::MAX;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if keep(i) && (best == usize::MAX || v > best_val) {
            best = i;
            best_val = v;
        }
    }
    best
}

fn first_min(values: &[f64], keep: impl Fn(usize) -> bool) -> usize {
    let mut best = usize::MAX;
    let mut best_val = f64::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if keep(i) && (best == usize::MAX || v < best_val) {
            best = i;
            best_val = v;
        }
    }
    best
}
