use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geometry::{symmetrize, AgentId, Covariance};
use crate::scalar::Scalar;

/// Golden-section stopping width on ω.
pub const OMEGA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FusedState<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: Covariance<T>,
    pub agents: BTreeSet<AgentId>,
    /// A member covariance needed a `+εI` regularization to invert.
    pub regularized: bool,
}

/// Result of fusing one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CiPair<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: Covariance<T>,
    /// Weight on the first member's information matrix.
    pub omega: T,
    pub regularized: bool,
}

/// Inverts a covariance, adding `εI` once if Cholesky fails.
pub(crate) fn invert_regularized<T: Scalar>(p: &DMatrix<T>) -> Option<(DMatrix<T>, bool)> {
    if let Some(c) = p.clone().cholesky() {
        return Some((c.inverse(), false));
    }
    let n = p.nrows();
    let reg = p + DMatrix::identity(n, n) * T::tolerance();
    reg.cholesky().map(|c| (c.inverse(), true))
}

fn spd_inverse<T: Scalar>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// `trace((ω A + (1-ω) B)⁻¹)` for information matrices `A`, `B`.
pub fn ci_trace<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, omega: T) -> Option<T> {
    let info = a * omega + b * (T::one() - omega);
    spd_inverse(&info).map(|p| p.trace())
}

/// `ω ↦ trace((ω A + (1-ω) B)⁻¹)` after simultaneous diagonalization.
///
/// With `B = L Lᵀ` and `L⁻¹ A L⁻ᵀ = U Λ Uᵀ`, the trace is
/// `Σ wᵢ / (ω λᵢ + 1 - ω)` where `wᵢ` is the squared norm of column `i` of `L⁻ᵀ U`.
struct TraceProfile<T: Scalar> {
    lambda: Vec<T>,
    weight: Vec<T>,
}

impl<T: Scalar> TraceProfile<T> {
    fn new(a: &DMatrix<T>, b: &DMatrix<T>) -> Option<Self> {
        let l = b.clone().cholesky()?.l();
        let n = l.nrows();
        let l_inv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
        let c = symmetrize(&(&l_inv * a * l_inv.transpose()));
        let eig = c.symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !(*v > T::zero())) {
            return None;
        }
        let m = l_inv.transpose() * &eig.eigenvectors;
        Some(Self {
            lambda: eig.eigenvalues.iter().copied().collect(),
            weight: m.column_iter().map(|c| c.norm_squared()).collect(),
        })
    }

    fn eval(&self, omega: T) -> T {
        self.lambda
            .iter()
            .zip(&self.weight)
            .map(|(l, w)| *w / (omega * *l + T::one() - omega))
            .fold(T::zero(), |acc, x| acc + x)
    }
}

/// Minimizes a unimodal function on `[0, 1]` by golden-section search, then
/// keeps the better of the interior optimum and the two endpoints.
pub fn golden_section<T: Scalar, F: Fn(T) -> T>(f: F, tol: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = (lo + hi) * T::lit(0.5);
    let mut best = (mid, f(mid));
    for x in [T::zero(), T::one()] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best.0
}

/// Covariance intersection of two estimates with trace-optimal weight.
pub fn ci_pair<T: Scalar>(
    x1: &DVector<T>,
    p1: &Covariance<T>,
    x2: &DVector<T>,
    p2: &Covariance<T>,
) -> Result<CiPair<T>, FusionError> {
    let n = x1.len();
    if x2.len() != n || p1.dim() != n || p2.dim() != n {
        return Err(FusionError::Dimension { expected: n, found: x2.len().max(p2.dim()) });
    }
    if x1 == x2 && p1 == p2 {
        return Ok(CiPair { mean: x1.clone(), covariance: p1.clone(), omega: T::lit(0.5), regularized: false });
    }
    let (a, ra) = invert_regularized(p1.matrix()).ok_or(FusionError::Singular)?;
    let (b, rb) = invert_regularized(p2.matrix()).ok_or(FusionError::Singular)?;
    let big = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    let omega = match TraceProfile::new(&a, &b) {
        Some(profile) => golden_section(|w| profile.eval(w), T::lit(OMEGA_TOLERANCE)),
        None => golden_section(|w| ci_trace(&a, &b, w).unwrap_or(big), T::lit(OMEGA_TOLERANCE)),
    };
    let info = &a * omega + &b * (T::one() - omega);
    let pf = spd_inverse(&info).ok_or(FusionError::Singular)?;
    let mean = &pf * (&a * x1 * omega + &b * x2 * (T::one() - omega));
    let (covariance, _) = Covariance::repaired(&pf);
    Ok(CiPair { mean, covariance, omega, regularized: ra || rb })
}

/// Folds covariance intersection left over `members` in order.
pub fn fuse_ci<T: Scalar>(members: &[(DVector<T>, Covariance<T>)]) -> Result<FusedState<T>, FusionError> {
    let (first, rest) = members.split_first().ok_or(FusionError::Empty)?;
    let mut mean = first.0.clone();
    let mut cov = first.1.clone();
    let mut regularized = false;
    for (x, p) in rest {
        let r = ci_pair(&mean, &cov, x, p)?;
        mean = r.mean;
        cov = r.covariance;
        regularized |= r.regularized;
    }
    Ok(FusedState { mean, covariance: cov, agents: BTreeSet::new(), regularized })
}
