//! Solvers for Davenport's eigenproblem `Kq = λ_m q`.
//!
//! * [`q_method`]: full Jacobi eigendecomposition of `K`; the reference oracle.
//! * [`quest_classic`]: Newton iteration on the scalar characteristic equation,
//!   one adjugate inverse per step.
//! * [`first_order`]: the analytic first-order perturbation estimate. The
//!   zeroth-order quaternion `q₀` comes from the resolvent at `λ₀`, and its
//!   Rayleigh quotient `λ₁ = q₀ᵀKq₀` is the refined eigenvalue.
//! * [`recursive_solve`]: iterates the Rayleigh quotient while carrying the
//!   resolvent forward with a first-order Neumann update instead of
//!   re-inverting.
//!
//! All solvers return the quaternion representative with nonnegative scalar
//! part (see [`Quaternion::canonical`]).

use serde::{Deserialize, Serialize};

use crate::davenport::DavenportSystem;
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat4};
use crate::quat::Quaternion;

pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Off-diagonal magnitude, relative to `‖K‖_F`, at which Jacobi stops.
pub const JACOBI_REL_TOL: f64 = 1e-14;
/// Relative scale of `|det[(λ+σ)I − ρ]|` below which the resolvent is refused.
pub const RESOLVENT_DET_REL: f64 = 1e-12;
/// `|Δλ|·‖D‖_F` at or above which the recursive solver re-inverts directly.
pub const NEUMANN_REFRESH: f64 = 0.5;
pub const RECURSIVE_DEFAULT_MAX_ITER: usize = 8;
/// Consecutive decreasing steps tolerated before declaring divergence.
const DIVERGENCE_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QMethod,
    Quest,
    FirstOrder,
    Recursive,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::QMethod, Method::Quest, Method::FirstOrder, Method::Recursive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::QMethod => "q_method",
            Method::Quest => "quest",
            Method::FirstOrder => "first_order",
            Method::Recursive => "recursive",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub q: Quaternion,
    pub lambda: f64,
    pub iterations: usize,
    /// `|Kq − λq|₂`.
    pub residual: f64,
    /// `λ₀ − λ`.
    pub taste: f64,
}

impl SolveReport {
    fn new(method: Method, sys: &DavenportSystem, q: Quaternion, lambda: f64, iterations: usize) -> Self {
        let q = q.canonical();
        SolveReport {
            method,
            q,
            lambda,
            iterations,
            residual: sys.eigen_residual(&q, lambda),
            taste: sys.lambda0 - lambda,
        }
    }
}

/// Eigendecomposition of a symmetric 4×4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen4 {
    pub values: [f64; 4],
    /// Eigenvectors as columns, `vectors[(i, j)]` is component `i` of vector `j`.
    pub vectors: Mat4,
    pub sweeps: usize,
}

impl SymmetricEigen4 {
    /// Index of the algebraically largest eigenvalue.
    pub fn argmax(&self) -> usize {
        (0..4).fold(0, |best, i| if self.values[i] > self.values[best] { i } else { best })
    }

    pub fn vector(&self, j: usize) -> [f64; 4] {
        [self.vectors[(0, j)], self.vectors[(1, j)], self.vectors[(2, j)], self.vectors[(3, j)]]
    }
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric 4×4 matrix.
///
/// Sweeps over all `(p, r)` pairs, annihilating each off-diagonal entry with a
/// plane rotation, until every off-diagonal magnitude is at most
/// `JACOBI_REL_TOL·‖A‖_F`.
pub fn jacobi_eigen4(a: &Mat4) -> Result<SymmetricEigen4> {
    let mut m = *a;
    let mut v = Mat4::identity();
    let threshold = JACOBI_REL_TOL * a.frobenius_norm();

    let off_max = |m: &Mat4| {
        let mut worst = 0.0_f64;
        for p in 0..4 {
            for r in (p + 1)..4 {
                worst = worst.max(m[(p, r)].abs());
            }
        }
        worst
    };

    let mut sweeps = 0;
    while off_max(&m) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { method: "jacobi", iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..4 {
            for r in (p + 1)..4 {
                let apr = m[(p, r)];
                if apr.abs() <= threshold {
                    continue;
                }
                // tan of the rotation angle, taking the smaller root for stability
                let theta = (m[(r, r)] - m[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..4 {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..4 {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;

                for k in 0..4 {
                    let vkp = v[(k, p)];
                    let vkr = v[(k, r)];
                    v[(k, p)] = c * vkp - s * vkr;
                    v[(k, r)] = s * vkp + c * vkr;
                }
            }
        }
    }

    Ok(SymmetricEigen4 { values: [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(3, 3)]], vectors: v, sweeps })
}

/// Davenport's q-Method: the eigenpair of the largest eigenvalue of `K`.
pub fn q_method(sys: &DavenportSystem) -> Result<SolveReport> {
    let eig = jacobi_eigen4(&sys.k)?;
    let j = eig.argmax();
    let q = Quaternion::from_array(eig.vector(j))
        .normalized()
        .ok_or(Error::NoConvergence { method: "q_method", iterations: eig.sweeps })?;
    Ok(SolveReport::new(Method::QMethod, sys, q, eig.values[j], eig.sweeps))
}

/// The resolvent `D(λ) = [(λ+σ)I − ρ]⁻¹` together with the `λ` it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolvent {
    pub d: Mat3,
    pub lambda_at: f64,
}

impl Resolvent {
    /// `q = (1 + |Dz|²)^(-1/2)·[Dz; 1]`.
    pub fn quaternion(&self, sys: &DavenportSystem) -> Quaternion {
        Quaternion::from_rodrigues(&(self.d * sys.z))
    }
}

/// Exact resolvent by the adjugate formula.
pub fn resolvent_direct(sys: &DavenportSystem, lambda: f64) -> Result<Resolvent> {
    let m = sys.shifted(lambda);
    let det = m.determinant();
    let floor = RESOLVENT_DET_REL * sys.lambda0.powi(3).max(1.0);
    if !(det.abs() > floor) {
        return Err(Error::NearSingular {
            context: "det[(λ+σ)I − ρ] vanishes (rotation near 180°)",
            value: det,
        });
    }
    Ok(Resolvent { d: m.adjugate() * (1.0 / det), lambda_at: lambda })
}

/// First-order Neumann step `D(λ + Δ) ≈ D(λ) − Δ·D(λ)²`, good to `O(Δ²)`.
///
/// Requires `|Δ|·‖D‖_F < 1`; otherwise the series need not converge and the
/// caller should invert directly.
pub fn neumann_inverse_update(prev: &Resolvent, dlambda: f64) -> Result<Resolvent> {
    if dlambda == 0.0 {
        return Ok(*prev);
    }
    let contraction = dlambda.abs() * prev.d.frobenius_norm();
    if !(contraction < 1.0) {
        return Err(Error::ConvergenceViolation { contraction });
    }
    Ok(Resolvent { d: prev.d - prev.d * prev.d * dlambda, lambda_at: prev.lambda_at + dlambda })
}

/// Residual-form update `D(λ) ≈ D̃·(2I − M(λ)·D̃)` with `M(λ) = (λ+σ)I − ρ`.
///
/// When `D̃` is the exact inverse at `λ − Δ` this is the same matrix as
/// [`neumann_inverse_update`]. When it is not, the residual `I − M·D̃` left by
/// earlier steps enters the product and is squared instead of carried along:
/// the new residual is `(I − M(λ)·D̃)²`. No inversion is performed.
pub fn residual_inverse_update(sys: &DavenportSystem, prev: &Resolvent, lambda: f64) -> Result<Resolvent> {
    let residual = Mat3::IDENTITY - sys.shifted(lambda) * prev.d;
    let contraction = residual.frobenius_norm();
    if !(contraction < 1.0) {
        return Err(Error::ConvergenceViolation { contraction });
    }
    Ok(Resolvent { d: prev.d + prev.d * residual, lambda_at: lambda })
}

/// How the recursive solver carries the resolvent from `λ_{a−1}` to `λ_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventUpdate {
    /// `D − Δ·D²` applied to the carried `D`. The `O(Δ₁²)` error of the first
    /// step stays in `D` for good and biases the fixed point.
    Literal,
    /// [`residual_inverse_update`]: identical to `Literal` for an exact `D`,
    /// and self-correcting otherwise.
    #[default]
    ResidualCorrected,
}

/// Classic QUEST: Newton's method on
/// `f(λ) = zᵀ[ρ − (σ+λ)I]⁻¹z + λ − σ = λ − σ − zᵀD(λ)z`, started at `λ₀`,
/// with `f′(λ) = 1 + zᵀD(λ)²z`.
pub fn quest_classic(sys: &DavenportSystem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(Error::ConfigError(format!("tol must be positive, got {tol}")));
    }
    let mut lambda = sys.lambda0;
    let mut lower_bound = f64::NEG_INFINITY;
    for iter in 1..=max_iter {
        let res = resolvent_direct(sys, lambda)?;
        if iter == 1 {
            lower_bound = sys.rayleigh(&res.quaternion(sys));
        }
        let dz = res.d * sys.z;
        let f = lambda - sys.sigma - sys.z.dot(&dz);
        let fprime = 1.0 + dz.norm_squared();
        let step = f / fprime;
        lambda -= step;
        if step.abs() < tol {
            // Newton can land on a smaller root of f near 180°; λ_m is never
            // below the Rayleigh quotient of the zeroth-order quaternion.
            if lambda < lower_bound - bound_slack(sys, tol) {
                return Err(Error::NearSingular { context: "quest root below the Rayleigh bound", value: lambda });
            }
            let q = resolvent_direct(sys, lambda)?.quaternion(sys);
            return Ok(SolveReport::new(Method::Quest, sys, q, lambda, iter));
        }
    }
    Err(Error::NoConvergence { method: "quest", iterations: max_iter })
}

/// The secular function of QUEST and its derivative at `λ`, exposed for
/// verification against finite differences.
pub fn quest_secular(sys: &DavenportSystem, lambda: f64) -> Result<(f64, f64)> {
    let dz = resolvent_direct(sys, lambda)?.d * sys.z;
    Ok((lambda - sys.sigma - sys.z.dot(&dz), 1.0 + dz.norm_squared()))
}

/// First-order perturbation estimate.
///
/// `q₀` has Rodrigues parameters `D(λ₀)z`; `λ₁ = q₀ᵀKq₀`; the returned
/// quaternion `q₁` has Rodrigues parameters `D(λ₁)z`. Two adjugate inverses,
/// no iteration.
pub fn first_order(sys: &DavenportSystem) -> Result<SolveReport> {
    let q0 = resolvent_direct(sys, sys.lambda0)?.quaternion(sys);
    let lambda1 = sys.rayleigh(&q0);
    let q1 = resolvent_direct(sys, lambda1)?.quaternion(sys);
    Ok(SolveReport::new(Method::FirstOrder, sys, q1, lambda1, 1))
}

/// One step of the recursive iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursiveStep {
    /// Step index `a ≥ 1`.
    pub index: usize,
    /// `λ_a = q_{a−1}ᵀ K q_{a−1}`.
    pub lambda: f64,
    /// `q_a`, built from the carried resolvent at `λ_a`.
    pub q: Quaternion,
    /// Whether the resolvent was refreshed by direct inversion on this step.
    pub refreshed: bool,
}

/// The recursive iteration as an unbounded iterator over [`RecursiveStep`]s.
///
/// Only the initial resolvent `D(λ₀)` is inverted; each step then applies
/// 1. `λ_a = q_{a−1}ᵀ K q_{a−1}`,
/// 2. `D(λ_a) = D(λ_{a−1}) − (λ_a − λ_{a−1})·D(λ_{a−1})²`,
/// 3. `q_a = (1 + zᵀDᵀDz)^(-1/2)·[Dz; 1]`.
///
/// Step 2 is taken in the form selected by [`ResolventUpdate`]; the default
/// folds the leftover residual of the carried `D` into the same product.
///
/// If `|λ_a − λ_{a−1}|·‖D‖_F ≥ NEUMANN_REFRESH` the resolvent is inverted
/// directly instead; the refresh can itself fail near a singular bracket,
/// which is why items are `Result`s.
#[derive(Debug, Clone)]
pub struct RecursiveIter<'a> {
    sys: &'a DavenportSystem,
    resolvent: Resolvent,
    q: Quaternion,
    index: usize,
    failed: bool,
    rule: ResolventUpdate,
}

impl<'a> RecursiveIter<'a> {
    pub fn new(sys: &'a DavenportSystem) -> Result<Self> {
        Self::with_rule(sys, ResolventUpdate::default())
    }

    pub fn with_rule(sys: &'a DavenportSystem, rule: ResolventUpdate) -> Result<Self> {
        let resolvent = resolvent_direct(sys, sys.lambda0)?;
        let q = resolvent.quaternion(sys);
        Ok(RecursiveIter { sys, resolvent, q, index: 0, failed: false, rule })
    }

    /// The zeroth-order quaternion before any step, or the latest `q_a`.
    pub fn current(&self) -> Quaternion {
        self.q
    }

    pub fn resolvent(&self) -> &Resolvent {
        &self.resolvent
    }
}

impl Iterator for RecursiveIter<'_> {
    type Item = Result<RecursiveStep>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let lambda = self.sys.rayleigh(&self.q);
        let dlambda = lambda - self.resolvent.lambda_at;
        let refreshed = dlambda.abs() * self.resolvent.d.frobenius_norm() >= NEUMANN_REFRESH;
        // a shift below the precision of M(λ) leaves M unchanged, and forming
        // the residual would only inject rounding amplified by cond(M)
        let negligible = dlambda.abs() <= 4.0 * f64::EPSILON * self.sys.shifted(lambda).frobenius_norm();
        let next = match (refreshed, self.rule) {
            (false, _) if negligible => Ok(self.resolvent),
            (true, _) => resolvent_direct(self.sys, lambda),
            (false, ResolventUpdate::Literal) => neumann_inverse_update(&self.resolvent, dlambda),
            (false, ResolventUpdate::ResidualCorrected) => {
                residual_inverse_update(self.sys, &self.resolvent, lambda)
            }
        };
        match next {
            Ok(r) => self.resolvent = Resolvent { d: r.d, lambda_at: lambda },
            Err(e) => {
                self.failed = true;
                return Some(Err(e));
            }
        }
        self.q = self.resolvent.quaternion(self.sys);
        self.index += 1;
        Some(Ok(RecursiveStep { index: self.index, lambda, q: self.q, refreshed }))
    }
}

fn bound_slack(sys: &DavenportSystem, tol: f64) -> f64 {
    10.0 * tol.max(1e-13 * sys.lambda0)
}

/// Default stopping tolerance for the recursive solver, `1e-13·λ₀`.
pub fn recursive_default_tol(sys: &DavenportSystem) -> f64 {
    1e-13 * sys.lambda0
}

/// Runs [`RecursiveIter`] until `|λ_a − λ_{a−1}| < tol`.
///
/// The sequence is expected to be nondecreasing (each `λ_a` is a Rayleigh
/// quotient of an improving quaternion). Three consecutive drops larger than
/// `10·tol` are reported as [`Error::DivergenceDetected`], as is a sequence
/// that settles more than `10·tol` below an earlier iterate: every `λ_a` is a
/// lower bound on `λ_m`, so such a limit cannot be the optimum.
pub fn recursive_solve(sys: &DavenportSystem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    recursive_solve_with(sys, tol, max_iter, ResolventUpdate::default())
}

pub fn recursive_solve_with(
    sys: &DavenportSystem,
    tol: f64,
    max_iter: usize,
    rule: ResolventUpdate,
) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(Error::ConfigError(format!("tol must be positive, got {tol}")));
    }
    let mut iter = RecursiveIter::with_rule(sys, rule)?;
    let mut prev = sys.lambda0;
    let mut drops = 0;
    let mut highest = f64::NEG_INFINITY;
    for step in iter.by_ref().take(max_iter) {
        let step = step?;
        let delta = step.lambda - prev;
        highest = highest.max(step.lambda);
        if delta.abs() < tol {
            if step.lambda < highest - bound_slack(sys, tol) {
                return Err(Error::DivergenceDetected { iteration: step.index });
            }
            return Ok(SolveReport::new(Method::Recursive, sys, step.q, step.lambda, step.index));
        }
        // the first step measures λ₁ − λ₀, which is negative for any noisy set
        if step.index > 1 && delta < -10.0 * tol {
            drops += 1;
            if drops >= DIVERGENCE_RUN {
                return Err(Error::DivergenceDetected { iteration: step.index });
            }
        } else {
            drops = 0;
        }
        prev = step.lambda;
    }
    Err(Error::NoConvergence { method: "recursive", iterations: max_iter })
}

/// Dispatches to a solver with the given iteration controls. `q_method` and
/// `first_order` ignore `tol` and `max_iter`.
pub fn solve(sys: &DavenportSystem, method: Method, tol: f64, max_iter: usize) -> Result<SolveReport> {
    match method {
        Method::QMethod => q_method(sys),
        Method::Quest => quest_classic(sys, tol, max_iter),
        Method::FirstOrder => first_order(sys),
        Method::Recursive => recursive_solve(sys, tol, max_iter),
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::davenport::tests::perfect_pair;
    use crate::davenport::{build_system, Measurement, MeasurementSet};
    use crate::linalg::Vec3;

    /// Coefficients of `det(K − λI) = λ⁴ + c₂λ² + c₁λ + c₀` for traceless
    /// symmetric `K`, by Faddeev–LeVerrier on the 4×4 matrix.
    fn char_poly(k: &Mat4) -> [f64; 5] {
        let mul = |a: &Mat4, b: &Mat4| {
            let mut out = Mat4::ZERO;
            for i in 0..4 {
                for j in 0..4 {
                    out[(i, j)] = (0..4).map(|l| a[(i, l)] * b[(l, j)]).sum();
                }
            }
            out
        };
        // coefficients of λ⁴, λ³, ..., λ⁰ of det(λI − K)
        let mut c = [1.0, 0.0, 0.0, 0.0, 0.0];
        let mut m = Mat4::ZERO;
        for n in 1..=4 {
            let mut next = mul(k, &m);
            for i in 0..4 {
                next[(i, i)] += c[n - 1];
            }
            m = next;
            c[n] = -mul(k, &m).trace() / n as f64;
        }
        c
    }

    fn largest_root_by_bisection(c: &[f64; 5], bound: f64) -> f64 {
        let p = |x: f64| c.iter().fold(0.0, |acc, ci| acc * x + ci);
        // scan down from the bound for the first sign change
        let n = 20_000;
        let mut hi = bound;
        let mut lo = bound;
        for i in 1..=n {
            let x = bound - 2.0 * bound * i as f64 / n as f64;
            if p(x).signum() != p(hi).signum() || p(x) == 0.0 {
                lo = x;
                break;
            }
            hi = x;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid).signum() == p(hi).signum() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    fn random_quat(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = Quaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = q.norm();
            if n > 0.1 && n <= 1.0 {
                return q.normalized().unwrap();
            }
        }
    }

    /// Noisy set with `n` observations; the truth attitude is kept away from
    /// 180° so Rodrigues recovery stays well conditioned.
    fn noisy_system(rng: &mut impl Rng, n: usize, noise: f64) -> (DavenportSystem, Quaternion) {
        let q = loop {
            let q = random_quat(rng).canonical();
            if q.s > 0.2 {
                break q;
            }
        };
        let a = q.attitude_matrix().unwrap();
        let entries = (0..n)
            .map(|_| {
                let r = random_unit(rng);
                let b = (a * r + random_unit(rng) * noise).normalized().unwrap();
                Measurement::new(b, r, rng.gen_range(0.5..2.0))
            })
            .collect();
        (build_system(&MeasurementSet::new(entries).unwrap()), q)
    }

    fn perfect_system(q: &Quaternion, rs: &[Vec3]) -> DavenportSystem {
        let a = q.attitude_matrix().unwrap();
        let entries = rs.iter().map(|r| Measurement::new((a * *r).normalized().unwrap(), *r, 1.0)).collect();
        build_system(&MeasurementSet::new(entries).unwrap())
    }

    #[test]
    fn jacobi_on_diagonal_k() {
        let sys = build_system(&perfect_pair());
        let rep = q_method(&sys).unwrap();
        assert_eq!(rep.lambda, 2.0);
        assert_eq!(rep.q, Quaternion::IDENTITY);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.taste, 0.0);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let mut k = Mat4::ZERO;
            for i in 0..4 {
                for j in i..4 {
                    let x = rng.gen_range(-3.0..3.0);
                    k[(i, j)] = x;
                    k[(j, i)] = x;
                }
            }
            let tr = k.trace() / 4.0;
            for i in 0..4 {
                k[(i, i)] -= tr;
            }
            let eig = jacobi_eigen4(&k).unwrap();
            assert!(eig.sweeps <= JACOBI_MAX_SWEEPS);
            for j in 0..4 {
                let v = eig.vector(j);
                let kv = k.mul_vec(&v);
                let res: f64 = (0..4).map(|i| (kv[i] - eig.values[j] * v[i]).powi(2)).sum::<f64>().sqrt();
                assert!(res <= 1e-12 * (1.0 + eig.values[j].abs()), "residual {res}");
            }
            let vtv = eig.vectors.transpose();
            for i in 0..4 {
                for j in 0..4 {
                    let dot: f64 = (0..4).map(|l| vtv[(i, l)] * eig.vectors[(l, j)]).sum();
                    assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn q_method_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (sys, _) = noisy_system(&mut rng, 3, 0.05);
            let rep = q_method(&sys).unwrap();
            let c = char_poly(&sys.k);
            let root = largest_root_by_bisection(&c, 1.01 * sys.lambda0);
            assert!((rep.lambda - root).abs() <= 1e-10, "{} vs {}", rep.lambda, root);
            assert!(rep.residual <= 1e-10 * sys.lambda0);
            assert!(rep.lambda <= sys.lambda0 + 1e-9);
        }
    }

    #[test]
    fn q_method_recovers_perfect_attitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            let sys = perfect_system(&q, &[random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng)]);
            let rep = q_method(&sys).unwrap();
            assert!(rep.q.sign_blind_distance(&q) <= 1e-10);
            assert!((rep.lambda - sys.lambda0).abs() <= 1e-12);
        }
    }

    #[test]
    fn resolvent_examples() {
        let sys = build_system(&perfect_pair());
        let r = resolvent_direct(&sys, 2.0).unwrap();
        assert_eq!(r.d, Mat3::diag([0.5, 0.5, 0.25]));
        assert_eq!(r.lambda_at, 2.0);

        let zero = DavenportSystem::from_profile(Mat3::ZERO, 1.0);
        assert_eq!(resolvent_direct(&zero, 1.0).unwrap().d, Mat3::IDENTITY);
        assert!(matches!(resolvent_direct(&zero, 0.0), Err(Error::NearSingular { .. })));
    }

    #[test]
    fn resolvent_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let (sys, _) = noisy_system(&mut rng, 4, 0.02);
            let lambda = sys.lambda0 * rng.gen_range(0.95..1.05);
            let r = resolvent_direct(&sys, lambda).unwrap();
            let e = (r.d * sys.shifted(lambda) - Mat3::IDENTITY).max_abs();
            assert!(e <= 1e-12, "{e}");
        }
    }

    #[test]
    fn neumann_zero_step_is_identity() {
        let r = Resolvent { d: Mat3::diag([0.5, 0.25, 2.0]), lambda_at: 1.0 };
        assert_eq!(neumann_inverse_update(&r, 0.0).unwrap(), r);
    }

    #[test]
    fn neumann_scalar_analogue() {
        let r = Resolvent { d: Mat3::diag([0.5, 0.5, 0.5]), lambda_at: 0.0 };
        let u = neumann_inverse_update(&r, 0.01).unwrap();
        assert!((u.d[(0, 0)] - 0.4975).abs() < 1e-15);
        assert_eq!(u.lambda_at, 0.01);
        let exact = 1.0 / 2.01;
        let err = (u.d[(0, 0)] - exact).abs();
        assert!((err - 1.2438e-5).abs() < 1e-8, "{err}");
        assert!(err <= 0.01 * 0.01 * 0.125 * 1.01);
    }

    #[test]
    fn neumann_refuses_outside_convergence_region() {
        let r = Resolvent { d: Mat3::IDENTITY, lambda_at: 0.0 };
        assert!(matches!(neumann_inverse_update(&r, 0.6), Err(Error::ConvergenceViolation { .. })));
        assert!(neumann_inverse_update(&r, 0.5).is_ok());
    }

    #[test]
    fn neumann_error_against_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dl = 1e-3;
        for _ in 0..200 {
            let (sys, _) = noisy_system(&mut rng, 3, 0.05);
            let base = resolvent_direct(&sys, sys.lambda0).unwrap();
            let upd = neumann_inverse_update(&base, dl).unwrap();
            let exact = resolvent_direct(&sys, sys.lambda0 + dl).unwrap();
            let err = (upd.d - exact.d).frobenius_norm();
            assert!(err <= 10.0 * dl * dl * base.d.frobenius_norm().powi(3), "{err}");
        }
    }

    #[test]
    fn residual_update_matches_neumann_for_exact_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let (sys, _) = noisy_system(&mut rng, 3, 0.05);
            let base = resolvent_direct(&sys, sys.lambda0).unwrap();
            let dl = rng.gen_range(-1e-2..1e-2);
            let neumann = neumann_inverse_update(&base, dl).unwrap();
            let residual = residual_inverse_update(&sys, &base, sys.lambda0 + dl).unwrap();
            let scale = base.d.frobenius_norm();
            // the two differ only by the rounding residual of the direct inverse
            assert!((neumann.d - residual.d).frobenius_norm() <= 1e-13 * scale * scale.max(1.0));
        }
    }

    #[test]
    fn residual_update_squares_the_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (sys, _) = noisy_system(&mut rng, 3, 0.05);
        let exact = resolvent_direct(&sys, sys.lambda0).unwrap();
        let perturbed = Resolvent { d: exact.d * (1.0 + 1e-4), lambda_at: sys.lambda0 };
        let before = (Mat3::IDENTITY - sys.shifted(sys.lambda0) * perturbed.d).frobenius_norm();
        let fixed = residual_inverse_update(&sys, &perturbed, sys.lambda0).unwrap();
        let after = (Mat3::IDENTITY - sys.shifted(sys.lambda0) * fixed.d).frobenius_norm();
        assert!(before > 1e-5);
        assert!(after <= 2.0 * before * before, "{before} -> {after}");
        let stale = Resolvent { d: Mat3::IDENTITY * 10.0, lambda_at: 0.0 };
        assert!(matches!(
            residual_inverse_update(&sys, &stale, sys.lambda0),
            Err(Error::ConvergenceViolation { .. })
        ));
    }

    #[test]
    fn literal_rule_settles_on_a_biased_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst_literal = 0.0_f64;
        let mut worst_default = 0.0_f64;
        for _ in 0..300 {
            let (sys, _) = noisy_system(&mut rng, 2, 0.02);
            let oracle = q_method(&sys).unwrap().lambda;
            let tol = recursive_default_tol(&sys);
            let settled = RecursiveIter::with_rule(&sys, ResolventUpdate::Literal)
                .unwrap()
                .take(30)
                .last()
                .unwrap()
                .unwrap()
                .lambda;
            let default = recursive_solve(&sys, tol, 8).unwrap();
            assert!(settled <= oracle + 1e-12);
            worst_literal = worst_literal.max(oracle - settled);
            // settling below an earlier iterate is reported rather than returned
            if let Ok(rep) = recursive_solve_with(&sys, tol, 30, ResolventUpdate::Literal) {
                assert!(oracle - rep.lambda <= 1e-11, "{}", oracle - rep.lambda);
            }
            worst_default = worst_default.max((oracle - default.lambda).abs());
        }
        assert!(worst_default <= 1e-12);
        assert!(worst_literal > 1e-11, "{worst_literal}");
        assert!(worst_literal < 1e-5, "{worst_literal}");
    }

    #[test]
    fn quest_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (sys, _) = noisy_system(&mut rng, 3, 0.05);
            let lam = sys.lambda0 * rng.gen_range(0.9..1.0);
            let h = 1e-6;
            let (_, fp) = quest_secular(&sys, lam).unwrap();
            let (fa, _) = quest_secular(&sys, lam + h).unwrap();
            let (fb, _) = quest_secular(&sys, lam - h).unwrap();
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - fp).abs() <= 1e-5 * fp.abs().max(1.0), "{fd} vs {fp}");
        }
    }

    #[test]
    fn perfect_measurements_all_solvers() {
        let sys = build_system(&perfect_pair());
        let quest = quest_classic(&sys, 1e-12, 20).unwrap();
        assert!(quest.iterations <= 1);
        let fo = first_order(&sys).unwrap();
        let rec = recursive_solve(&sys, recursive_default_tol(&sys), 8).unwrap();
        assert_eq!(rec.iterations, 1);
        for rep in [quest, fo, rec] {
            assert_eq!(rep.lambda, 2.0);
            assert_eq!(rep.q, Quaternion::IDENTITY);
            assert!(rep.residual <= 1e-12);
        }
    }

    #[test]
    fn half_turn_is_near_singular() {
        let q = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let sys = perfect_system(&q, &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]);
        assert!(matches!(quest_classic(&sys, 1e-12, 20), Err(Error::NearSingular { .. })));
        assert!(matches!(first_order(&sys), Err(Error::NearSingular { .. })));
        assert!(matches!(recursive_solve(&sys, 1e-12, 8), Err(Error::NearSingular { .. })));
        let rep = q_method(&sys).unwrap();
        assert!(rep.q.sign_blind_distance(&q) <= 1e-12);
        assert_eq!(rep.q, q.canonical());
    }

    #[test]
    fn near_half_turn_never_returns_a_wrong_root() {
        use crate::simkit::{perturb_direction, random_unit_vector};
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut rejected = 0;
        for _ in 0..400 {
            let axis = random_unit_vector(&mut rng);
            let s: f64 = rng.gen_range(5e-4..5e-3);
            let q = Quaternion::from_parts(axis * (1.0 - s * s).sqrt(), s);
            let a = q.attitude_matrix().unwrap();
            let entries = (0..2)
                .map(|_| {
                    let r = random_unit_vector(&mut rng);
                    Measurement::new(perturb_direction(&(a * r), 1.0, &mut rng), r, 1.0)
                })
                .collect();
            let sys = build_system(&MeasurementSet::renormalized(entries).unwrap());
            let lm = q_method(&sys).unwrap().lambda;
            let tol = recursive_default_tol(&sys);
            for rep in [quest_classic(&sys, tol, 50), recursive_solve(&sys, tol, 8)] {
                match rep {
                    Ok(rep) => assert!((rep.lambda - lm).abs() <= 1e-10, "{} vs {lm}", rep.lambda),
                    Err(e) => {
                        assert!(e.is_numerical());
                        rejected += 1;
                    }
                }
            }
        }
        assert!(rejected > 0);
    }

    #[test]
    fn recursive_keeps_exact_resolvent_on_perfect_near_half_turn() {
        let s = 1e-4_f64;
        let q = Quaternion::new(0.6, 0.0, 0.8, 0.0) * (1.0 - s * s).sqrt() + Quaternion::new(0.0, 0.0, 0.0, s);
        let sys = perfect_system(&q, &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.8)]);
        let rec = recursive_solve(&sys, recursive_default_tol(&sys), 8).unwrap();
        let fo = first_order(&sys).unwrap();
        assert!(rec.q.sign_blind_distance(&q) <= 1e-10, "{}", rec.q.sign_blind_distance(&q));
        assert!(rec.q.sign_blind_distance(&fo.q) <= 1e-10);
    }

    #[test]
    fn solvers_agree_on_noisy_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..300 {
            let n = 2 + rng.gen_range(0..4);
            let (sys, _) = noisy_system(&mut rng, n, 0.01);
            let oracle = q_method(&sys).unwrap();
            let quest = quest_classic(&sys, 1e-13, 50).unwrap();
            let rec = recursive_solve(&sys, recursive_default_tol(&sys), 8).unwrap();
            let fo = first_order(&sys).unwrap();
            assert!((quest.lambda - oracle.lambda).abs() <= 1e-10);
            assert!((rec.lambda - oracle.lambda).abs() <= 1e-10);
            assert!(quest.q.sign_blind_distance(&oracle.q) <= 1e-9);
            assert!(rec.q.sign_blind_distance(&oracle.q) <= 1e-9);
            assert!(fo.lambda <= oracle.lambda + 1e-12);
            assert!(oracle.lambda <= sys.lambda0 + 1e-12);
            // λ₁ is the Rayleigh quotient of the zeroth-order quaternion
            let q0 = Quaternion::from_rodrigues(&(sys.shifted(sys.lambda0).inverse_adjugate(0.0).unwrap() * sys.z));
            assert!((fo.lambda - sys.k.quadratic_form(&q0.to_array())).abs() <= 1e-14 * sys.lambda0);
        }
    }

    #[test]
    fn recursive_sequence_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let n = 2 + rng.gen_range(0..3);
            let (sys, _) = noisy_system(&mut rng, n, 0.01);
            let lm = q_method(&sys).unwrap().lambda;
            let lambdas: Vec<f64> = RecursiveIter::new(&sys).unwrap().take(6).map(|s| s.unwrap().lambda).collect();
            for w in lambdas.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{lambdas:?}");
            }
            assert!(lambdas.iter().all(|l| *l <= lm + 1e-12));
        }
    }

    #[test]
    fn recursive_is_stationary_at_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (sys, _) = noisy_system(&mut rng, 3, 0.01);
        let rec = recursive_solve(&sys, recursive_default_tol(&sys), 8).unwrap();
        let again = sys.rayleigh(&rec.q);
        assert!((again - rec.lambda).abs() <= 1e-12);
        let q_next = resolvent_direct(&sys, again).unwrap().quaternion(&sys);
        assert!(q_next.sign_blind_distance(&rec.q) <= 1e-9);
    }

    #[test]
    fn recursive_iteration_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (sys, _) = noisy_system(&mut rng, 3, 0.05);
        assert!(matches!(recursive_solve(&sys, 1e-300, 2), Err(Error::NoConvergence { .. })));
        assert!(matches!(quest_classic(&sys, 1e-300, 2), Err(Error::NoConvergence { .. })));
        assert!(matches!(recursive_solve(&sys, 0.0, 8), Err(Error::ConfigError(_))));
    }

    #[test]
    fn report_json_shape() {
        let sys = build_system(&perfect_pair());
        let rep = first_order(&sys).unwrap();
        let v: serde_json::Value = serde_json::to_value(rep).unwrap();
        assert_eq!(v["method"], "first_order");
        assert_eq!(v["q"], serde_json::json!([0.0, 0.0, 0.0, 1.0]));
        assert_eq!(v["lambda"], 2.0);
        assert_eq!(v["taste"], 0.0);
        let back: SolveReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, rep);
    }
}
