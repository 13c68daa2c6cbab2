//! Pattern memory, energy, update rule and fixed-point retrieval.

use rand::Rng;
use rand_distr::StandardNormal;

use super::HopfieldError;
use crate::tensor::{logsumexp, softmax_scaled, Tensor};

/// Tolerance used when approximating the fixed point near a stored pattern.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITER: usize = 100;

/// Stored patterns `X = (x_1, …, x_N)` with inverse temperature `beta`.
///
/// Patterns are the columns of `X`; they are kept row-wise internally so each
/// pattern is a contiguous slice.
#[derive(Debug, Clone)]
pub struct PatternMemory {
    /// `[N, d]`: row `i` is pattern `x_i`.
    patterns: Tensor,
    beta: f64,
    max_norm: f64,
}

/// Outcome of iterating the update rule to a fixed point.
#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub xi_star: Tensor,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// Energy of every iterate, starting with the query.
    pub energies: Vec<f64>,
}

/// Right-hand sides of the one-update and retrieval-error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub separation: f64,
    /// `max{‖ξ − x_i‖, ‖x_i* − x_i‖}`.
    pub radius: f64,
    /// `Δ_i − 2·radius·M`; the bounds are informative only when this is positive.
    pub exponent_arg: f64,
    /// Bound on `‖f(ξ) − x_i‖`.
    pub retrieval_error: f64,
    /// Bound on the mean-value Jacobian norm `‖J^m‖₂`.
    pub jacobian_norm: f64,
}

impl PatternMemory {
    /// `x` is `[d, N]` with patterns as columns.
    pub fn new(x: &Tensor, beta: f64) -> Result<Self, HopfieldError> {
        if x.rank() != 2 {
            return Err(HopfieldError::Domain(format!(
                "pattern matrix must be rank 2, got shape {:?}",
                x.shape()
            )));
        }
        Self::from_rows(x.transpose()?, beta)
    }

    pub fn from_patterns(patterns: &[Vec<f64>], beta: f64) -> Result<Self, HopfieldError> {
        Self::from_rows(Tensor::from_rows(patterns)?, beta)
    }

    fn from_rows(patterns: Tensor, beta: f64) -> Result<Self, HopfieldError> {
        if patterns.shape()[0] == 0 {
            return Err(HopfieldError::Domain(
                "memory needs at least one pattern".into(),
            ));
        }
        if !patterns.is_finite() {
            return Err(HopfieldError::Domain("patterns must be finite".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(HopfieldError::Domain(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let max_norm = (0..patterns.shape()[0])
            .map(|i| norm(patterns.row(i)))
            .fold(0.0, f64::max);
        Ok(Self {
            patterns,
            beta,
            max_norm,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.patterns.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.patterns.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `M = max_i ‖x_i‖`.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    pub fn pattern(&self, i: usize) -> Tensor {
        Tensor::vector(self.patterns.row(i).to_vec())
    }

    /// Pattern matrix `X` as `[d, N]`.
    pub fn matrix(&self) -> Tensor {
        self.patterns.transpose().expect("rank-2 patterns")
    }

    fn check_dim(&self, xi: &Tensor) -> Result<(), HopfieldError> {
        if xi.len() != self.dim() || xi.rank() != 1 {
            return Err(HopfieldError::Dimension {
                expected: self.dim(),
                got: xi.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// `Xᵀξ`.
    fn similarities(&self, xi: &Tensor) -> Result<Tensor, HopfieldError> {
        self.check_dim(xi)?;
        Ok(self.patterns.matvec(xi)?)
    }

    /// `E(ξ) = −β⁻¹ log Σ exp(β x_iᵀξ) + β⁻¹ log N + ½ξᵀξ + ½M²`.
    pub fn energy(&self, xi: &Tensor) -> Result<f64, HopfieldError> {
        let sims = self.similarities(xi)?;
        let lse = logsumexp(&sims, self.beta)?;
        let n = self.len() as f64;
        Ok(-lse + n.ln() / self.beta + 0.5 * xi.dot(xi)? + 0.5 * self.max_norm * self.max_norm)
    }

    /// `softmax(β Xᵀξ)`: the convex weights of one update.
    pub fn weights(&self, xi: &Tensor) -> Result<Tensor, HopfieldError> {
        Ok(softmax_scaled(&self.similarities(xi)?, self.beta)?)
    }

    /// One application of the update rule, `X softmax(β Xᵀξ)`.
    pub fn update(&self, xi: &Tensor) -> Result<Tensor, HopfieldError> {
        let p = self.weights(xi)?;
        let mut out = vec![0.0; self.dim()];
        for (i, &w) in p.data().iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.patterns.row(i)) {
                *o += w * x;
            }
        }
        Ok(Tensor::vector(out))
    }

    /// Iterates the update rule until the step norm drops to `tol` or
    /// `max_iter` updates have been applied.
    pub fn retrieve(
        &self,
        xi: &Tensor,
        tol: f64,
        max_iter: usize,
    ) -> Result<RetrievalResult, HopfieldError> {
        if tol.is_nan() || tol <= 0.0 || max_iter == 0 {
            return Err(HopfieldError::Domain(format!(
                "retrieve needs tol > 0 and max_iter >= 1 (tol={tol}, max_iter={max_iter})"
            )));
        }
        let mut state = xi.clone();
        let mut energies = vec![self.energy(&state)?];
        let mut final_delta = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            let next = self.update(&state)?;
            final_delta = norm(next.sub(&state)?.data());
            state = next;
            iterations += 1;
            energies.push(self.energy(&state)?);
            if final_delta <= tol {
                break;
            }
        }
        Ok(RetrievalResult {
            converged: final_delta <= tol,
            xi_star: state,
            iterations,
            final_delta,
            energies,
        })
    }

    /// Fixed point reached from pattern `i` itself.
    pub fn fixed_point(&self, i: usize) -> Result<Tensor, HopfieldError> {
        self.check_index(i)?;
        Ok(self
            .retrieve(&self.pattern(i), FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)?
            .xi_star)
    }

    fn check_index(&self, i: usize) -> Result<(), HopfieldError> {
        if i >= self.len() {
            return Err(HopfieldError::Domain(format!(
                "pattern index {i} out of range for {} patterns",
                self.len()
            )));
        }
        Ok(())
    }

    /// `Δ_i = min_{j≠i} (x_iᵀx_i − x_iᵀx_j)`.
    pub fn separation(&self, i: usize) -> Result<f64, HopfieldError> {
        if self.len() < 2 {
            return Err(HopfieldError::UndefinedSeparation);
        }
        self.check_index(i)?;
        let xi = self.patterns.row(i);
        let own = dot(xi, xi);
        Ok((0..self.len())
            .filter(|&j| j != i)
            .map(|j| own - dot(xi, self.patterns.row(j)))
            .fold(f64::INFINITY, f64::min))
    }

    /// `Δ_i ≥ 2/(βN) + β⁻¹ log(2(N−1)NβM²)`.
    pub fn is_well_separated(&self, i: usize) -> Result<bool, HopfieldError> {
        let n = self.len() as f64;
        let b = self.beta;
        let m2 = self.max_norm * self.max_norm;
        let needed = 2.0 / (b * n) + (2.0 * (n - 1.0) * n * b * m2).ln() / b;
        Ok(self.separation(i)? >= needed)
    }

    /// Bound terms for query `xi` and pattern `i`, with the fixed point
    /// approximated by [`Self::fixed_point`].
    pub fn bound_terms(&self, xi: &Tensor, i: usize) -> Result<BoundTerms, HopfieldError> {
        let x_star = self.fixed_point(i)?;
        self.bound_terms_with(xi, i, &x_star)
    }

    pub fn bound_terms_with(
        &self,
        xi: &Tensor,
        i: usize,
        x_star: &Tensor,
    ) -> Result<BoundTerms, HopfieldError> {
        self.check_dim(xi)?;
        self.check_dim(x_star)?;
        let separation = self.separation(i)?;
        let x_i = self.pattern(i);
        let radius = norm(xi.sub(&x_i)?.data()).max(norm(x_star.sub(&x_i)?.data()));
        let m = self.max_norm;
        let n = self.len() as f64;
        let exponent_arg = separation - 2.0 * radius * m;
        let decay = (-self.beta * exponent_arg).exp();
        Ok(BoundTerms {
            separation,
            radius,
            exponent_arg,
            retrieval_error: 2.0 * (n - 1.0) * decay * m,
            jacobian_norm: 2.0 * self.beta * n * m * m * (n - 1.0) * decay,
        })
    }

    /// `2(N−1)·exp(−β(Δ_i − 2·max{‖ξ−x_i‖, ‖x_i*−x_i‖}·M))·M`.
    pub fn retrieval_error_bound(&self, xi: &Tensor, i: usize) -> Result<f64, HopfieldError> {
        Ok(self.bound_terms(xi, i)?.retrieval_error)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `n` patterns drawn uniformly from the sphere of the given radius in `R^d`.
pub fn sphere_patterns<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n).map(|_| sphere_point(d, radius, rng)).collect()
}

pub fn sphere_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x * radius / r).collect();
        }
    }
}

/// A point drawn uniformly from the ball of the given radius around `center`.
pub fn ball_point<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    let dir = sphere_point(d, r, rng);
    center.iter().zip(dir).map(|(c, x)| c + x).collect()
}

/// Checks whether pattern `i` is stored: every sampled query in the sphere of
/// radius `½√Δ_i` converges to one common fixed point lying inside that sphere,
/// and the sphere is disjoint from the spheres of all other patterns.
pub fn is_stored<R: Rng + ?Sized>(
    mem: &PatternMemory,
    i: usize,
    queries: usize,
    rng: &mut R,
) -> Result<bool, HopfieldError> {
    let radius_of =
        |j: usize| -> Result<f64, HopfieldError> { Ok(0.5 * mem.separation(j)?.max(0.0).sqrt()) };
    let r_i = radius_of(i)?;
    let x_i = mem.pattern(i);
    for j in (0..mem.len()).filter(|&j| j != i) {
        let gap = norm(x_i.sub(&mem.pattern(j))?.data());
        if gap <= r_i + radius_of(j)? {
            return Ok(false);
        }
    }
    let x_star = mem.fixed_point(i)?;
    if norm(x_star.sub(&x_i)?.data()) > r_i {
        return Ok(false);
    }
    for _ in 0..queries {
        let q = Tensor::vector(ball_point(x_i.data(), r_i, rng));
        let res = mem.retrieve(&q, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)?;
        if !res.converged || norm(res.xi_star.sub(&x_star)?.data()) > 1e-6 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e1e2() -> PatternMemory {
        PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap()
    }

    #[test]
    fn energy_single_pattern_cases() {
        let mem = PatternMemory::from_patterns(&[vec![1.0, 0.0]], 1.0).unwrap();
        assert!(mem.energy(&Tensor::vector(vec![1.0, 0.0])).unwrap().abs() < 1e-15);
        assert!((mem.energy(&Tensor::vector(vec![0.0, 0.0])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn energy_orthonormal_matches_direct_sum() {
        let mem = e1e2();
        // xi = x1: -ln(e^1 + e^0) + ln 2 + 1/2 + 1/2
        let want = -(1f64.exp() + 1.0).ln() + 2f64.ln() + 1.0;
        let got = mem.energy(&Tensor::vector(vec![1.0, 0.0])).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let mem = e1e2();
        assert!(matches!(
            mem.energy(&Tensor::vector(vec![1.0])),
            Err(HopfieldError::Dimension { .. })
        ));
        assert!(mem.update(&Tensor::vector(vec![1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn update_singleton_returns_pattern() {
        let mem = PatternMemory::from_patterns(&[vec![0.3, -0.7, 2.0]], 2.5).unwrap();
        let out = mem.update(&Tensor::vector(vec![5.0, 1.0, -1.0])).unwrap();
        assert_eq!(out.data(), &[0.3, -0.7, 2.0]);
    }

    #[test]
    fn update_hand_softmax() {
        let mem = PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], 4.0).unwrap();
        let out = mem.update(&Tensor::vector(vec![0.9, 0.1])).unwrap();
        // weights e^{3.6}, e^{0.4}
        let p1 = 1.0 / (1.0 + (-3.2f64).exp());
        assert!((out.data()[0] - p1).abs() < 1e-15);
        assert!((out.data()[1] - (1.0 - p1)).abs() < 1e-15);
        assert!((out.data()[0] - 0.9608).abs() < 1e-4);
    }

    #[test]
    fn symmetric_point_is_fixed() {
        for beta in [0.1, 1.0, 30.0] {
            let mem =
                PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], beta).unwrap();
            let out = mem.update(&Tensor::vector(vec![0.5, 0.5])).unwrap();
            assert_eq!(out.data(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn retrieve_from_fixed_point_stops_immediately() {
        let mem = PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], 3.0).unwrap();
        let res = mem
            .retrieve(&Tensor::vector(vec![0.5, 0.5]), 1e-12, 10)
            .unwrap();
        assert!(res.iterations <= 1);
        assert!(res.converged);
        assert!(res.final_delta < 1e-15);
    }

    #[test]
    fn retrieve_well_separated_one_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 16;
        let patterns: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mem = PatternMemory::from_patterns(&patterns, 10.0).unwrap();
        let target = mem.fixed_point(0).unwrap();
        let query = Tensor::vector(ball_point(&patterns[0], 0.05, &mut rng));
        let res = mem.retrieve(&query, 1e-3, 100).unwrap();
        assert!(res.converged);
        assert!(norm(mem.update(&query).unwrap().sub(&target).unwrap().data()) < 1e-3);
        assert!(res.iterations <= 2);
    }

    #[test]
    fn similar_patterns_converge_to_their_mean() {
        let a = vec![1.0, 0.02, 0.0];
        let b = vec![1.0, -0.02, 0.0];
        let far = vec![-1.0, 0.0, 0.0];
        let mem = PatternMemory::from_patterns(&[a.clone(), b.clone(), far], 2.0).unwrap();
        let res = mem
            .retrieve(&Tensor::vector(vec![0.9, 0.3, 0.1]), 1e-12, 1000)
            .unwrap();
        // fixed-point oracle: iterate by hand on the symmetric subspace
        let mut s = vec![0.9, 0.3, 0.1];
        for _ in 0..1000 {
            let sims: Vec<f64> = [&a, &b, &vec![-1.0, 0.0, 0.0]]
                .iter()
                .map(|p| 2.0 * dot(p, &s))
                .collect();
            let m = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = sims.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = w.iter().sum();
            let pats = [&a, &b, &vec![-1.0, 0.0, 0.0]];
            s = (0..3)
                .map(|k| (0..3).map(|i| w[i] / z * pats[i][k]).sum())
                .collect();
        }
        assert!(res.xi_star.max_abs_diff(&Tensor::vector(s)).unwrap() < 1e-9);
        let mean = [1.0, 0.0, 0.0];
        assert!(
            norm(
                &res.xi_star
                    .data()
                    .iter()
                    .zip(mean)
                    .map(|(x, m)| x - m)
                    .collect::<Vec<_>>()
            ) < 0.05
        );
    }

    #[test]
    fn separation_cases() {
        let mem = e1e2();
        assert_eq!(mem.separation(0).unwrap(), 1.0);
        assert_eq!(mem.separation(1).unwrap(), 1.0);
        let dup =
            PatternMemory::from_patterns(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 1.0]], 1.0)
                .unwrap();
        assert_eq!(dup.separation(0).unwrap(), 0.0);
        let single = PatternMemory::from_patterns(&[vec![1.0, 2.0]], 1.0).unwrap();
        assert!(matches!(
            single.separation(0),
            Err(HopfieldError::UndefinedSeparation)
        ));
    }

    #[test]
    fn separation_matches_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pats: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mem = PatternMemory::from_patterns(&pats, 1.0).unwrap();
        for i in 0..5 {
            let mut best = f64::INFINITY;
            for j in 0..5 {
                if i != j {
                    let v: f64 = (0..4)
                        .map(|k| pats[i][k] * pats[i][k] - pats[i][k] * pats[j][k])
                        .sum();
                    best = best.min(v);
                }
            }
            assert!((mem.separation(i).unwrap() - best).abs() < 1e-14);
        }
    }

    #[test]
    fn bound_closed_form_two_patterns() {
        let mem = PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], 5.0).unwrap();
        let xi = Tensor::vector(vec![1.0, 0.0]);
        let x_star = mem.fixed_point(0).unwrap();
        let t = mem.bound_terms_with(&xi, 0, &x_star).unwrap();
        let r = norm(&[x_star.data()[0] - 1.0, x_star.data()[1]]);
        let want = 2.0 * (-5.0 * (1.0 - 2.0 * r)).exp();
        assert!((t.retrieval_error - want).abs() < 1e-14);
        let measured = norm(
            mem.update(&xi)
                .unwrap()
                .sub(&mem.pattern(0))
                .unwrap()
                .data(),
        );
        assert!(measured <= t.retrieval_error);
    }

    #[test]
    fn bound_vanishes_for_large_beta() {
        let mem = PatternMemory::from_patterns(&[vec![1.0, 0.0], vec![0.0, 1.0]], 200.0).unwrap();
        let b = mem
            .retrieval_error_bound(&Tensor::vector(vec![1.0, 0.0]), 0)
            .unwrap();
        assert!(b < 1e-80);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(PatternMemory::from_patterns(&[], 1.0).is_err());
        assert!(PatternMemory::from_patterns(&[vec![f64::NAN]], 1.0).is_err());
        assert!(PatternMemory::from_patterns(&[vec![1.0]], 0.0).is_err());
        let mem = e1e2();
        assert!(mem
            .retrieve(&Tensor::vector(vec![1.0, 0.0]), 0.0, 5)
            .is_err());
    }
}
