//! Closed-form counterparts of the sample-sample Hopfield head:
//! Nadaraya-Watson kernel regression and the AdaBoost exponential-loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::HarnessError;
use crate::model::{hs_head_forward, SampleHead};
use crate::tensor::{logsumexp, softmax_scaled, Tensor};

const UNIT_TOL: f64 = 1e-9;

fn unit(v: &[f64]) -> Result<Vec<f64>, HarnessError> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(HarnessError::Domain(format!(
            "cannot normalize a vector of norm {n}"
        )));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nadaraya-Watson estimate at `z` with the Gaussian kernel
/// `exp(-β/2 ‖z_i - z‖²)` on unit-normalized inputs, which reduces to
/// `Σ_i y_i softmax(β Zᵀz)_i`.
pub fn nw_regress(
    inputs: &[Vec<f64>],
    labels: &[Vec<f64>],
    z: &[f64],
    beta: f64,
) -> Result<Vec<f64>, HarnessError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(HarnessError::Contract(format!(
            "{} inputs and {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let z = unit(z)?;
    let mut scores = Vec::with_capacity(inputs.len());
    for zi in inputs {
        if zi.len() != z.len() {
            return Err(HarnessError::Contract(format!(
                "input of length {} vs query {}",
                zi.len(),
                z.len()
            )));
        }
        scores.push(dot(&unit(zi)?, &z));
    }
    let p = softmax_scaled(&Tensor::vector(scores), beta)?;
    let width = labels[0].len();
    let mut out = vec![0.0; width];
    for (pi, yi) in p.data().iter().zip(labels) {
        if yi.len() != width {
            return Err(HarnessError::Contract("labels of unequal length".into()));
        }
        for (o, y) in out.iter_mut().zip(yi) {
            *o += pi * y;
        }
    }
    Ok(out)
}

/// One comparison between an H_s head and kernel regression.
#[derive(Debug, Clone)]
pub struct NwCase {
    pub head: SampleHead<Tensor>,
    pub beta: f64,
    /// `[n, d·e]`, one stored sample per row.
    pub memory: Tensor,
    pub xi: Vec<f64>,
}

impl NwCase {
    /// Random head and data, rescaled so that every `W_X x_i` and `W_ξ ξ` has
    /// unit norm.
    pub fn random<R: Rng + ?Sized>(de: usize, h: usize, n: usize, beta: f64, rng: &mut R) -> Self {
        let mut g = |r: usize, c: usize| {
            Tensor::new(
                &[r, c],
                (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .expect("sized")
        };
        let head = SampleHead {
            w_xi: g(h, de),
            w_x: g(h, de),
            w_s: g(de, h),
        };
        let mut memory = g(n, de);
        let xi_raw = g(1, de);
        for i in 0..n {
            let k = head
                .w_x
                .matvec(&Tensor::vector(memory.row(i).to_vec()))
                .expect("shapes")
                .norm();
            for v in &mut memory.data_mut()[i * de..(i + 1) * de] {
                *v /= k;
            }
        }
        let q = head
            .w_xi
            .matvec(&Tensor::vector(xi_raw.data().to_vec()))
            .expect("shapes")
            .norm();
        let xi = xi_raw.data().iter().map(|v| v / q).collect();
        Self {
            head,
            beta,
            memory,
            xi,
        }
    }
}

/// Largest absolute difference between the H_s head and Nadaraya-Watson
/// regression with inputs `W_X x_i`, query `W_ξ ξ` and labels `W_S W_X x_i`.
/// The reduction needs unit-norm inputs and query; anything else is rejected.
pub fn equivalence_nw_vs_hs(case: &NwCase) -> Result<f64, HarnessError> {
    let NwCase {
        head,
        beta,
        memory,
        xi,
    } = case;
    let xi_t = Tensor::vector(xi.clone());
    let z = head.w_xi.matvec(&xi_t)?;
    if (z.norm() - 1.0).abs() > UNIT_TOL {
        return Err(HarnessError::Contract(format!(
            "‖W_ξ ξ‖ = {} is not 1",
            z.norm()
        )));
    }
    let mut inputs = Vec::with_capacity(memory.rows());
    let mut labels = Vec::with_capacity(memory.rows());
    for i in 0..memory.rows() {
        let zi = head.w_x.matvec(&Tensor::vector(memory.row(i).to_vec()))?;
        if (zi.norm() - 1.0).abs() > UNIT_TOL {
            return Err(HarnessError::Contract(format!(
                "‖W_X x_{i}‖ = {} is not 1",
                zi.norm()
            )));
        }
        labels.push(head.w_s.matvec(&zi)?.data().to_vec());
        inputs.push(zi.data().to_vec());
    }
    let nw = nw_regress(&inputs, &labels, z.data(), *beta)?;
    let hs = hs_head_forward(head, *beta, &xi_t, memory)?;
    Ok(hs
        .data()
        .iter()
        .zip(&nw)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn check_labels(z: &[Vec<f64>], y: &[f64], xi: &[f64]) -> Result<(), HarnessError> {
    if z.is_empty() || z.len() != y.len() {
        return Err(HarnessError::Contract(format!(
            "{} samples and {} labels",
            z.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(HarnessError::Domain(format!(
            "labels must be +1 or -1, got {bad}"
        )));
    }
    if z.iter().any(|zi| zi.len() != xi.len()) {
        return Err(HarnessError::Contract(
            "sample and weight lengths differ".into(),
        ));
    }
    Ok(())
}

/// Exponential-loss objective `lse(β, -Y Zᵀ ξ) = β⁻¹ ln Σ_i exp(-β y_i z_iᵀ ξ)`.
pub fn adaboost_loss(
    z: &[Vec<f64>],
    y: &[f64],
    xi: &[f64],
    beta: f64,
) -> Result<f64, HarnessError> {
    check_labels(z, y, xi)?;
    let margins: Vec<f64> = z.iter().zip(y).map(|(zi, yi)| -yi * dot(zi, xi)).collect();
    Ok(logsumexp(&Tensor::vector(margins), beta)?)
}

/// Gradient of [`adaboost_loss`] in `ξ`: `-Z Y softmax(-β Y Zᵀ ξ)`.
pub fn adaboost_gradient_oracle(
    z: &[Vec<f64>],
    y: &[f64],
    xi: &[f64],
    beta: f64,
) -> Result<Vec<f64>, HarnessError> {
    check_labels(z, y, xi)?;
    let margins: Vec<f64> = z.iter().zip(y).map(|(zi, yi)| -yi * dot(zi, xi)).collect();
    let p = softmax_scaled(&Tensor::vector(margins), beta)?;
    let mut g = vec![0.0; xi.len()];
    for ((zi, yi), pi) in z.iter().zip(y).zip(p.data()) {
        for (gk, zk) in g.iter_mut().zip(zi) {
            *gk -= yi * pi * zk;
        }
    }
    Ok(g)
}

/// The same gradient as an H_s head: memory rows `y_i z_i`, identity
/// projections, evaluated at `-ξ` and negated.
pub fn adaboost_gradient_via_hs(
    z: &[Vec<f64>],
    y: &[f64],
    xi: &[f64],
    beta: f64,
) -> Result<Vec<f64>, HarnessError> {
    check_labels(z, y, xi)?;
    let d = xi.len();
    let rows: Vec<Vec<f64>> = z
        .iter()
        .zip(y)
        .map(|(zi, yi)| zi.iter().map(|v| v * yi).collect())
        .collect();
    let memory = Tensor::from_rows(&rows)?;
    let head = SampleHead {
        w_xi: Tensor::identity(d),
        w_x: Tensor::identity(d),
        w_s: Tensor::identity(d),
    };
    let neg = Tensor::vector(xi.iter().map(|v| -v).collect());
    let out = hs_head_forward(&head, beta, &neg, &memory)?;
    Ok(out.data().iter().map(|v| -v).collect())
}

/// Worst deviations over a seeded batch of oracle cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub cases: usize,
    /// Largest absolute difference between the Hopfield form and the closed form.
    pub max_deviation: f64,
    /// Largest `‖numeric − analytic‖ / ‖analytic‖` over cases (AdaBoost only).
    pub max_fd_relative: f64,
}

/// Kernel-regression equivalence on `cases` random heads of varying size.
pub fn nw_suite(cases: usize, seed: u64, beta: f64) -> Result<SuiteSummary, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let de = rng.random_range(2..12);
        let h = rng.random_range(1..=de);
        let n = rng.random_range(1..20);
        let case = NwCase::random(de, h, n, beta, &mut rng);
        worst = worst.max(equivalence_nw_vs_hs(&case)?);
    }
    Ok(SuiteSummary {
        cases,
        max_deviation: worst,
        max_fd_relative: 0.0,
    })
}

/// AdaBoost gradient against its Hopfield form and central differences
/// (step `1e-6`) on `cases` random problems.
pub fn adaboost_suite(cases: usize, seed: u64, beta: f64) -> Result<SuiteSummary, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_hs, mut worst_fd): (f64, f64) = (0.0, 0.0);
    let eps = 1e-6;
    for _ in 0..cases {
        let d = rng.random_range(1..8);
        let n = rng.random_range(1..16);
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = adaboost_gradient_oracle(&z, &y, &xi, beta)?;
        let h = adaboost_gradient_via_hs(&z, &y, &xi, beta)?;
        let mut diff2 = 0.0;
        for k in 0..d {
            let (mut p, mut m) = (xi.clone(), xi.clone());
            p[k] += eps;
            m[k] -= eps;
            let fd =
                (adaboost_loss(&z, &y, &p, beta)? - adaboost_loss(&z, &y, &m, beta)?) / (2.0 * eps);
            diff2 += (fd - g[k]) * (fd - g[k]);
            worst_hs = worst_hs.max((h[k] - g[k]).abs());
        }
        let gn = dot(&g, &g).sqrt();
        if gn > 0.0 {
            worst_fd = worst_fd.max(diff2.sqrt() / gn);
        }
    }
    Ok(SuiteSummary {
        cases,
        max_deviation: worst_hs,
        max_fd_relative: worst_fd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nw_matches_an_explicit_kernel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inputs: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let z = [0.3, -0.2, 0.9];
        let beta = 2.5;
        let norm = |v: &[f64]| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let zn = norm(&z);
        let (mut num, mut den) = (0.0, 0.0);
        for (zi, yi) in inputs.iter().zip(&labels) {
            let zi = norm(zi);
            let d2: f64 = zi.iter().zip(&zn).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = (-beta / 2.0 * d2).exp();
            num += k * yi[0];
            den += k;
        }
        let got = nw_regress(&inputs, &labels, &z, beta).unwrap();
        assert!((got[0] - num / den).abs() < 1e-12);
        assert!(nw_regress(&inputs, &labels, &[0.0, 0.0, 0.0], beta).is_err());
    }

    #[test]
    fn head_equals_kernel_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let case = NwCase::random(6, 3, 9, 1.7, &mut rng);
            assert!(equivalence_nw_vs_hs(&case).unwrap() < 1e-10);
        }
        let mut bad = NwCase::random(6, 3, 9, 1.7, &mut rng);
        bad.xi.iter_mut().for_each(|v| *v *= 2.0);
        assert!(matches!(
            equivalence_nw_vs_hs(&bad),
            Err(HarnessError::Contract(_))
        ));
    }

    #[test]
    fn adaboost_gradient_three_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..8)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let xi = vec![0.2, -0.4, 0.1, 0.7];
        let beta = 1.3;
        let g = adaboost_gradient_oracle(&z, &y, &xi, beta).unwrap();
        let h = adaboost_gradient_via_hs(&z, &y, &xi, beta).unwrap();
        let eps = 1e-6;
        for k in 0..4 {
            let mut a = xi.clone();
            let mut b = xi.clone();
            a[k] += eps;
            b[k] -= eps;
            let fd = (adaboost_loss(&z, &y, &a, beta).unwrap()
                - adaboost_loss(&z, &y, &b, beta).unwrap())
                / (2.0 * eps);
            assert!((fd - g[k]).abs() < 1e-8);
            assert!((h[k] - g[k]).abs() < 1e-12);
        }
        let mut bad = y.clone();
        bad[0] = 0.5;
        assert!(matches!(
            adaboost_gradient_oracle(&z, &bad, &xi, beta),
            Err(HarnessError::Domain(_))
        ));
    }
}
