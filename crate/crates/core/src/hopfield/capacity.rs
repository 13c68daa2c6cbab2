//! Storage capacity of random patterns on a sphere.

use serde::Serialize;

use super::{lambert_w0, HopfieldError};

/// Inputs of the capacity bound together with the derived constants `a`, `b`, `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityParams {
    /// Failure probability in `(0, 1]`.
    pub p: f64,
    /// Sphere radius factor; patterns live on the sphere of radius `K·√(d−1)`.
    pub k: f64,
    /// Pattern dimension.
    pub d: usize,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CapacityParams {
    pub fn new(p: f64, k: f64, d: usize, beta: f64) -> Result<Self, HopfieldError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(HopfieldError::Domain(format!(
                "failure probability {p} not in (0, 1]"
            )));
        }
        if d < 2 {
            return Err(HopfieldError::Domain(format!(
                "dimension {d} must be at least 2"
            )));
        }
        if !(k > 0.0 && beta > 0.0) {
            return Err(HopfieldError::Domain(format!(
                "K={k} and beta={beta} must be positive"
            )));
        }
        let dm1 = (d - 1) as f64;
        let a = 2.0 / dm1 * (1.0 + (2.0 * beta * k * k * p * dm1).ln());
        let b = 2.0 * k * k * beta / 5.0;
        let c = b / lambert_w0((a + b.ln()).exp())?;
        Ok(Self {
            p,
            k,
            d,
            beta,
            a,
            b,
            c,
        })
    }

    /// `a + ln b`, the argument whose exponential is passed to `W₀`.
    pub fn log_argument(&self) -> f64 {
        self.a + self.b.ln()
    }

    /// Smallest admissible `c`: `(2/√p)^(4/(d−1))`.
    pub fn threshold(&self) -> f64 {
        (2.0 / self.p.sqrt()).powf(4.0 / (self.d - 1) as f64)
    }

    /// Pattern radius `K·√(d−1)`.
    pub fn radius(&self) -> f64 {
        self.k * ((self.d - 1) as f64).sqrt()
    }
}

/// Number of random sphere patterns storable with probability `1 − p`:
/// `√p · c^((d−1)/4)`.
pub fn storage_capacity_bound(params: &CapacityParams) -> Result<f64, HopfieldError> {
    let threshold = params.threshold();
    if params.c < threshold {
        return Err(HopfieldError::CapacityCondition {
            c: params.c,
            threshold,
        });
    }
    Ok(params.p.sqrt() * params.c.powf((params.d - 1) as f64 / 4.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_dimensional_constants() {
        let cp = CapacityParams::new(0.001, 3.0, 20, 1.0).unwrap();
        assert!((cp.c - 3.1546).abs() < 5e-5, "c = {}", cp.c);
        assert!(cp.log_argument() > 1.27);
        let n = storage_capacity_bound(&cp).unwrap();
        // sqrt(0.001) * c^(19/4) evaluated independently
        let direct = 0.001f64.sqrt() * (19.0 / 4.0 * cp.c.ln()).exp();
        assert!((n - direct).abs() < 1e-9);
        assert!((n - 7.4).abs() < 0.05, "N_min = {n}");
    }

    #[test]
    fn seventy_five_dimensional_constants() {
        let cp = CapacityParams::new(0.001, 1.0, 75, 1.0).unwrap();
        assert!((cp.c - 1.3718).abs() < 1e-4, "c = {}", cp.c);
        assert!(cp.log_argument() < -0.94);
        assert!(storage_capacity_bound(&cp).is_ok());
    }

    #[test]
    fn violated_condition_carries_values() {
        // Small radius factor drives c below the admissible threshold.
        let cp = CapacityParams::new(0.001, 0.1, 20, 1.0).unwrap();
        match storage_capacity_bound(&cp) {
            Err(HopfieldError::CapacityCondition { c, threshold }) => {
                assert!(c < threshold);
                assert_eq!(c, cp.c);
            }
            other => panic!("expected capacity-condition error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(CapacityParams::new(0.0, 1.0, 20, 1.0).is_err());
        assert!(CapacityParams::new(0.5, 1.0, 1, 1.0).is_err());
    }
}
