//! Principal branch of the Lambert W function.

use super::HopfieldError;

const MAX_ITER: usize = 50;
const BRANCH_POINT: f64 = -1.0 / std::f64::consts::E;

/// `W₀(z)`: the `w ≥ -1` solving `w·eʷ = z`, for `z ≥ -1/e`.
///
/// Halley iteration started from a logarithmic guess (or the branch-point
/// series close to `-1/e`).
pub fn lambert_w0(z: f64) -> Result<f64, HopfieldError> {
    if z.is_nan() || z < BRANCH_POINT - 4.0 * f64::EPSILON {
        return Err(HopfieldError::Domain(format!(
            "lambert_w0 is defined for z >= -1/e, got {z}"
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z <= BRANCH_POINT {
        return Ok(-1.0);
    }
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if z < -0.25 {
        let p = (2.0 * (std::f64::consts::E * z + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        z.ln_1p()
    } else {
        let l = z.ln();
        l - l.ln()
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(z: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, z.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn exact_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(BRANCH_POINT).unwrap() + 1.0).abs() < 1e-7);
    }

    #[test]
    fn omega_constant_matches_bisection() {
        let w = lambert_w0(1.0).unwrap();
        assert!((w - bisect(1.0)).abs() < 1e-12);
        assert!((w - 0.567_143_290_4).abs() < 1e-10);
    }

    #[test]
    fn residual_is_tiny_across_range() {
        for &z in &[-0.36, -0.3, -0.1, 1e-8, 0.5, 2.0, 3.57, 10.0, 1e3, 1e10] {
            let w = lambert_w0(z).unwrap();
            assert!(
                (w * w.exp() - z).abs() <= 1e-12 * z.abs().max(1.0),
                "z={z} w={w}"
            );
            assert!((w - bisect(z)).abs() < 1e-9, "z={z}");
        }
    }

    #[test]
    fn below_branch_point_is_domain_error() {
        assert!(matches!(lambert_w0(-0.5), Err(HopfieldError::Domain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }
}
