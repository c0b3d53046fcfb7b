//! Float shims that resolve to `std` intrinsics when available and to `libm`
//! otherwise, so the numeric kernels compile identically under `no_std`.

macro_rules! shim {
    ($(#[$doc:meta])* $name:ident, $std:ident, $libm:ident, 1) => {
        $(#[$doc])*
        #[inline(always)]
        pub fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$std()
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x)
            }
        }
    };
    ($(#[$doc:meta])* $name:ident, $std:ident, $libm:ident, 2) => {
        $(#[$doc])*
        #[inline(always)]
        pub fn $name(x: f64, y: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$std(y)
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x, y)
            }
        }
    };
}

shim!(sqrt, sqrt, sqrt, 1);
shim!(sin, sin, sin, 1);
shim!(cos, cos, cos, 1);
shim!(asin, asin, asin, 1);
shim!(acos, acos, acos, 1);
shim!(exp, exp, exp, 1);
shim!(ln, ln, log, 1);
shim!(tanh, tanh, tanh, 1);
shim!(floor, floor, floor, 1);
shim!(ceil, ceil, ceil, 1);
shim!(round, round, round, 1);
shim!(abs, abs, fabs, 1);
shim!(atan2, atan2, atan2, 2);
shim!(powf, powf, pow, 2);
shim!(hypot, hypot, hypot, 2);

/// Numerically safe logistic function.
#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Median of a slice (average of the two middle elements for even lengths).
/// Returns `None` for an empty slice or when any element is NaN.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted: alloc::vec::Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_definition_and_is_stable() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(2.0) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        // saturates without NaN at extreme inputs
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
    }

    #[test]
    fn median_handles_odd_even_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[1.0, f64::NAN]), None);
    }
}
