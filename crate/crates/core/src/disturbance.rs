//! External wind disturbance: fixed magnitude, continuously rotating
//! direction.

use serde::{Deserialize, Serialize};

/// Rotating-direction wind, expressed as an equivalent world-frame
/// acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSpec {
    /// Acceleration magnitude (m/s^2), >= 0.
    pub magnitude: f64,
    /// Direction rotation rate (rad/s).
    pub angular_rate: f64,
    /// Initial direction (rad).
    pub phase: f64,
}

impl WindSpec {
    pub fn none() -> Self {
        Self { magnitude: 0.0, angular_rate: 0.0, phase: 0.0 }
    }
}

/// World-frame wind acceleration at time `t`.
pub fn wind_at(spec: &WindSpec, t: f64) -> [f64; 2] {
    let ang = spec.phase + spec.angular_rate * t;
    [spec.magnitude * ang.cos(), spec.magnitude * ang.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_magnitude_is_zero_everywhere() {
        let spec = WindSpec { magnitude: 0.0, angular_rate: 3.0, phase: 1.0 };
        for i in 0..50 {
            assert_eq!(wind_at(&spec, i as f64 * 0.33), [0.0, 0.0]);
        }
    }

    #[test]
    fn initial_direction_along_phase() {
        let spec = WindSpec { magnitude: 0.25, angular_rate: 5.0, phase: 0.0 };
        let w = wind_at(&spec, 0.0);
        assert_eq!(w, [0.25, 0.0]);
    }

    #[test]
    fn quarter_turn_rotates_to_y_axis() {
        let rate = 5.0;
        let a = 0.7;
        let spec = WindSpec { magnitude: a, angular_rate: rate, phase: 0.0 };
        let w = wind_at(&spec, PI / (2.0 * rate));
        assert!(w[0].abs() < 1e-12);
        assert!((w[1] - a).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_equals_magnitude(mag in 0.0..10.0f64, rate in -20.0..20.0f64,
                                 phase in -10.0..10.0f64, t in 0.0..100.0f64) {
            let spec = WindSpec { magnitude: mag, angular_rate: rate, phase };
            let w = wind_at(&spec, t);
            let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
            prop_assert!((norm - mag).abs() <= 1e-12 * (1.0 + mag));
        }

        #[test]
        fn periodic_in_direction_rotation(mag in 0.1..5.0f64, rate in 0.5..20.0f64,
                                          t in 0.0..50.0f64) {
            let spec = WindSpec { magnitude: mag, angular_rate: rate, phase: 0.3 };
            let period = 2.0 * PI / rate;
            let a = wind_at(&spec, t);
            let b = wind_at(&spec, t + period);
            prop_assert!((a[0] - b[0]).abs() < 1e-9);
            prop_assert!((a[1] - b[1]).abs() < 1e-9);
        }
    }
}
