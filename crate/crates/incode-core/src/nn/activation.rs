//! The generalized sinusoidal activation `a*sin(b*w0*z + c) + d` and the
//! raw-to-effective parameter transform.

/// The effective activation parameter quadruple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// The shared activation parameters, stored in raw (pre-transform) form.
///
/// The amplitude and frequency-scale components pass through `exp`, which
/// keeps their effective values strictly positive; the phase and offset pass
/// through unchanged. Raw `(0, 0, 0, 0)` therefore yields the identity
/// quadruple `(1, 1, 0, 0)` exactly, reducing the activation to a plain
/// sine layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationParams {
    raw: [f64; 4],
}

impl ActivationParams {
    pub fn from_raw(raw: [f64; 4]) -> Self {
        ActivationParams { raw }
    }

    /// Identity parameters: effective `(1, 1, 0, 0)`.
    pub fn identity() -> Self {
        ActivationParams { raw: [0.0; 4] }
    }

    /// Build from effective values. Amplitude and frequency scale must be
    /// strictly positive since they live behind `exp`.
    pub fn from_effective(a: f64, b: f64, c: f64, d: f64) -> crate::Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(crate::Error::Config(format!(
                "amplitude and frequency scale must be > 0, got a={a}, b={b}"
            )));
        }
        Ok(ActivationParams {
            raw: [a.ln(), b.ln(), c, d],
        })
    }

    #[inline]
    pub fn raw(&self) -> [f64; 4] {
        self.raw
    }

    #[inline]
    pub fn effective(&self) -> EffectiveParams {
        EffectiveParams {
            a: self.raw[0].exp(),
            b: self.raw[1].exp(),
            c: self.raw[2],
            d: self.raw[3],
        }
    }

    /// Chain rule factors mapping effective-parameter gradients back to raw
    /// parameters: `d(eff)/d(raw)` per component.
    #[inline]
    pub fn raw_jacobian(&self) -> [f64; 4] {
        [self.raw[0].exp(), self.raw[1].exp(), 1.0, 1.0]
    }
}

/// `a * sin(b * (omega0 * z) + c) + d`, elementwise.
#[inline]
pub fn incode_activation(z: f64, params: &EffectiveParams, omega0: f64) -> f64 {
    params.a * (params.b * (omega0 * z) + params.c).sin() + params.d
}

/// Applies the activation over a pre-activation slice.
pub fn activate_slice(z: &[f64], out: &mut [f64], params: &EffectiveParams, omega0: f64) {
    debug_assert_eq!(z.len(), out.len());
    for (dst, &zv) in out.iter_mut().zip(z) {
        *dst = params.a * (params.b * (omega0 * zv) + params.c).sin() + params.d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_params_reduce_to_plain_sine() {
        let p = ActivationParams::identity().effective();
        for i in 0..100 {
            let z = (i as f64 - 50.0) * 0.137;
            let got = incode_activation(z, &p, 30.0);
            let plain = (30.0 * z).sin();
            assert_eq!(got, plain, "must be bit-identical at z={z}");
        }
    }

    #[test]
    fn zero_preactivation_gives_offset_plus_phase_sine() {
        // sin(0) = 0, so only the vertical shift survives when c = 0.
        let p = EffectiveParams {
            a: 2.0,
            b: 5.0,
            c: 0.0,
            d: 0.5,
        };
        assert_eq!(incode_activation(0.0, &p, 30.0), 0.5);
        assert_eq!(incode_activation(0.0, &p, 7.0), 0.5);
    }

    #[test]
    fn quarter_period_hits_peak() {
        let p = ActivationParams::identity().effective();
        let z = std::f64::consts::FRAC_PI_2 / 30.0;
        let y = incode_activation(z, &p, 30.0);
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_transform_keeps_amplitude_and_frequency_positive() {
        for raw in [-30.0, -1.0, 0.0, 0.5, 3.0] {
            let p = ActivationParams::from_raw([raw, raw, raw, raw]).effective();
            assert!(p.a > 0.0);
            assert!(p.b > 0.0);
            assert_eq!(p.c, raw);
            assert_eq!(p.d, raw);
        }
    }

    #[test]
    fn exp_product_identity_holds() {
        // exp(a_raw) * exp(b_raw) == exp(a_raw + b_raw) up to rounding; this is
        // what makes the product a*b >= 1 whenever a_raw + b_raw >= 0.
        let cases = [(0.3, -0.1), (1.5, 2.0), (-0.7, 0.7), (0.0, 0.0)];
        for (ar, br) in cases {
            let p = ActivationParams::from_raw([ar, br, 0.0, 0.0]).effective();
            let direct = (ar + br as f64).exp();
            assert!((p.a * p.b - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn from_effective_rejects_nonpositive_scales() {
        assert!(ActivationParams::from_effective(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ActivationParams::from_effective(1.0, -2.0, 0.0, 0.0).is_err());
        let p = ActivationParams::from_effective(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.raw(), [0.0; 4]);
    }
}
