//! Pointwise activation functions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    ReLU,
    Erf,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::ReLU,
        ActivationKind::Erf,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ];

    /// Evaluates φ(u), rejecting non-finite input.
    pub fn eval(self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("activation input {u} is not finite")));
        }
        Ok(self.apply(u))
    }

    /// Unchecked evaluation for inner loops whose inputs are finite by
    /// construction.
    ///
    /// `Erf` uses `libm::erf`, the FreeBSD msun implementation: rational
    /// approximations on |u| < 0.84375, [0.84375, 1.25), [1.25, 1/0.35),
    /// [1/0.35, 6) and saturation beyond 6, with error below 1 ulp.
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            ActivationKind::ReLU => u.max(0.0),
            ActivationKind::Erf => libm::erf(u),
            ActivationKind::Tanh => u.tanh(),
            ActivationKind::Identity => u,
        }
    }

    /// Points where φ is not differentiable. Quadrature splits its panels
    /// there.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            ActivationKind::ReLU => &[0.0],
            _ => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::ReLU => "relu",
            ActivationKind::Erf => "erf",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }
}

/// Convenience wrapper matching the free-function form.
pub fn eval_activation(kind: ActivationKind, u: f64) -> Result<f64> {
    kind.eval(u)
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActivationKind::ReLU),
            "erf" => Ok(ActivationKind::Erf),
            "tanh" => Ok(ActivationKind::Tanh),
            "identity" => Ok(ActivationKind::Identity),
            other => Err(Error::Parse(format!(
                "unknown activation '{other}' (expected relu, erf, tanh or identity)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        assert_eq!(eval_activation(ActivationKind::ReLU, -1.0).unwrap(), 0.0);
        assert_eq!(eval_activation(ActivationKind::Erf, 0.0).unwrap(), 0.0);
        assert_eq!(eval_activation(ActivationKind::Identity, 3.5).unwrap(), 3.5);
    }

    #[test]
    fn rejects_non_finite() {
        for kind in ActivationKind::ALL {
            assert!(matches!(kind.eval(f64::NAN), Err(Error::Domain(_))));
            assert!(matches!(kind.eval(f64::INFINITY), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn erf_reference_values() {
        // erf(0.5), erf(1), erf(2) to 17 digits (Abramowitz & Stegun tables / mpmath)
        let cases = [
            (0.5, 0.520_499_877_813_046_5),
            (1.0, 0.842_700_792_949_714_9),
            (2.0, 0.995_322_265_018_952_7),
        ];
        for (u, want) in cases {
            assert!((ActivationKind::Erf.apply(u) - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("gelu".parse::<ActivationKind>().is_err());
    }

    proptest! {
        #[test]
        fn relu_positively_homogeneous(c in 0.0f64..100.0, u in -100.0f64..100.0) {
            let lhs = ActivationKind::ReLU.apply(c * u);
            let rhs = c * ActivationKind::ReLU.apply(u);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn erf_tanh_odd_and_bounded(u in -50.0f64..50.0) {
            for kind in [ActivationKind::Erf, ActivationKind::Tanh] {
                let a = kind.apply(u);
                prop_assert_eq!(a, -kind.apply(-u));
                prop_assert!(a.abs() <= 1.0);
            }
        }
    }
}
