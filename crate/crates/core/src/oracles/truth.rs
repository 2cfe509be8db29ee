//! Known monotone targets used for validation.

use serde::{Deserialize, Serialize};

use crate::dataset::Domain;
use crate::quadrature;

/// A monotone non-decreasing function with known values, one-sided limits
/// and integrals.
pub trait Truth {
    fn domain(&self) -> Domain;

    /// Value at `x`; callers keep `x` inside [`Truth::domain`].
    fn value(&self, x: f64) -> f64;

    /// Limit from the left at `x`.
    fn left_limit(&self, x: f64) -> f64 {
        self.value(x)
    }

    /// Limit from the right at `x`.
    fn right_limit(&self, x: f64) -> f64 {
        self.value(x)
    }

    /// Abscissae where the function may jump, ascending.
    fn jumps(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `∫_lo^hi F`, split at the jumps so each piece is smooth.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        let mut a = lo;
        for j in self.jumps() {
            if j > a && j < hi {
                total += quadrature::integrate(|x| self.value(x), a, j);
                a = j;
            }
        }
        total + quadrature::integrate(|x| self.value(x), a, hi)
    }
}

// Continuous case, left branch a1 exp(x^3) + b1.
fn a1() -> f64 {
    -1.0 / (2.0 * (1f64.exp() - (27.0f64 / 8.0).exp()))
}

fn b1() -> f64 {
    let e = (19.0f64 / 8.0).exp();
    (3.0 - 2.0 * e) / (2.0 * (1.0 - e))
}

/// The two validation targets on `[1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruth {
    /// `a1 e^{x³} + b1` on `[1, 1.5]`, `a2 e^{(3-x)³} + b2` on `[1.5, 2]`.
    Continuous,
    /// Same left branch; an increasing `a2 e^{x³} + b2` on `(1.5, 2]` that
    /// jumps from 1.5 to 1.6.
    Discontinuous,
}

#[derive(Debug, Clone, Copy)]
pub struct Constants {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

pub const JUMP_AT: f64 = 1.5;

impl GroundTruth {
    pub fn constants(self) -> Constants {
        let (a1, b1) = (a1(), b1());
        match self {
            GroundTruth::Continuous => Constants {
                a1,
                b1,
                a2: -a1,
                b2: 2.0 * a1 * (27.0f64 / 8.0).exp() + b1,
            },
            GroundTruth::Discontinuous => {
                let e = (37.0f64 / 8.0).exp();
                Constants {
                    a1,
                    b1,
                    a2: 2.0 / (5.0 * (8f64.exp() - (27.0f64 / 8.0).exp())),
                    b2: (10.0 - 8.0 * e) / (5.0 * (1.0 - e)),
                }
            }
        }
    }

    fn left_branch(self, x: f64) -> f64 {
        let c = self.constants();
        c.a1 * (x * x * x).exp() + c.b1
    }

    fn right_branch(self, x: f64) -> f64 {
        let c = self.constants();
        match self {
            GroundTruth::Continuous => {
                let t = 3.0 - x;
                c.a2 * (t * t * t).exp() + c.b2
            }
            GroundTruth::Discontinuous => c.a2 * (x * x * x).exp() + c.b2,
        }
    }

    /// Checked evaluation on `[1, 2]`.
    pub fn evaluate(self, x: f64) -> Option<f64> {
        self.domain().contains(x).then(|| self.value(x))
    }
}

impl Truth for GroundTruth {
    fn domain(&self) -> Domain {
        Domain { lo: 1.0, hi: 2.0 }
    }

    fn value(&self, x: f64) -> f64 {
        if x <= JUMP_AT {
            self.left_branch(x)
        } else {
            self.right_branch(x)
        }
    }

    fn right_limit(&self, x: f64) -> f64 {
        if x == JUMP_AT {
            self.right_branch(x)
        } else {
            self.value(x)
        }
    }

    fn jumps(&self) -> Vec<f64> {
        // The continuous target still changes formula here.
        vec![JUMP_AT]
    }
}

/// `slope * x + intercept` on a domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub slope: f64,
    pub intercept: f64,
    pub domain: Domain,
}

impl Truth for Linear {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        0.5 * self.slope * (hi * hi - lo * lo) + self.intercept * (hi - lo)
    }
}

/// CDF of the uniform law on `[0, 1]`, viewed on `domain`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformCdf {
    pub domain: Domain,
}

impl Truth for UniformCdf {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
}

/// CDF of Beta(2, 2): `3t² − 2t³` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beta22Cdf {
    pub domain: Domain,
}

impl Truth for Beta22Cdf {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn value(&self, x: f64) -> f64 {
        let t = x.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_endpoints() {
        let f = GroundTruth::Continuous;
        assert!((f.value(1.0) - 1.0).abs() < 1e-4);
        assert!((f.value(1.5) - 1.5).abs() < 1e-4);
        assert!((f.value(2.0) - 2.0).abs() < 1e-4);
        // Both branches meet at the junction.
        assert!((f.left_branch(1.5) - f.right_branch(1.5)).abs() < 1e-12);
        let c = f.constants();
        assert!((c.a1 - 0.018_863_8).abs() < 1e-6);
        assert!((c.b1 - 0.948_723_3).abs() < 1e-6);
    }

    #[test]
    fn discontinuous_jump() {
        let f = GroundTruth::Discontinuous;
        assert!((f.value(1.5) - 1.5).abs() < 1e-4);
        assert!((f.right_limit(1.5) - 1.6).abs() < 1e-3);
        assert!((f.value(1.5 + 1e-12) - 1.6).abs() < 1e-3);
        assert!((f.value(2.0) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn both_targets_are_increasing() {
        for f in [GroundTruth::Continuous, GroundTruth::Discontinuous] {
            let mut prev = f.value(1.0);
            for k in 1..=2000 {
                let v = f.value(1.0 + k as f64 / 2000.0);
                assert!(v > prev, "{f:?} not increasing at step {k}");
                prev = v;
            }
        }
    }

    #[test]
    fn checked_evaluate() {
        assert!(GroundTruth::Continuous.evaluate(0.99).is_none());
        assert!(GroundTruth::Continuous.evaluate(2.01).is_none());
        assert!(GroundTruth::Discontinuous.evaluate(1.2).is_some());
    }

    #[test]
    fn integral_matches_fine_midpoint_rule() {
        for f in [GroundTruth::Continuous, GroundTruth::Discontinuous] {
            let n = 200_000;
            let h = 1.0 / n as f64;
            let riemann: f64 = (0..n)
                .map(|k| f.value(1.0 + (k as f64 + 0.5) * h) * h)
                .sum();
            assert!((f.integral(1.0, 2.0) - riemann).abs() < 1e-8);
        }
        // Symmetry of the continuous target about (1.5, 1.5).
        let cont = GroundTruth::Continuous;
        assert!((cont.integral(1.0, 2.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cdf_targets() {
        let d = Domain::new(0.0, 1.0).unwrap();
        let b = Beta22Cdf { domain: d };
        assert_eq!(b.value(0.5), 0.5);
        assert_eq!(b.value(1.0), 1.0);
        assert!((b.integral(0.0, 1.0) - 0.5).abs() < 1e-14);
        let u = UniformCdf { domain: d };
        assert_eq!(u.value(0.25), 0.25);
    }
}
