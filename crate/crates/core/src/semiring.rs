//! Expectation semiring in normalized form.
//!
//! An element carries `(log_mass, risk)` where `risk` is the expected cost
//! conditioned on the accumulated mass, not the mass-weighted total. In this
//! parameterization `times` adds risks along a path and `plus` takes a
//! mass-weighted average, which keeps everything finite in the log domain.
//! Zero mass is canonically `(LOG_ZERO, 0)`.

use crate::math::{logsumexp2, LOG_ZERO};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ExpectationValue {
    pub log_mass: f64,
    pub risk: f64,
}

impl ExpectationValue {
    /// Additive identity: no mass.
    pub const ZERO: ExpectationValue = ExpectationValue {
        log_mass: LOG_ZERO,
        risk: 0.0,
    };

    /// Multiplicative identity: unit mass, no accumulated risk.
    pub const ONE: ExpectationValue = ExpectationValue {
        log_mass: 0.0,
        risk: 0.0,
    };

    pub fn new(log_mass: f64, risk: f64) -> Self {
        if log_mass == LOG_ZERO {
            return Self::ZERO;
        }
        ExpectationValue { log_mass, risk }
    }

    pub fn is_zero(self) -> bool {
        self.log_mass == LOG_ZERO
    }

    /// Semiring addition: log-masses combine by logsumexp, risks by the
    /// mass-weighted average.
    pub fn plus(self, other: Self) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let log_mass = logsumexp2(self.log_mass, other.log_mass);
        let wa = (self.log_mass - log_mass).exp();
        let wb = (other.log_mass - log_mass).exp();
        ExpectationValue {
            log_mass,
            risk: wa * self.risk + wb * other.risk,
        }
    }

    /// Semiring multiplication against an edge `(log_weight, risk)`:
    /// masses multiply, risks add.
    pub fn times(self, edge_log_weight: f64, edge_risk: f64) -> Self {
        if self.is_zero() {
            return Self::ZERO;
        }
        let log_mass = self.log_mass + edge_log_weight;
        if log_mass == LOG_ZERO {
            return Self::ZERO;
        }
        ExpectationValue {
            log_mass,
            risk: self.risk + edge_risk,
        }
    }
}

/// `x (+) y`, the semiring addition.
pub fn exp_plus(x: ExpectationValue, y: ExpectationValue) -> ExpectationValue {
    x.plus(y)
}

/// `x (*) (w, r)`, the semiring multiplication by an edge.
pub fn exp_times(x: ExpectationValue, edge_log_weight: f64, edge_risk: f64) -> ExpectationValue {
    x.times(edge_log_weight, edge_risk)
}

/// Adjoint of an expectation value: derivatives of some scalar objective
/// with respect to the two stored components.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct EvAdjoint {
    pub d_log_mass: f64,
    pub d_risk: f64,
}

impl EvAdjoint {
    pub const ZERO: EvAdjoint = EvAdjoint {
        d_log_mass: 0.0,
        d_risk: 0.0,
    };

    pub fn add(&mut self, other: EvAdjoint) {
        self.d_log_mass += other.d_log_mass;
        self.d_risk += other.d_risk;
    }
}

/// Given `total = (+)_i c_i` with stored forward value `total`, returns the
/// adjoint of one contribution `c` from the adjoint of `total`.
///
/// With `w = exp(c.log_mass - total.log_mass)`:
///   d total.log_mass / d c.log_mass = w
///   d total.risk     / d c.log_mass = w * (c.risk - total.risk)
///   d total.risk     / d c.risk     = w
pub fn plus_contribution_adjoint(
    total: ExpectationValue,
    total_adj: EvAdjoint,
    c: ExpectationValue,
) -> EvAdjoint {
    if c.is_zero() || total.is_zero() {
        return EvAdjoint::ZERO;
    }
    let w = (c.log_mass - total.log_mass).exp();
    EvAdjoint {
        d_log_mass: total_adj.d_log_mass * w + total_adj.d_risk * w * (c.risk - total.risk),
        d_risk: total_adj.d_risk * w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(m: f64, r: f64) -> ExpectationValue {
        ExpectationValue::new(m, r)
    }

    fn close(a: ExpectationValue, b: ExpectationValue, tol: f64) -> bool {
        if a.is_zero() && b.is_zero() {
            return true;
        }
        (a.log_mass - b.log_mass).abs() <= tol && (a.risk - b.risk).abs() <= tol
    }

    #[test]
    fn plus_examples() {
        // equal masses average the risks
        let z = ev(0.5f64.ln(), 1.0).plus(ev(0.5f64.ln(), 3.0));
        assert!((z.log_mass - 0.0).abs() < 1e-12);
        assert!((z.risk - 2.0).abs() < 1e-12);
        // zero element is neutral
        let z = ExpectationValue::ZERO.plus(ev(0.3f64.ln(), 5.0));
        assert!(close(z, ev(0.3f64.ln(), 5.0), 1e-12));
        // hand computation: 0.9 * 2 + 0.1 * 12 = 3
        let z = ev(0.9f64.ln(), 2.0).plus(ev(0.1f64.ln(), 12.0));
        assert!((z.log_mass - 0.0).abs() < 1e-12);
        assert!((z.risk - 3.0).abs() < 1e-12);
    }

    #[test]
    fn times_examples() {
        // product of masses, sum of risks
        let z = ev(0.5f64.ln(), 1.0).times(0.5f64.ln(), 0.6);
        assert!((z.log_mass - 0.25f64.ln()).abs() < 1e-12);
        assert!((z.risk - 1.6).abs() < 1e-12);
        // one element is neutral
        let x = ev(-0.7, 2.5);
        assert_eq!(x.times(0.0, 0.0), x);
        // zero annihilates, canonically
        assert_eq!(ExpectationValue::ZERO.times(0.5f64.ln(), 1.0), ExpectationValue::ZERO);
        assert_eq!(ev(-0.5, 1.0).times(crate::math::LOG_ZERO, 1.0), ExpectationValue::ZERO);
    }

    fn arb_log_mass() -> impl Strategy<Value = f64> {
        -6.0..2.0f64
    }

    // a full semiring element as (log_mass, risk); `times` of two elements
    // is exactly `times(edge)` with the edge taken from the second element
    fn arb_ev() -> impl Strategy<Value = ExpectationValue> {
        (
            prop_oneof![4 => arb_log_mass(), 1 => Just(LOG_ZERO)],
            -4.0..4.0f64,
        )
            .prop_map(|(m, r)| ExpectationValue::new(m, r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn semiring_axioms(a in arb_ev(), b in arb_ev(), c in arb_ev()) {
            let tol = 1e-12;
            let t = |x: ExpectationValue, y: ExpectationValue| x.times(y.log_mass, y.risk);
            // commutativity and associativity of plus
            prop_assert!(close(a.plus(b), b.plus(a), tol));
            prop_assert!(close(a.plus(b).plus(c), a.plus(b.plus(c)), tol));
            // associativity of times
            prop_assert!(close(t(t(a, b), c), t(a, t(b, c)), tol));
            // identities
            prop_assert!(close(a.plus(ExpectationValue::ZERO), a, tol));
            prop_assert!(close(t(a, ExpectationValue::ONE), a, tol));
            prop_assert!(close(t(ExpectationValue::ZERO, a), ExpectationValue::ZERO, tol));
            // distributivity: a * (b + c) = a*b + a*c
            prop_assert!(close(t(a, b.plus(c)), t(a, b).plus(t(a, c)), tol));
        }
    }

    #[test]
    fn plus_adjoint_matches_finite_differences() {
        let total_of = |xs: &[(f64, f64)]| {
            xs.iter()
                .fold(ExpectationValue::ZERO, |acc, &(m, r)| acc.plus(ev(m, r)))
        };
        let parts = [( -0.4, 1.3), (-1.9, 0.2), (-0.9, -2.0)];
        let total = total_of(&parts);
        let adj = EvAdjoint { d_log_mass: 0.7, d_risk: -1.1 };
        // scalar objective g = adj . total, checked coordinate by coordinate
        let g = |xs: &[(f64, f64)]| {
            let t = total_of(xs);
            adj.d_log_mass * t.log_mass + adj.d_risk * t.risk
        };
        let h = 1e-6;
        for i in 0..parts.len() {
            let got = plus_contribution_adjoint(total, adj, ev(parts[i].0, parts[i].1));
            for comp in 0..2 {
                let mut up = parts;
                let mut dn = parts;
                if comp == 0 {
                    up[i].0 += h;
                    dn[i].0 -= h;
                } else {
                    up[i].1 += h;
                    dn[i].1 -= h;
                }
                let fd = (g(&up) - g(&dn)) / (2.0 * h);
                let analytic = if comp == 0 { got.d_log_mass } else { got.d_risk };
                assert!(
                    (fd - analytic).abs() < 1e-7,
                    "part {i} comp {comp}: fd {fd} vs {analytic}"
                );
            }
        }
    }
}
