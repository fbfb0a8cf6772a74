//! Smooth maps between unconstrained optimizer coordinates `u` and
//! constrained hyperparameter values `θ`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `θ = exp(u)`
    LogPositive,
    /// `θ = shift + log(1 + exp(u))`
    ShiftedSoftplus { shift: f64 },
    Identity,
}

/// Smallest value a positive parameter is mapped from; keeps `ln` finite for
/// specs that pin a parameter at exactly zero.
const POSITIVE_FLOOR: f64 = 1e-300;

fn softplus(u: f64) -> f64 {
    if u > 35.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

fn inverse_softplus(s: f64) -> f64 {
    if s > 35.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn to_constrained(&self, u: f64) -> f64 {
        match *self {
            Transform::LogPositive => u.exp(),
            Transform::ShiftedSoftplus { shift } => shift + softplus(u),
            Transform::Identity => u,
        }
    }

    pub fn to_free(&self, theta: f64) -> f64 {
        match *self {
            Transform::LogPositive => theta.max(POSITIVE_FLOOR).ln(),
            Transform::ShiftedSoftplus { shift } => inverse_softplus((theta - shift).max(POSITIVE_FLOOR)),
            Transform::Identity => theta,
        }
    }

    /// `dθ/du` at `u`.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Transform::LogPositive => u.exp(),
            Transform::ShiftedSoftplus { .. } => sigmoid(u),
            Transform::Identity => 1.0,
        }
    }

    pub fn admits(&self, theta: f64) -> bool {
        match *self {
            Transform::LogPositive => theta > 0.0 && theta.is_finite(),
            Transform::ShiftedSoftplus { shift } => theta > shift && theta.is_finite(),
            Transform::Identity => theta.is_finite(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
        assert!((inverse_softplus(softplus(-20.0)) + 20.0).abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_difference() {
        let h = 1e-6;
        for t in [Transform::LogPositive, Transform::ShiftedSoftplus { shift: 1.5 }, Transform::Identity] {
            for u in [-2.0, 0.0, 0.7, 3.0] {
                let fd = (t.to_constrained(u + h) - t.to_constrained(u - h)) / (2.0 * h);
                assert!((fd - t.derivative(u)).abs() < 1e-8 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn zero_pins_to_a_finite_coordinate() {
        let u = Transform::LogPositive.to_free(0.0);
        assert!(u.is_finite());
        assert!(Transform::LogPositive.to_constrained(u) < 1e-200);
    }
}
