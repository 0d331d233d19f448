//! Time reparametrisations φ for the generalised log-Harnack inequality.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// An increasing schedule with `φ(0) = 0` and right-derivative `φ′(0⁺) = 1`.
///
/// Piecewise-C¹ schedules are accepted; their kinks are reported through
/// [`PhiSchedule::breakpoints`] so quadratures can split there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSchedule {
    Identity,
    /// `φ(r) = r + c·r²`.
    Quadratic { c: f64 },
    /// `φ(r) = r` up to `t/2`, then slope `(t + 2s)/t`, so that
    /// `φ(t) = t + s`.
    PiecewiseH1 { t: f64, s: f64 },
    /// Piecewise-linear interpolation of `(knots[i], values[i])`.
    UserTable { knots: Vec<f64>, values: Vec<f64> },
}

impl PhiSchedule {
    /// Short identifier used in report witnesses.
    pub fn id(&self) -> String {
        match self {
            PhiSchedule::Identity => "identity".into(),
            PhiSchedule::Quadratic { c } => format!("quadratic(c={c})"),
            PhiSchedule::PiecewiseH1 { t, s } => format!("piecewise_h1(t={t},s={s})"),
            PhiSchedule::UserTable { knots, .. } => format!("user_table({} knots)", knots.len()),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            PhiSchedule::Identity => true,
            PhiSchedule::Quadratic { c } => *c == 0.0,
            PhiSchedule::PiecewiseH1 { s, .. } => *s == 0.0,
            PhiSchedule::UserTable { knots, values } => knots.iter().zip(values).all(|(k, v)| k == v),
        }
    }

    /// Check the schedule is admissible on `[0, t]`.
    pub fn validate(&self, t: f64) -> Result<()> {
        let bad = |m: String| Err(BenchError::InvalidArgument(format!("phi schedule: {m}")));
        match self {
            PhiSchedule::Identity => Ok(()),
            PhiSchedule::Quadratic { c } => {
                if !c.is_finite() || 1.0 + 2.0 * c * t < 0.0 {
                    return bad(format!("r + {c}r² is not nondecreasing on [0, {t}]"));
                }
                Ok(())
            }
            PhiSchedule::PiecewiseH1 { t: t0, s } => {
                if !(*s >= 0.0) || (t0 - t).abs() > 1e-12 * t.max(1.0) {
                    return bad(format!("piecewise_h1 built for t = {t0}, s = {s} used at t = {t}"));
                }
                Ok(())
            }
            PhiSchedule::UserTable { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return bad("table needs at least two knots and matching values".into());
                }
                if knots[0] != 0.0 || values[0] != 0.0 {
                    return bad("table must start at (0, 0)".into());
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) || values.windows(2).any(|w| w[1] < w[0]) {
                    return bad("knots must increase and values must not decrease".into());
                }
                let slope = (values[1] - values[0]) / (knots[1] - knots[0]);
                if (slope - 1.0).abs() > 1e-12 {
                    return bad(format!("initial slope {slope} is not 1"));
                }
                if *knots.last().unwrap() < t {
                    return bad(format!("table ends before t = {t}"));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            PhiSchedule::Identity => r,
            PhiSchedule::Quadratic { c } => r + c * r * r,
            PhiSchedule::PiecewiseH1 { t, s } => {
                let h = 0.5 * t;
                if r <= h {
                    r
                } else {
                    h + (t + 2.0 * s) / t * (r - h)
                }
            }
            PhiSchedule::UserTable { knots, values } => {
                let k = segment(knots, r);
                let w = (r - knots[k]) / (knots[k + 1] - knots[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// Derivative (right-derivative at kinks).
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            PhiSchedule::Identity => 1.0,
            PhiSchedule::Quadratic { c } => 1.0 + 2.0 * c * r,
            PhiSchedule::PiecewiseH1 { t, s } => {
                if r < 0.5 * t {
                    1.0
                } else {
                    (t + 2.0 * s) / t
                }
            }
            PhiSchedule::UserTable { knots, values } => {
                let k = segment(knots, r);
                (values[k + 1] - values[k]) / (knots[k + 1] - knots[k])
            }
        }
    }

    /// Interior points of `(0, t)` where φ′ jumps.
    pub fn breakpoints(&self, t: f64) -> Vec<f64> {
        match self {
            PhiSchedule::PiecewiseH1 { t: t0, .. } => vec![0.5 * t0].into_iter().filter(|&b| b > 0.0 && b < t).collect(),
            PhiSchedule::UserTable { knots, .. } => knots.iter().copied().filter(|&b| b > 0.0 && b < t).collect(),
            _ => Vec::new(),
        }
    }
}

fn segment(knots: &[f64], r: f64) -> usize {
    let last = knots.len() - 2;
    match knots.iter().position(|&k| k > r) {
        Some(0) => 0,
        Some(i) => (i - 1).min(last),
        None => last,
    }
}
