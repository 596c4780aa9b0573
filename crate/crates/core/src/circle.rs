//! Circle arithmetic on S¹ = ℝ/ℤ: points, lifts, the arc metric, the interval
//! family of left-closed right-open arcs (plus singletons and the full
//! circle) and the Hausdorff distance between its members.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A point of S¹, stored as its unique representative in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub const ZERO: CirclePoint = CirclePoint(0.0);

    /// Projects any real number onto the circle.
    #[inline]
    pub fn new(value: f64) -> Self {
        CirclePoint(wrap_unit(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// The representative lift in `[0, 1)`.
    #[inline]
    pub fn lift(self) -> LiftValue {
        LiftValue(self.0)
    }

    /// Moves the point by `delta` along the circle.
    #[inline]
    pub fn offset(self, delta: f64) -> Self {
        CirclePoint::new(self.0 + delta)
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A real representative x̃ of a circle point.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiftValue(pub f64);

impl LiftValue {
    #[inline]
    pub fn project(self) -> CirclePoint {
        CirclePoint::new(self.0)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `x - floor(x)`, folded so the result is always strictly below one.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// The arc-length metric on S¹, with values in `[0, 1/2]`.
#[inline]
pub fn circle_distance(p: CirclePoint, q: CirclePoint) -> f64 {
    let d = (p.0 - q.0).abs();
    d.min(1.0 - d)
}

/// Distance between two lifts measured on the circle.
#[inline]
pub fn lift_distance(x: f64, y: f64) -> f64 {
    let d = wrap_unit(x - y);
    d.min(1.0 - d)
}

/// Member of the interval family: a left-closed right-open arc
/// `[left, left + length)`, a single point, or the whole circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircleInterval {
    Arc { left: CirclePoint, length: f64 },
    Singleton { point: CirclePoint },
    Full,
}

impl CircleInterval {
    /// Builds an arc; lengths `>= 1` give the full circle and length zero a
    /// singleton.
    pub fn arc(left: CirclePoint, length: f64) -> Self {
        if length >= 1.0 {
            CircleInterval::Full
        } else if length <= 0.0 {
            CircleInterval::Singleton { point: left }
        } else {
            CircleInterval::Arc { left, length }
        }
    }

    /// Arc spanned by two lifts `lo <= hi`.
    pub fn from_lifts(lo: f64, hi: f64) -> Self {
        CircleInterval::arc(CirclePoint::new(lo), hi - lo)
    }

    pub fn singleton(point: CirclePoint) -> Self {
        CircleInterval::Singleton { point }
    }

    pub fn length(&self) -> f64 {
        match *self {
            CircleInterval::Arc { length, .. } => length,
            CircleInterval::Singleton { .. } => 0.0,
            CircleInterval::Full => 1.0,
        }
    }

    /// Left endpoint; `None` for the full circle.
    pub fn left(&self) -> Option<CirclePoint> {
        match *self {
            CircleInterval::Arc { left, .. } => Some(left),
            CircleInterval::Singleton { point } => Some(point),
            CircleInterval::Full => None,
        }
    }

    /// Right endpoint of the closure; `None` for the full circle.
    pub fn right(&self) -> Option<CirclePoint> {
        match *self {
            CircleInterval::Arc { left, length } => Some(left.offset(length)),
            CircleInterval::Singleton { point } => Some(point),
            CircleInterval::Full => None,
        }
    }

    /// Membership with the left-closed right-open convention; arcs may wrap
    /// through zero.
    pub fn contains(&self, x: CirclePoint) -> bool {
        match *self {
            CircleInterval::Arc { left, length } => wrap_unit(x.0 - left.0) < length,
            CircleInterval::Singleton { point } => x == point,
            CircleInterval::Full => true,
        }
    }

    /// Distance from `x` to the closure of the set.
    pub fn distance_to(&self, x: CirclePoint) -> f64 {
        match *self {
            CircleInterval::Full => 0.0,
            CircleInterval::Singleton { point } => circle_distance(x, point),
            CircleInterval::Arc { left, length } => {
                let t = wrap_unit(x.0 - left.0);
                if t <= length {
                    0.0
                } else {
                    // gap of the complement is (length, 1)
                    (t - length).min(1.0 - t)
                }
            }
        }
    }

    /// Whether the two closures are disjoint.
    pub fn is_disjoint_closure(&self, other: &CircleInterval) -> bool {
        match (self, other) {
            (CircleInterval::Full, _) | (_, CircleInterval::Full) => false,
            _ => {
                let a_left = self.left().unwrap();
                let b_left = other.left().unwrap();
                !other.contains_closure(a_left) && !self.contains_closure(b_left)
            }
        }
    }

    fn contains_closure(&self, x: CirclePoint) -> bool {
        self.distance_to(x) == 0.0
    }

    /// Supremum over the closure of `self` of the distance to `other`.
    ///
    /// The distance to an arc is piecewise linear along `self`, so the
    /// supremum is attained at an endpoint of `self` or at the midpoint of the
    /// gap of `other` when that midpoint lies in `self`.
    fn directed_sup(&self, other: &CircleInterval) -> f64 {
        if let CircleInterval::Full = other {
            return 0.0;
        }
        let mut candidates: Vec<CirclePoint> = Vec::with_capacity(3);
        match *self {
            CircleInterval::Full => {}
            _ => {
                candidates.push(self.left().unwrap());
                candidates.push(self.right().unwrap());
            }
        }
        let gap_mid = other.left().unwrap().offset(other.length() + (1.0 - other.length()) / 2.0);
        if self.contains_closure(gap_mid) {
            candidates.push(gap_mid);
        }
        candidates
            .into_iter()
            .map(|x| other.distance_to(x))
            .fold(0.0, f64::max)
    }
}

/// Hausdorff distance between two members of the interval family.
///
/// Uses the endpoint formula `max(d(left, left'), d(right, right'))` when both
/// arcs are proper and the endpoint displacement is below half of each
/// complement; otherwise falls back to the exact candidate-point evaluation.
pub fn hausdorff_distance(a: &CircleInterval, b: &CircleInterval) -> f64 {
    if let Some(d) = endpoint_hausdorff(a, b) {
        return d;
    }
    hausdorff_exact(a, b)
}

/// The endpoint formula, when its validity condition holds.
pub fn endpoint_hausdorff(a: &CircleInterval, b: &CircleInterval) -> Option<f64> {
    match (a, b) {
        (CircleInterval::Full, _) | (_, CircleInterval::Full) => None,
        _ => {
            let dl = circle_distance(a.left()?, b.left()?);
            let dr = circle_distance(a.right()?, b.right()?);
            let d = dl.max(dr);
            let window = ((1.0 - a.length()) / 2.0).min((1.0 - b.length()) / 2.0);
            (d < window).then_some(d)
        }
    }
}

/// Exact Hausdorff distance from the candidate-point characterisation.
pub fn hausdorff_exact(a: &CircleInterval, b: &CircleInterval) -> f64 {
    a.directed_sup(b).max(b.directed_sup(a))
}
