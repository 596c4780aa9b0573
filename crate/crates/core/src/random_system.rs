//! Noise base, perturbation family and skew-product iteration.
//!
//! The noise space is the circle with Lebesgue measure driven by an irrational
//! rotation `ω ↦ ω + α`. Noise coordinates are kept in 64-bit fixed point so
//! that `θ^n` is exact for every integer `n`, including negative ones.

use crate::circle::{circle_distance, CirclePoint, CircleInterval};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// A noise coordinate ω ∈ S¹ in 64-bit fixed point (`bits / 2^64`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoisePoint(pub u64);

impl NoisePoint {
    pub fn from_circle(p: CirclePoint) -> Self {
        NoisePoint::from_f64(p.value())
    }

    /// Rounds a real number (taken mod 1) to the nearest fixed-point noise value.
    pub fn from_f64(x: f64) -> Self {
        let r = crate::circle::wrap_unit(x);
        let scaled = (r * TWO_POW_64).round();
        if scaled >= TWO_POW_64 {
            NoisePoint(0)
        } else {
            NoisePoint(scaled as u64)
        }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        crate::circle::wrap_unit(self.0 as f64 / TWO_POW_64)
    }

    #[inline]
    pub fn to_circle(self) -> CirclePoint {
        CirclePoint::new(self.to_f64())
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

impl fmt::Display for NoisePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// The base rotation θ(ω) = ω + α on S¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDynamics {
    alpha: NoisePoint,
    pub omega0: NoisePoint,
}

impl BaseDynamics {
    /// Golden-mean conjugate (√5 − 1)/2 rounded to a double.
    pub fn golden() -> Self {
        BaseDynamics::new((5f64.sqrt() - 1.0) / 2.0, 0.0)
    }

    pub fn new(alpha: f64, omega0: f64) -> Self {
        BaseDynamics {
            alpha: NoisePoint::from_f64(alpha),
            omega0: NoisePoint::from_f64(omega0),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.to_f64()
    }

    #[inline]
    pub fn theta(&self, omega: NoisePoint) -> NoisePoint {
        NoisePoint(omega.0.wrapping_add(self.alpha.0))
    }

    #[inline]
    pub fn theta_inv(&self, omega: NoisePoint) -> NoisePoint {
        NoisePoint(omega.0.wrapping_sub(self.alpha.0))
    }

    /// θ^n ω for any integer `n`.
    #[inline]
    pub fn theta_pow(&self, omega: NoisePoint, n: i64) -> NoisePoint {
        NoisePoint(omega.0.wrapping_add(self.alpha.0.wrapping_mul(n as u64)))
    }
}

impl Default for BaseDynamics {
    fn default() -> Self {
        BaseDynamics::golden()
    }
}

/// Raw parameters of the built-in family
/// `f̃(ω, x) = k·x + a·sin(2πx) + ε·sin(2π(x + ω))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub k: u32,
    pub a: f64,
    pub epsilon: f64,
    pub delta0: f64,
    pub eta: f64,
    /// Lower and upper lift endpoints of the trapping interval B̃ around p0 = 0.
    pub trap: (f64, f64),
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            k: 2,
            a: 0.02,
            epsilon: 0.01,
            delta0: 0.2,
            eta: 0.06,
            trap: (-0.1, 0.1),
        }
    }
}

impl FamilyParams {
    pub fn folding(k: u32) -> Self {
        FamilyParams {
            k,
            a: 0.0,
            epsilon: 0.0,
            ..FamilyParams::default()
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    #[inline]
    pub fn lift(&self, omega: f64, x: f64) -> f64 {
        self.k as f64 * x + self.a * (TAU * x).sin() + self.epsilon * (TAU * (x + omega)).sin()
    }

    #[inline]
    pub fn derivative(&self, omega: f64, x: f64) -> f64 {
        self.k as f64
            + TAU * self.a * (TAU * x).cos()
            + TAU * self.epsilon * (TAU * (x + omega)).cos()
    }

    /// Bound on |∂²f̃/∂x²|, the Lipschitz constant of the derivative in x.
    pub fn second_derivative_bound(&self) -> f64 {
        TAU * TAU * (self.a.abs() + self.epsilon.abs())
    }

    /// Bound on the Lipschitz constant of the derivative in ω.
    pub fn derivative_noise_lipschitz(&self) -> f64 {
        TAU * TAU * self.epsilon.abs()
    }

    /// Bound on |f̃(ω, x) − k·x|.
    pub fn amplitude(&self) -> f64 {
        self.a.abs() + self.epsilon.abs()
    }
}

/// Sampling resolution for hypothesis validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub omega_points: usize,
    pub x_points: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            omega_points: 256,
            x_points: 4096,
        }
    }
}

/// One verified inequality of the hypothesis regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub params: FamilyParams,
    /// Certified lower bound on inf f_0′.
    pub lambda0: f64,
    pub lambda: f64,
    /// Certified lower bound on inf_ω inf_x ∂f̃_ε/∂x.
    pub min_derivative: f64,
    /// Upper bound on sup_ω d_C⁰(f_ε(ω), f_0).
    pub c0_distance: f64,
    /// Numerically admissible upper end of the noise range for these constants.
    pub epsilon_max: f64,
    pub trap: (f64, f64),
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.failures().any(|c| c.name == name)
    }
}

fn invalid_family(failed: &[&HypothesisCheck]) -> Error {
    Error::InvalidFamily {
        violated: failed.iter().map(|c| c.name.clone()).collect(),
        detail: failed
            .iter()
            .map(|c| format!("{}: {} (lhs = {}, rhs = {})", c.name, c.statement, c.lhs, c.rhs))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn check(name: &str, statement: &str, lhs: f64, rhs: f64, passed: bool) -> HypothesisCheck {
    HypothesisCheck {
        name: name.to_string(),
        statement: statement.to_string(),
        lhs,
        rhs,
        passed,
    }
}

/// Certified minimum of `g` over `[0,1)` (and over ω if `omega_points > 1`),
/// given Lipschitz constants in x and ω.
fn certified_min<F: Fn(f64, f64) -> f64>(
    grid: ValidationGrid,
    lip_x: f64,
    lip_omega: f64,
    g: F,
) -> f64 {
    let nx = grid.x_points.max(1);
    let nw = grid.omega_points.max(1);
    let hx = 1.0 / nx as f64;
    let hw = 1.0 / nw as f64;
    let mut min = f64::INFINITY;
    for iw in 0..nw {
        let w = iw as f64 * hw;
        for ix in 0..nx {
            let v = g(w, ix as f64 * hx);
            if v < min {
                min = v;
            }
        }
    }
    let slack_w = if nw > 1 { lip_omega * hw / 2.0 } else { 0.0 };
    min - lip_x * hx / 2.0 - slack_w
}

fn lambda0_of(params: &FamilyParams, grid: ValidationGrid) -> f64 {
    let unperturbed = FamilyParams {
        epsilon: 0.0,
        ..*params
    };
    let g1 = ValidationGrid {
        omega_points: 1,
        ..grid
    };
    certified_min(g1, unperturbed.second_derivative_bound(), 0.0, |_, x| {
        unperturbed.derivative(0.0, x)
    })
}

fn min_derivative_of(params: &FamilyParams, grid: ValidationGrid) -> f64 {
    certified_min(
        grid,
        params.second_derivative_bound(),
        params.derivative_noise_lipschitz(),
        |w, x| params.derivative(w, x),
    )
}

/// sup_ω sup_x d_S¹(f_ε(ω)(x), f_0(x)) with a Lipschitz upper slack.
fn c0_distance_of(params: &FamilyParams, grid: ValidationGrid) -> f64 {
    if params.epsilon == 0.0 {
        return 0.0;
    }
    let nx = grid.x_points.max(1);
    let nw = grid.omega_points.max(1);
    let mut max: f64 = 0.0;
    for iw in 0..nw {
        let w = iw as f64 / nw as f64;
        for ix in 0..nx {
            let x = ix as f64 / nx as f64;
            let d = params.epsilon * (TAU * (x + w)).sin();
            max = max.max(circle_distance(CirclePoint::new(d), CirclePoint::ZERO));
        }
    }
    let lip = TAU * params.epsilon.abs();
    (max + lip / (2.0 * nx as f64) + lip / (2.0 * nw as f64)).min(0.5)
}

/// Worst-case margins of the trap inclusion B̃ ⊂ f̃(ω)(B̃): returns
/// (min_ω lo − f̃(ω, lo), min_ω f̃(ω, hi) − hi), both certified lower bounds.
fn trap_margins(params: &FamilyParams, grid: ValidationGrid) -> (f64, f64) {
    let (lo, hi) = params.trap;
    let nw = grid.omega_points.max(1);
    let lip = TAU * params.epsilon.abs();
    let slack = lip / (2.0 * nw as f64);
    let mut lo_margin = f64::INFINITY;
    let mut hi_margin = f64::INFINITY;
    for iw in 0..nw {
        let w = iw as f64 / nw as f64;
        lo_margin = lo_margin.min(lo - params.lift(w, lo));
        hi_margin = hi_margin.min(params.lift(w, hi) - hi);
    }
    (lo_margin - slack, hi_margin - slack)
}

fn regime_checks(params: &FamilyParams, grid: ValidationGrid) -> (f64, f64, f64, f64, Vec<HypothesisCheck>) {
    let k = params.k as f64;
    let lambda0 = lambda0_of(params, grid);
    let lambda = (lambda0 + 1.0) / 2.0;
    let min_der = min_derivative_of(params, grid);
    let c0 = c0_distance_of(params, grid);
    let (lo_m, hi_m) = trap_margins(params, grid);
    let (lo, hi) = params.trap;
    let mut checks = Vec::new();

    checks.push(check(
        "degree",
        "k >= 2 and f(x+1) - f(x) = k",
        k,
        2.0,
        params.k >= 2 && degree_identity_holds(params),
    ));
    checks.push(check(
        "expansion",
        "lambda0 = inf f0' > 1",
        lambda0,
        1.0,
        lambda0 > 1.0,
    ));
    checks.push(check(
        "uniform_expansion",
        "inf_w inf_x df/dx >= lambda = (lambda0 + 1)/2",
        min_der,
        lambda,
        lambda0 > 1.0 && min_der >= lambda,
    ));
    let delta_cap = 0.5 * (1.0 - 1.0 / k);
    checks.push(check(
        "delta0",
        "0 < delta0 < (1/2)(1 - 1/k)",
        params.delta0,
        delta_cap,
        params.delta0 > 0.0 && params.delta0 < delta_cap,
    ));
    let eta_cap = 0.5f64.min((lambda - 1.0) * params.delta0);
    checks.push(check(
        "eta",
        "0 < eta < min{1/2, (lambda - 1) delta0}",
        params.eta,
        eta_cap,
        params.eta > 0.0 && params.eta < eta_cap,
    ));
    checks.push(check(
        "c0_near",
        "sup_w d_C0(f_eps(w), f_0) < eta",
        c0,
        params.eta,
        c0 < params.eta,
    ));
    checks.push(check(
        "trap_length",
        "|B| <= delta0 and p0 = 0 in B",
        hi - lo,
        params.delta0,
        hi > lo && hi - lo <= params.delta0 && lo <= 0.0 && hi >= 0.0,
    ));
    checks.push(check(
        "trap_inclusion",
        "B subset f(w)(B) for every w",
        lo_m.min(hi_m),
        0.0,
        lo_m >= 0.0 && hi_m >= 0.0,
    ));
    (lambda0, lambda, min_der, c0, checks)
}

fn degree_identity_holds(params: &FamilyParams) -> bool {
    let k = params.k as f64;
    (0..64).all(|i| {
        let x = -2.0 + i as f64 * 0.071;
        let w = (i as f64 * 0.137).fract();
        let d = params.lift(w, x + 1.0) - params.lift(w, x);
        (d - k).abs() <= 1e-12 * (1.0 + k + x.abs())
    })
}

/// Largest ε (by bisection) for which every regime check passes with the other
/// constants held fixed.
fn admissible_epsilon(params: &FamilyParams, grid: ValidationGrid) -> f64 {
    let coarse = ValidationGrid {
        omega_points: grid.omega_points.min(64),
        x_points: grid.x_points.min(1024),
    };
    let ok = |eps: f64| {
        let p = FamilyParams {
            epsilon: eps,
            ..*params
        };
        regime_checks(&p, coarse).4.iter().all(|c| c.passed)
    };
    if !ok(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if ok(hi) {
        return hi;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Checks every standing hypothesis of the regime for `params`.
pub fn validate_hypotheses(params: &FamilyParams, grid: ValidationGrid) -> ValidationReport {
    let (lambda0, lambda, min_derivative, c0_distance, checks) = regime_checks(params, grid);
    ValidationReport {
        params: *params,
        lambda0,
        lambda,
        min_derivative,
        c0_distance,
        epsilon_max: admissible_epsilon(params, grid),
        trap: params.trap,
        checks,
    }
}

/// A validated random map family; every evaluation is pure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomMapFamily {
    params: FamilyParams,
    lambda0: f64,
    lambda: f64,
}

impl RandomMapFamily {
    pub fn new(params: FamilyParams) -> Result<Self> {
        Self::with_grid(params, ValidationGrid::default())
    }

    pub fn with_grid(params: FamilyParams, grid: ValidationGrid) -> Result<Self> {
        let (lambda0, lambda, _, _, checks) = regime_checks(&params, grid);
        let failed: Vec<&HypothesisCheck> = checks.iter().filter(|c| !c.passed).collect();
        if !failed.is_empty() {
            return Err(invalid_family(&failed));
        }
        Ok(RandomMapFamily {
            params,
            lambda0,
            lambda,
        })
    }

    pub fn from_report(report: &ValidationReport) -> Result<Self> {
        let failed: Vec<&HypothesisCheck> = report.failures().collect();
        if !failed.is_empty() {
            return Err(invalid_family(&failed));
        }
        Ok(RandomMapFamily {
            params: report.params,
            lambda0: report.lambda0,
            lambda: report.lambda,
        })
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn k(&self) -> u32 {
        self.params.k
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta0(&self) -> f64 {
        self.params.delta0
    }

    pub fn trap(&self) -> CircleInterval {
        CircleInterval::from_lifts(self.params.trap.0, self.params.trap.1)
    }

    pub fn trap_length(&self) -> f64 {
        self.params.trap.1 - self.params.trap.0
    }

    pub fn trap_midpoint(&self) -> f64 {
        0.5 * (self.params.trap.0 + self.params.trap.1)
    }

    /// Upper bound on the Lipschitz constant of f_ε(ω) on the circle.
    pub fn lipschitz(&self) -> f64 {
        self.params.k as f64 + TAU * self.params.amplitude()
    }

    /// Stable identity of the family used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let p = &self.params;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for word in [
            p.k as u64,
            p.a.to_bits(),
            p.epsilon.to_bits(),
            p.trap.0.to_bits(),
            p.trap.1.to_bits(),
        ] {
            for b in word.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// f̃_ε(ω, x̃).
    #[inline]
    pub fn lift_eval(&self, omega: NoisePoint, x: f64) -> f64 {
        self.params.lift(omega.to_f64(), x)
    }

    #[inline]
    pub fn lift_eval_at(&self, omega: f64, x: f64) -> f64 {
        self.params.lift(omega, x)
    }

    #[inline]
    pub fn derivative_at(&self, omega: f64, x: f64) -> f64 {
        self.params.derivative(omega, x)
    }

    /// One fibre step f_ω(x) on the circle.
    #[inline]
    pub fn step(&self, omega: NoisePoint, x: CirclePoint) -> CirclePoint {
        CirclePoint::new(self.lift_eval(omega, x.value()))
    }
}

/// f^{(n)}_ω(x) = f_{θ^{n−1}ω} ∘ ⋯ ∘ f_ω(x).
pub fn iterate_forward(
    fam: &RandomMapFamily,
    base: &BaseDynamics,
    omega: NoisePoint,
    x: CirclePoint,
    n: usize,
) -> CirclePoint {
    let mut w = omega;
    let mut y = x;
    for _ in 0..n {
        y = fam.step(w, y);
        w = base.theta(w);
    }
    y
}

/// The k-folding map E_k.
#[inline]
pub fn folding(k: u32, x: CirclePoint) -> CirclePoint {
    CirclePoint::new(k as f64 * x.value())
}

/// A point of the skew product Ω × S¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewState {
    pub omega: NoisePoint,
    pub x: CirclePoint,
}

impl SkewState {
    pub fn step(self, fam: &RandomMapFamily, base: &BaseDynamics) -> SkewState {
        SkewState {
            omega: base.theta(self.omega),
            x: fam.step(self.omega, self.x),
        }
    }
}
