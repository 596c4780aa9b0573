//! Inverse branches, the random fixed point, the k-adic pullback grid and the
//! piecewise-linear approximations h_n(ω) of the random conjugacy with E_k.

use crate::circle::{lift_distance, wrap_unit, CirclePoint};
use crate::error::{Error, Result};
use crate::random_system::{folding, BaseDynamics, NoisePoint, RandomMapFamily};
use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

/// Bracketed bisection followed by a short Newton polish.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseBranchSolver {
    /// Absolute bisection tolerance in lift units.
    pub tolerance: f64,
    pub max_bisections: usize,
    pub newton_steps: usize,
}

impl Default for InverseBranchSolver {
    fn default() -> Self {
        InverseBranchSolver {
            tolerance: 1e-12,
            max_bisections: 200,
            newton_steps: 5,
        }
    }
}

/// The fibre map at a fixed noise value, rewritten as
/// `k·x + r·sin(2πx + φ)` so one evaluation costs a single `sin`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FibreMap {
    k: f64,
    amplitude: f64,
    phase: f64,
}

impl FibreMap {
    #[inline]
    pub(crate) fn new(fam: &RandomMapFamily, omega: NoisePoint) -> Self {
        let p = fam.params();
        let (sw, cw) = (TAU * omega.to_f64()).sin_cos();
        // a sin(2πx) + ε sin(2πx + 2πω) = (a + ε cos 2πω) sin 2πx + ε sin 2πω cos 2πx
        let sin_coef = p.a + p.epsilon * cw;
        let cos_coef = p.epsilon * sw;
        FibreMap {
            k: p.k as f64,
            amplitude: sin_coef.hypot(cos_coef),
            phase: cos_coef.atan2(sin_coef),
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        self.k * x + self.amplitude * (TAU * x + self.phase).sin()
    }

    #[inline]
    fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let (s, c) = (TAU * x + self.phase).sin_cos();
        (self.k * x + self.amplitude * s, self.k + TAU * self.amplitude * c)
    }
}

impl InverseBranchSolver {
    /// Unique y with f̃(ω, y) = target.
    #[inline]
    pub(crate) fn solve(&self, map: &FibreMap, omega: NoisePoint, target: f64) -> Result<f64> {
        // |f̃(y) − k·y| ≤ amplitude brackets the root.
        let slack = map.amplitude * (1.0 + 1e-12) + 1e-300;
        let mut lo = (target - slack) / map.k;
        let mut hi = (target + slack) / map.k;
        let mut iterations = 0;
        while hi - lo > self.tolerance {
            if iterations == self.max_bisections {
                return Err(Error::SolverBudgetExceeded {
                    omega: omega.to_f64(),
                    target,
                    bisections: iterations,
                });
            }
            let mid = 0.5 * (lo + hi);
            if map.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        let bisected = 0.5 * (lo + hi);
        let (blo, bhi) = (lo - self.tolerance, hi + self.tolerance);
        let mut y = bisected;
        for _ in 0..self.newton_steps {
            let (v, d) = map.eval_with_derivative(y);
            let step = (v - target) / d;
            let next = y - step;
            if !(next >= blo && next <= bhi) {
                return Ok(bisected);
            }
            if next == y {
                break;
            }
            y = next;
            if step.abs() <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
                break;
            }
        }
        Ok(y)
    }
}

/// Memo of random fixed points keyed by (family fingerprint, ω bits, depth).
/// Entries are deterministic, so concurrent writers never disagree.
#[derive(Debug, Default)]
pub struct FixedPointCache {
    entries: DashMap<(u64, u64, usize), f64>,
}

impl FixedPointCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, family: u64, omega: NoisePoint, depth: usize) -> Option<f64> {
        self.entries.get(&(family, omega.bits(), depth)).map(|v| *v)
    }

    pub fn insert(&self, family: u64, omega: NoisePoint, depth: usize, value: f64) {
        self.entries.insert((family, omega.bits(), depth), value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&self) {
        self.entries.clear();
    }
}

/// Pullback machinery for one validated family over one base rotation.
#[derive(Debug)]
pub struct Pullback {
    family: RandomMapFamily,
    base: BaseDynamics,
    solver: InverseBranchSolver,
    p_depth: usize,
    max_grid_cells: u64,
    cache: FixedPointCache,
}

/// Depth N with λ^{−N}·|B̃| ≤ tol.
pub fn default_fixed_point_depth(lambda: f64, trap_length: f64, tol: f64) -> usize {
    ((trap_length / tol).ln() / lambda.ln()).ceil().max(1.0) as usize
}

impl Pullback {
    pub fn new(family: RandomMapFamily, base: BaseDynamics) -> Self {
        let p_depth = default_fixed_point_depth(family.lambda(), family.trap_length(), 1e-10);
        Pullback {
            family,
            base,
            solver: InverseBranchSolver::default(),
            p_depth,
            max_grid_cells: 1 << 16,
            cache: FixedPointCache::new(),
        }
    }

    pub fn with_solver(mut self, solver: InverseBranchSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_fixed_point_depth(mut self, depth: usize) -> Self {
        self.p_depth = depth.max(1);
        self
    }

    pub fn with_max_grid_cells(mut self, cells: u64) -> Self {
        self.max_grid_cells = cells;
        self
    }

    pub fn family(&self) -> &RandomMapFamily {
        &self.family
    }

    pub fn base(&self) -> &BaseDynamics {
        &self.base
    }

    pub fn solver(&self) -> &InverseBranchSolver {
        &self.solver
    }

    pub fn k(&self) -> u32 {
        self.family.k()
    }

    pub fn lambda(&self) -> f64 {
        self.family.lambda()
    }

    pub fn fixed_point_depth(&self) -> usize {
        self.p_depth
    }

    pub fn cache(&self) -> &FixedPointCache {
        &self.cache
    }

    /// F(ω)(z): the inverse of the lift f̃(ω) on ℝ.
    #[inline]
    pub fn branch(&self, omega: NoisePoint, z: f64) -> Result<f64> {
        let map = FibreMap::new(&self.family, omega);
        self.solver.solve(&map, omega, z)
    }

    /// F_ℓ(ω)(z) = F(ω)(z + ℓ).
    pub fn inverse_branch(&self, omega: NoisePoint, z: f64, ell: u32) -> Result<f64> {
        if ell >= self.k() {
            return Err(Error::InvalidArgument(format!(
                "branch index {ell} outside 0..{}",
                self.k()
            )));
        }
        self.branch(omega, z + ell as f64)
    }

    /// p_N(ω) = F(ω) ∘ F(θω) ∘ ⋯ ∘ F(θ^{N−1}ω)(x0), x0 the midpoint of B̃.
    pub fn random_fixed_point(&self, omega: NoisePoint, depth: usize) -> Result<f64> {
        if depth == 0 {
            return Err(Error::InvalidArgument("fixed point depth must be >= 1".into()));
        }
        let key = self.family.fingerprint();
        if let Some(v) = self.cache.get(key, omega, depth) {
            return Ok(v);
        }
        let mut x = self.family.trap_midpoint();
        for i in (0..depth).rev() {
            x = self.branch(self.base.theta_pow(omega, i as i64), x)?;
        }
        self.cache.insert(key, omega, depth, x);
        Ok(x)
    }

    /// Random fixed point at the configured default depth.
    pub fn fixed_point(&self, omega: NoisePoint) -> Result<f64> {
        self.random_fixed_point(omega, self.p_depth)
    }

    /// A priori error of p_N: λ^{−N}·|B̃|.
    pub fn fixed_point_error(&self, depth: usize) -> f64 {
        self.lambda().powi(-(depth as i32)) * self.family.trap_length()
    }

    /// All grid points a_j^n(ω), j = 0..=k^n, by recursive descent from
    /// p(θ^n ω).
    pub fn conjugacy_grid(&self, omega: NoisePoint, level: u32) -> Result<ConjugacyGrid> {
        let k = self.k() as u64;
        let cells = k.checked_pow(level).unwrap_or(u64::MAX);
        if cells > self.max_grid_cells {
            return Err(Error::BudgetExceeded {
                what: "conjugacy grid cells",
                requested: cells,
                limit: self.max_grid_cells,
            });
        }
        let mut cur = vec![self.fixed_point(self.base.theta_pow(omega, level as i64))?];
        for m in 0..level {
            let w = self.base.theta_pow(omega, (level - m - 1) as i64);
            let map = FibreMap::new(&self.family, w);
            let width = cur.len();
            let mut next = Vec::with_capacity(width * k as usize);
            for ell in 0..k {
                for &z in &cur {
                    next.push(self.solver.solve(&map, w, z + ell as f64)?);
                }
            }
            debug_assert_eq!(next.len(), width * k as usize);
            cur = next;
        }
        let first = cur[0];
        cur.push(first + 1.0);
        Ok(ConjugacyGrid {
            omega,
            level,
            k: self.k(),
            points: cur,
            p_depth: self.p_depth,
        })
    }

    /// max over M spread samples x of d(h_n(θω)(E_k x), f_ω(h_n(ω)(x))).
    pub fn conjugacy_residual(&self, omega: NoisePoint, level: u32, samples: usize) -> Result<f64> {
        let here = self.conjugacy_grid(omega, level)?;
        let next = self.conjugacy_grid(self.base.theta(omega), level)?;
        Ok(residual_between(&self.family, &here, &next, samples))
    }

    /// Residual bound C·λ^{−n} with C = 2(1 + Lip f).
    pub fn residual_bound(&self, level: u32) -> f64 {
        2.0 * (1.0 + self.family.lipschitz()) * self.lambda().powi(-(level as i32))
    }
}

/// Conjugacy residual from precomputed grids at ω and θω.
pub fn residual_between(
    fam: &RandomMapFamily,
    here: &ConjugacyGrid,
    next: &ConjugacyGrid,
    samples: usize,
) -> f64 {
    // irrational offset keeps samples off the k-adic nodes
    let offset = 0.381_966_011_250_105_1;
    let m = samples.max(1) as f64;
    (0..samples.max(1))
        .map(|i| {
            let x = CirclePoint::new((i as f64 + offset) / m);
            let lhs = next.h_eval(folding(fam.k(), x));
            let rhs = fam.step(here.omega, here.h_eval(x));
            crate::circle::circle_distance(lhs, rhs)
        })
        .fold(0.0, f64::max)
}

/// The level-n grid a_0^n(ω) < ⋯ < a_{k^n}^n(ω) = a_0^n(ω) + 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyGrid {
    pub omega: NoisePoint,
    pub level: u32,
    pub k: u32,
    pub points: Vec<f64>,
    pub p_depth: usize,
}

impl ConjugacyGrid {
    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1] > w[0])
    }

    /// Largest slope k^n·(a_{j+1} − a_j) of the interpolant.
    pub fn lipschitz(&self) -> f64 {
        self.cells() as f64 * self.max_gap()
    }

    /// h̃_n(ω)(x̃) for x̃ ∈ [0, 1].
    pub fn h_lift(&self, x: f64) -> f64 {
        let cells = self.cells();
        let scaled = x * cells as f64;
        let cell = (scaled.floor() as usize).min(cells - 1);
        let t = scaled - cell as f64;
        let (a, b) = (self.points[cell], self.points[cell + 1]);
        a + t * (b - a)
    }

    /// h_n(ω)(x) on the circle.
    pub fn h_eval(&self, x: CirclePoint) -> CirclePoint {
        CirclePoint::new(self.h_lift(x.value()))
    }

    /// sup_x d(h_n(ω)(x), h_n(ω′)(x)); exact for grids of equal level since the
    /// difference of two interpolants on shared nodes peaks at a node.
    pub fn sup_distance(&self, other: &ConjugacyGrid) -> f64 {
        if self.points.len() == other.points.len() {
            self.points
                .iter()
                .zip(&other.points)
                .map(|(a, b)| lift_distance(*a, *b))
                .fold(0.0, f64::max)
        } else {
            let n = 4 * self.cells().max(other.cells());
            (0..n)
                .map(|i| {
                    let x = CirclePoint::new(i as f64 / n as f64);
                    crate::circle::circle_distance(self.h_eval(x), other.h_eval(x))
                })
                .fold(0.0, f64::max)
        }
    }

    /// CSV with a commented header line carrying the grid identity.
    pub fn to_csv(&self, family_fingerprint: u64) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# omega={},omega_bits={},level={},k={},p_depth={},family={:016x}",
            self.omega.to_f64(),
            self.omega.bits(),
            self.level,
            self.k,
            self.p_depth,
            family_fingerprint
        );
        out.push_str("j,a_j_lift\n");
        for (j, a) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{j},{a}");
        }
        out
    }

    /// Parses the output of [`ConjugacyGrid::to_csv`].
    pub fn from_csv(text: &str) -> Result<(ConjugacyGrid, u64)> {
        let bad = |m: &str| Error::InvalidArgument(format!("grid csv: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let header = header.strip_prefix("# ").ok_or_else(|| bad("missing header"))?;
        let mut omega_bits = None;
        let mut level = None;
        let mut k = None;
        let mut p_depth = None;
        let mut family = None;
        for field in header.split(',') {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("header field"))?;
            match key {
                "omega_bits" => omega_bits = value.parse::<u64>().ok(),
                "level" => level = value.parse::<u32>().ok(),
                "k" => k = value.parse::<u32>().ok(),
                "p_depth" => p_depth = value.parse::<usize>().ok(),
                "family" => family = u64::from_str_radix(value, 16).ok(),
                _ => {}
            }
        }
        if lines.next() != Some("j,a_j_lift") {
            return Err(bad("column header"));
        }
        let mut points = Vec::new();
        for line in lines {
            let (_, a) = line.split_once(',').ok_or_else(|| bad("row"))?;
            points.push(a.parse::<f64>().map_err(|_| bad("value"))?);
        }
        let grid = ConjugacyGrid {
            omega: NoisePoint(omega_bits.ok_or_else(|| bad("omega_bits"))?),
            level: level.ok_or_else(|| bad("level"))?,
            k: k.ok_or_else(|| bad("k"))?,
            points,
            p_depth: p_depth.ok_or_else(|| bad("p_depth"))?,
        };
        Ok((grid, family.ok_or_else(|| bad("family"))?))
    }
}

/// Lift of `x` (given as a lift) moved into `[anchor, anchor + 1)`.
#[inline]
pub(crate) fn normalize_into(x: f64, anchor: f64) -> f64 {
    anchor + wrap_unit(x - anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_system::{FamilyParams, ValidationGrid};

    fn grid() -> ValidationGrid {
        ValidationGrid {
            omega_points: 32,
            x_points: 1024,
        }
    }

    fn pullback(params: FamilyParams) -> Pullback {
        let fam = RandomMapFamily::with_grid(params, grid()).unwrap();
        Pullback::new(fam, BaseDynamics::golden())
    }

    /// Plain bisection on the direct lift formula, independent of the solver.
    fn bisection_oracle(fam: &RandomMapFamily, omega: NoisePoint, target: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fam.lift_eval(omega, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn branch_examples_folding() {
        let pb = pullback(FamilyParams::folding(2));
        let w = NoisePoint::from_f64(0.3);
        assert!((pb.inverse_branch(w, 0.6, 0).unwrap() - 0.3).abs() < 1e-15);
        assert!((pb.inverse_branch(w, 0.6, 1).unwrap() - 0.8).abs() < 1e-15);
        assert!(pb.inverse_branch(w, 0.6, 2).is_err());
    }

    #[test]
    fn branch_matches_bisection_oracle() {
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.4);
        let y = pb.inverse_branch(w, 0.5, 1).unwrap();
        let oracle = bisection_oracle(pb.family(), w, 1.5);
        assert!((y - oracle).abs() < 1e-12, "{y} vs {oracle}");
        let residual = (pb.family().lift_eval(w, y) - 1.5).abs();
        assert!(residual <= pb.lambda() * pb.solver().tolerance);
    }

    #[test]
    fn solver_budget_is_enforced() {
        let solver = InverseBranchSolver {
            tolerance: 1e-15,
            max_bisections: 3,
            newton_steps: 0,
        };
        let fam = RandomMapFamily::with_grid(FamilyParams::default(), grid()).unwrap();
        let pb = Pullback::new(fam, BaseDynamics::golden()).with_solver(solver);
        let err = pb.branch(NoisePoint::from_f64(0.1), 0.4).unwrap_err();
        assert!(matches!(err, Error::SolverBudgetExceeded { .. }));
    }

    #[test]
    fn fixed_point_examples() {
        let w = NoisePoint::from_f64(0.77);
        let pb = pullback(FamilyParams::default().with_epsilon(0.0));
        assert!(pb.random_fixed_point(w, 60).unwrap().abs() < 1e-10);
        let pb = pullback(FamilyParams::folding(2));
        assert_eq!(pb.random_fixed_point(w, 60).unwrap(), 0.0);
    }

    #[test]
    fn fixed_point_depth_consistency_and_invariance() {
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.3);
        let p60 = pb.random_fixed_point(w, 60).unwrap();
        let p120 = pb.random_fixed_point(w, 120).unwrap();
        assert!((p60 - p120).abs() <= pb.fixed_point_error(60));
        let lhs = pb.family().lift_eval(w, p60);
        let rhs = pb.random_fixed_point(pb.base().theta(w), 60).unwrap();
        assert!((lhs - rhs).abs() <= 2.0 * pb.fixed_point_error(60) + 1e-12);
        // noise genuinely moves the fixed point
        assert!(p60.abs() > 1e-4);
        assert!(pb.cache().get(pb.family().fingerprint(), w, 60).is_some());
    }

    #[test]
    fn default_depth_targets_tolerance() {
        let fam = RandomMapFamily::with_grid(FamilyParams::default(), grid()).unwrap();
        let d = default_fixed_point_depth(fam.lambda(), fam.trap_length(), 1e-10);
        assert!(fam.lambda().powi(-(d as i32)) * 0.2 <= 1e-10);
        assert!(fam.lambda().powi(-(d as i32 - 1)) * 0.2 > 1e-10);
    }

    #[test]
    fn identity_grid_for_folding() {
        let pb = pullback(FamilyParams::folding(2));
        let g = pb.conjugacy_grid(NoisePoint::from_f64(0.1), 3).unwrap();
        assert_eq!(g.points.len(), 9);
        for (j, a) in g.points.iter().enumerate() {
            assert!((a - j as f64 / 8.0).abs() < 1e-15);
        }
        assert!((g.h_eval(CirclePoint::new(0.37)).value() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn level_one_grid_matches_direct_solves() {
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.0);
        let g = pb.conjugacy_grid(w, 1).unwrap();
        assert_eq!(g.points.len(), 3);
        let p1 = pb.random_fixed_point(pb.base().theta(w), pb.fixed_point_depth()).unwrap();
        let a0 = bisection_oracle(pb.family(), w, p1);
        let a1 = bisection_oracle(pb.family(), w, p1 + 1.0);
        assert!((g.points[0] - a0).abs() < 1e-12);
        assert!((g.points[1] - a1).abs() < 1e-12);
        assert!(g.points[1] > 0.0 && g.points[1] < 1.0);
        assert_eq!(g.points[2], g.points[0] + 1.0);
    }

    #[test]
    fn grid_refinement_is_consistent() {
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.42);
        let g3 = pb.conjugacy_grid(w, 3).unwrap();
        let g5 = pb.conjugacy_grid(w, 5).unwrap();
        for j in 0..=8 {
            assert!((g5.points[4 * j] - g3.points[j]).abs() < 1e-10);
        }
        assert!(g5.is_strictly_increasing());
        assert!(g5.max_gap() <= pb.lambda().powi(-5));
    }

    #[test]
    fn h_eval_at_nodes_and_refinement() {
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.6);
        let g = pb.conjugacy_grid(w, 4).unwrap();
        for j in 0..16 {
            let x = CirclePoint::new(j as f64 / 16.0);
            assert_eq!(g.h_eval(x), CirclePoint::new(g.points[j]));
        }
        let fine = pb.conjugacy_grid(w, 10).unwrap();
        for i in 0..16 {
            let x = CirclePoint::new((i as f64 + 0.5) / 16.0);
            let d = crate::circle::circle_distance(g.h_eval(x), fine.h_eval(x));
            assert!(d <= pb.lambda().powi(-4));
        }
    }

    #[test]
    fn grid_budget() {
        let pb = pullback(FamilyParams::default()).with_max_grid_cells(1 << 8);
        assert!(matches!(
            pb.conjugacy_grid(NoisePoint(0), 9),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn residual_identity_and_decay() {
        let pb = pullback(FamilyParams::folding(2));
        assert!(pb.conjugacy_residual(NoisePoint::from_f64(0.2), 6, 500).unwrap() < 1e-12);
        let pb = pullback(FamilyParams::default());
        let w = NoisePoint::from_f64(0.2);
        let r8 = pb.conjugacy_residual(w, 8, 2000).unwrap();
        let r12 = pb.conjugacy_residual(w, 12, 2000).unwrap();
        assert!(r12 / r8 <= 2.0 * pb.lambda().powi(-4), "{r8} {r12}");
        assert!(r12 <= pb.residual_bound(12));
    }

    #[test]
    fn csv_round_trip() {
        let pb = pullback(FamilyParams::default());
        let g = pb.conjugacy_grid(NoisePoint::from_f64(0.9), 4).unwrap();
        let text = g.to_csv(pb.family().fingerprint());
        let (back, fp) = ConjugacyGrid::from_csv(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(fp, pb.family().fingerprint());
    }
}
