//! Birkhoff averages along decoded orbits, the bump observable, block-length
//! arithmetic, the block schedule and spliced sequence s̄, oscillation
//! certificates, past-orbit density and residual-set witnesses.

use crate::circle::{circle_distance, wrap_unit, CircleInterval, CirclePoint};
use crate::conjugacy::Pullback;
use crate::error::{Error, Result};
use crate::random_system::NoisePoint;
use crate::symbolic::{decode_point, gap_interval, partition, segments, sweep, SymbolStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// C¹ bump: 0 off J′, 1 on J, cubic smoothstep ramps in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpObservable {
    pub j: CircleInterval,
    pub j_prime: CircleInterval,
    pub c0_norm: f64,
    pub c1_norm: f64,
}

#[inline]
fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

impl BumpObservable {
    /// Requires two proper arcs with J strictly inside J′ on both sides.
    pub fn new(j: CircleInterval, j_prime: CircleInterval) -> Result<Self> {
        let (Some(jl), Some(jpl)) = (j.left(), j_prime.left()) else {
            return Err(Error::InvalidArgument("bump arcs must be proper".into()));
        };
        if j.length() <= 0.0 || j_prime.length() >= 1.0 {
            return Err(Error::InvalidArgument("bump arcs must be proper".into()));
        }
        let left = wrap_unit(jl.value() - jpl.value());
        let right = j_prime.length() - left - j.length();
        if !(left > 0.0 && right > 0.0) {
            return Err(Error::InvalidArgument("J must lie strictly inside J'".into()));
        }
        Ok(BumpObservable {
            j,
            j_prime,
            c0_norm: 1.0,
            c1_norm: 1.5 / left.min(right),
        })
    }

    /// The bump on the default gap arcs for (δ0, k).
    pub fn from_gap(delta0: f64, k: u32) -> Result<Self> {
        let (j, jp) = gap_interval(delta0, k)?;
        BumpObservable::new(j, jp)
    }

    /// Widths of the left and right ramps.
    pub fn ramp_widths(&self) -> (f64, f64) {
        let left = wrap_unit(self.j.left().unwrap().value() - self.j_prime.left().unwrap().value());
        (left, self.j_prime.length() - left - self.j.length())
    }

    #[inline]
    pub fn eval(&self, x: CirclePoint) -> f64 {
        let jp_left = match self.j_prime {
            CircleInterval::Arc { left, .. } => left.value(),
            _ => unreachable!(),
        };
        let t = wrap_unit(x.value() - jp_left);
        let len = self.j_prime.length();
        if t >= len {
            return 0.0;
        }
        let (wl, wr) = self.ramp_widths();
        if t < wl {
            smoothstep(t / wl)
        } else if t <= wl + self.j.length() {
            1.0
        } else {
            smoothstep((len - t) / wr)
        }
    }

    /// ∫ φ0 dm; each smoothstep ramp carries half its width.
    pub fn integral(&self) -> f64 {
        let (wl, wr) = self.ramp_widths();
        self.j.length() + 0.5 * (wl + wr)
    }

    /// Total variation over the circle.
    pub fn total_variation(&self) -> f64 {
        2.0 * self.c0_norm
    }
}

pub fn bump_eval(obs: &BumpObservable, x: CirclePoint) -> f64 {
    obs.eval(x)
}

/// Sum in index order by a fixed pairwise tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sums of φ0 over the orbit on each segment, in segment order.
fn segment_sums(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    obs: &BumpObservable,
    segs: &[(u64, u64)],
    depth: usize,
) -> Result<Vec<f64>> {
    segs.par_iter()
        .map(|&(a, b)| {
            let mut buf = vec![0.0; (b - a) as usize];
            sweep(pb, omega, stream, a, b, depth, |j, x| {
                buf[(j - a) as usize] = obs.eval(CirclePoint::new(x))
            })?;
            Ok(pairwise_sum(&buf))
        })
        .collect()
}

/// Running sum with Neumaier compensation.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// B_n(φ0; ω, X_s(ω)) for every n in `checkpoints`, from a single pass over
/// the orbit. Results do not depend on the number of workers.
pub fn birkhoff_checkpoints(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    obs: &BumpObservable,
    checkpoints: &[u64],
    depth: usize,
) -> Result<Vec<f64>> {
    if checkpoints.contains(&0) {
        return Err(Error::InvalidArgument("Birkhoff length must be >= 1".into()));
    }
    let Some(&horizon) = checkpoints.iter().max() else {
        return Ok(Vec::new());
    };
    let segs = segments(0, horizon, checkpoints);
    let sums = segment_sums(pb, omega, stream, obs, &segs, depth)?;
    let mut sorted: Vec<u64> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut prefix = std::collections::HashMap::with_capacity(sorted.len());
    let mut acc = Compensated::default();
    let mut next = sorted.iter().peekable();
    for (&(_, b), s) in segs.iter().zip(&sums) {
        acc.add(*s);
        while let Some(&&n) = next.peek() {
            if n == b {
                prefix.insert(n, acc.value() / n as f64);
                next.next();
            } else {
                break;
            }
        }
    }
    Ok(checkpoints.iter().map(|n| prefix[n]).collect())
}

/// B_n(φ0; ω, X_s(ω)) with every orbit point decoded at depth ≥ d.
pub fn birkhoff_average(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    obs: &BumpObservable,
    n: u64,
    depth: usize,
) -> Result<f64> {
    Ok(birkhoff_checkpoints(pb, omega, stream, obs, &[n], depth)?[0])
}

/// All running averages B_1, …, B_n along one orbit.
pub fn birkhoff_running(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    obs: &BumpObservable,
    n: u64,
    depth: usize,
) -> Result<Vec<f64>> {
    let orbit = crate::symbolic::decode_orbit(pb, omega, stream, 0, n, depth)?;
    let mut acc = Compensated::default();
    Ok(orbit
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            acc.add(obs.eval(x));
            acc.value() / (i + 1) as f64
        })
        .collect())
}

/// Averages at chosen checkpoints with the per-value numerical error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffSeries {
    pub omega: NoisePoint,
    pub stream: SymbolStream,
    pub checkpoints: Vec<u64>,
    pub values: Vec<f64>,
    pub depth: usize,
    pub error_bound: f64,
}

pub fn birkhoff_series(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    obs: &BumpObservable,
    checkpoints: &[u64],
    depth: usize,
) -> Result<BirkhoffSeries> {
    let values = birkhoff_checkpoints(pb, omega, stream, obs, checkpoints, depth)?;
    let horizon = checkpoints.iter().copied().max().unwrap_or(0) as f64;
    Ok(BirkhoffSeries {
        omega,
        stream: stream.clone(),
        checkpoints: checkpoints.to_vec(),
        values,
        depth,
        error_bound: decode_error(pb, obs, depth) + horizon * f64::EPSILON,
    })
}

/// c1·(λ^{−d} + fixed-point error): the per-point error of a decoded orbit.
pub fn decode_error(pb: &Pullback, obs: &BumpObservable, depth: usize) -> f64 {
    obs.c1_norm * (pb.lambda().powi(-(depth as i32)) + pb.fixed_point_error(pb.fixed_point_depth()))
}

/// The two quantities bounded in the block-length lemma at (m, n).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTerms {
    /// 2·m·‖φ0‖_{C⁰}/⌊n/2⌋.
    pub truncation: f64,
    /// (⌊n/2⌋ − m)·λ^{−n/2}·‖φ0‖_{C¹}.
    pub decay: f64,
}

pub fn block_terms(m: u64, n: u64, obs: &BumpObservable, lambda: f64) -> BlockTerms {
    let half = n / 2;
    let truncation = if half == 0 {
        f64::INFINITY
    } else {
        2.0 * m as f64 * obs.c0_norm / half as f64
    };
    let span = half.saturating_sub(m) as f64;
    let decay = if obs.c1_norm == 0.0 || span == 0.0 {
        0.0
    } else {
        (span.ln() - 0.5 * n as f64 * lambda.ln() + obs.c1_norm.ln()).exp()
    };
    BlockTerms { truncation, decay }
}

fn block_ok(m: u64, n: u64, rho: f64, obs: &BumpObservable, lambda: f64) -> bool {
    let t = block_terms(m, n, obs, lambda);
    n / 2 > m && t.truncation <= rho / 2.0 && t.decay <= rho / 2.0
}

/// Smallest n ≥ 2m + 2 certifying the block-length lemma for (m, ρ).
pub fn block_length(m: u64, rho: f64, obs: &BumpObservable, lambda: f64) -> u64 {
    assert!(rho > 0.0 && rho <= 1.0 && lambda > 1.0);
    // 2m/⌊n/2⌋ ≤ ρ/2 forces ⌊n/2⌋ ≥ 4m/ρ
    let half_min = ((4.0 * m as f64 * obs.c0_norm) / rho).floor() as u64;
    let mut n = (2 * m + 2).max(2 * half_min.saturating_sub(1));
    while !block_ok(m, n, rho, obs, lambda) {
        n += 1;
    }
    n
}

/// How ρ̃_j is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RhoRule {
    /// ρ̃_j = ratio^j.
    Geometric { ratio: f64 },
    /// ρ̃_j = values[j − 1].
    Explicit { values: Vec<f64> },
}

impl Default for RhoRule {
    fn default() -> Self {
        RhoRule::Geometric { ratio: 0.5 }
    }
}

impl RhoRule {
    pub fn at(&self, j: usize) -> Result<f64> {
        let v = match self {
            RhoRule::Geometric { ratio } => ratio.powi(j as i32),
            RhoRule::Explicit { values } => *values.get(j - 1).ok_or_else(|| {
                Error::InvalidArgument(format!("no rho value for block {j}"))
            })?,
        };
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho_{j} = {v} outside (0, 1]")));
        }
        Ok(v)
    }
}

/// The inequalities verified for one block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCertificate {
    pub block: usize,
    pub rho_tilde: f64,
    pub previous: u64,
    pub length: u64,
    /// N_j ≥ 6N_{j−1}/ρ̃_j + 2.
    pub growth: bool,
    /// N_{j−1}/⌊N_j/2⌋ ≤ ρ̃_j/3.
    pub xi_margin: bool,
    pub xi: f64,
    /// Lemma terms at (N_{j−1}, N_j, ρ̃_j/3).
    pub terms: BlockTerms,
    pub lemma: bool,
    /// ⌊N_j/2⌋ − N_{j−1} ≥ N_{j−1}.
    pub doubling: bool,
}

impl BlockCertificate {
    pub fn passed(&self) -> bool {
        self.growth && self.xi_margin && self.lemma && self.doubling
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub rho_tilde: Vec<f64>,
    /// N_0 = 0 < N_1 < ⋯ < N_{2L}.
    pub n: Vec<u64>,
    pub certificates: Vec<BlockCertificate>,
}

impl BlockSchedule {
    pub fn blocks(&self) -> usize {
        self.n.len() - 1
    }

    /// ⌊N_j/2⌋.
    pub fn checkpoint(&self, j: usize) -> u64 {
        self.n[j] / 2
    }

    pub fn horizon(&self) -> u64 {
        *self.n.last().unwrap()
    }

    pub fn certified(&self) -> bool {
        self.certificates.iter().all(BlockCertificate::passed)
    }
}

/// Certificate for block j given N_{j−1} = m and N_j = n.
pub fn certify_block(
    block: usize,
    rho_tilde: f64,
    m: u64,
    n: u64,
    obs: &BumpObservable,
    lambda: f64,
) -> BlockCertificate {
    let rho = rho_tilde / 3.0;
    let half = n / 2;
    BlockCertificate {
        block,
        rho_tilde,
        previous: m,
        length: n,
        growth: n as f64 >= 6.0 * m as f64 / rho_tilde + 2.0,
        xi_margin: half > 0 && m as f64 / half as f64 <= rho,
        xi: if half > 0 { 1.0 - m as f64 / half as f64 } else { 0.0 },
        terms: block_terms(m, n, obs, lambda),
        lemma: n >= 2 * m + 2 && block_ok(m, n, rho, obs, lambda),
        doubling: half >= 2 * m,
    }
}

/// Next block length after N_{j−1} = m.
pub fn next_block(m: u64, rho_tilde: f64, obs: &BumpObservable, lambda: f64) -> u64 {
    let lemma = block_length(m, rho_tilde / 3.0, obs, lambda);
    let growth = (6.0 * m as f64 / rho_tilde).ceil() as u64 + 2;
    // smallest n with m/⌊n/2⌋ ≤ ρ̃/3
    let mut half = ((3.0 * m as f64 / rho_tilde).ceil() as u64).max(1);
    while half > 1 && m as f64 / (half - 1) as f64 <= rho_tilde / 3.0 {
        half -= 1;
    }
    while m as f64 / half as f64 > rho_tilde / 3.0 {
        half += 1;
    }
    lemma.max(growth).max(2 * half)
}

/// N_1, …, N_blocks with certificates; fails once some N_j exceeds `budget`.
pub fn build_schedule(
    obs: &BumpObservable,
    lambda: f64,
    rule: &RhoRule,
    blocks: usize,
    budget: u64,
) -> Result<BlockSchedule> {
    if blocks == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one block".into()));
    }
    let mut n = vec![0u64];
    let mut rho_tilde = Vec::with_capacity(blocks);
    let mut certificates = Vec::with_capacity(blocks);
    for j in 1..=blocks {
        let r = rule.at(j)?;
        if let Some(&prev) = rho_tilde.last() {
            if r > prev {
                return Err(Error::InvalidArgument("rho sequence must be non-increasing".into()));
            }
        }
        let m = n[j - 1];
        let next = next_block(m, r, obs, lambda);
        if next > budget {
            return Err(Error::ScheduleBudgetExceeded {
                feasible: j - 1,
                block: j,
                required: next,
                budget,
            });
        }
        certificates.push(certify_block(j, r, m, next, obs, lambda));
        rho_tilde.push(r);
        n.push(next);
    }
    Ok(BlockSchedule {
        rho_tilde,
        n,
        certificates,
    })
}

/// Block lengths N_1, …, N_blocks with no budget.
pub fn schedule_lengths(obs: &BumpObservable, lambda: f64, rule: &RhoRule, blocks: usize) -> Result<Vec<u64>> {
    Ok(build_schedule(obs, lambda, rule, blocks, u64::MAX)?.n)
}

/// The spliced sequence s̄: s′ on odd blocks, s″ on even blocks.
pub fn build_bar_s(schedule: &BlockSchedule, s_prime: &SymbolStream, s_second: &SymbolStream) -> SymbolStream {
    SymbolStream::BlockComposite {
        boundaries: schedule.n.clone(),
        odd: Box::new(s_prime.clone()),
        even: Box::new(s_second.clone()),
    }
}

/// The double integral I* = ∫∫ φ0 d(h(ω)_* m) dℙ(ω).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetIntegral {
    pub value: f64,
    /// Rigorous bound on the x-quadrature and fixed-point error.
    pub x_bound: f64,
    /// |I(Q_ω) − I(Q_ω/2)|, the estimated ω-quadrature error.
    pub omega_term: f64,
    pub q_omega: usize,
    pub level: u32,
}

impl TargetIntegral {
    pub fn bound(&self) -> f64 {
        self.x_bound + self.omega_term
    }
}

/// I* from the grid nodes a_j^n(ω) = h(ω)(j/k^n) over Q_ω equally spaced ω.
///
/// Node sampling has no interpolation error; the left Riemann sum of the
/// monotone composition φ0 ∘ h(ω) is off by at most TV(φ0)·k^{−n}.
pub fn target_integral(pb: &Pullback, obs: &BumpObservable, q_omega: usize, level: u32) -> Result<TargetIntegral> {
    if q_omega < 2 || !q_omega.is_multiple_of(2) {
        return Err(Error::InvalidArgument("q_omega must be even and >= 2".into()));
    }
    let per_omega: Vec<f64> = (0..q_omega)
        .into_par_iter()
        .map(|i| {
            let omega = NoisePoint::from_f64(i as f64 / q_omega as f64);
            let grid = pb.conjugacy_grid(omega, level)?;
            let vals: Vec<f64> = grid.points[..grid.cells()]
                .iter()
                .map(|&a| obs.eval(CirclePoint::new(a)))
                .collect();
            Ok(pairwise_sum(&vals) / grid.cells() as f64)
        })
        .collect::<Result<_>>()?;
    let full = pairwise_sum(&per_omega) / q_omega as f64;
    let half: Vec<f64> = per_omega.iter().step_by(2).copied().collect();
    let coarse = pairwise_sum(&half) / half.len() as f64;
    let cells = (pb.k() as f64).powi(level as i32);
    Ok(TargetIntegral {
        value: full,
        x_bound: obs.total_variation() / cells
            + obs.c1_norm * pb.fixed_point_error(pb.fixed_point_depth()),
        omega_term: (full - coarse).abs(),
        q_omega,
        level,
    })
}

/// One checkpoint of the oscillation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub block: usize,
    pub odd: bool,
    pub n_j: u64,
    pub checkpoint: u64,
    pub value: f64,
    /// 0 on odd blocks, I* on even blocks.
    pub target: f64,
    pub deviation: f64,
    /// ρ̃_j on odd blocks, ρ̃_j + ρ-term on even blocks.
    pub bound: f64,
    /// 2ρ̃_j/3 + |ξ_j·B″ − target|, B″ the pure-source average.
    pub sharp_bound: f64,
    pub rho_term: Option<f64>,
    pub source_average: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub sharp_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub omega: NoisePoint,
    pub depth: usize,
    pub i_star: f64,
    pub schedule: BlockSchedule,
    pub series: BirkhoffSeries,
    pub rows: Vec<OscillationRow>,
}

impl OscillationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// max over even checkpoints minus min over odd checkpoints.
    pub fn gap(&self) -> f64 {
        let even = self.rows.iter().filter(|r| !r.odd).map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
        let odd = self.rows.iter().filter(|r| r.odd).map(|r| r.value).fold(f64::INFINITY, f64::min);
        even - odd
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,parity,n_j,checkpoint,value,bound,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.block,
                if r.odd { "odd" } else { "even" },
                r.n_j,
                r.checkpoint,
                r.value,
                r.bound,
                r.pass
            );
        }
        out
    }
}

/// Averages of s̄ at every ⌊N_j/2⌋ with their certified bounds.
#[allow(clippy::too_many_arguments)]
pub fn oscillation_report(
    pb: &Pullback,
    omega: NoisePoint,
    schedule: &BlockSchedule,
    s_prime: &SymbolStream,
    s_second: &SymbolStream,
    obs: &BumpObservable,
    i_star: f64,
    depth: usize,
    tolerance: f64,
) -> Result<OscillationReport> {
    let bar_s = build_bar_s(schedule, s_prime, s_second);
    let checkpoints: Vec<u64> = (1..=schedule.blocks()).map(|j| schedule.checkpoint(j)).collect();
    let series = birkhoff_series(pb, omega, &bar_s, obs, &checkpoints, depth)?;
    let mut rows = Vec::with_capacity(schedule.blocks());
    for j in 1..=schedule.blocks() {
        let odd = j % 2 == 1;
        let rho_tilde = schedule.rho_tilde[j - 1];
        let m = schedule.n[j - 1];
        let c = schedule.checkpoint(j);
        let value = series.values[j - 1];
        let source = if odd { s_prime } else { s_second };
        let start = pb.base().theta_pow(omega, m as i64);
        let source_average = birkhoff_average(pb, start, source, obs, c - m, depth)?;
        let target = if odd { 0.0 } else { i_star };
        let xi = 1.0 - m as f64 / c as f64;
        let rho_term = (!odd).then(|| (source_average - i_star).abs());
        let bound = rho_tilde + rho_term.unwrap_or(0.0);
        let sharp_bound = 2.0 * rho_tilde / 3.0 + (xi * source_average - target).abs();
        let deviation = (value - target).abs();
        rows.push(OscillationRow {
            block: j,
            odd,
            n_j: schedule.n[j],
            checkpoint: c,
            value,
            target,
            deviation,
            bound,
            sharp_bound,
            rho_term,
            source_average,
            tolerance,
            pass: deviation <= bound + tolerance,
            sharp_pass: deviation <= sharp_bound + tolerance,
        });
    }
    Ok(OscillationReport {
        omega,
        depth,
        i_star,
        schedule: schedule.clone(),
        series,
        rows,
    })
}

/// The past orbit X_{σ^ℓ s̄}(ω), ℓ = 0…L−1, at a fixed ω.
pub fn past_orbit_points(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    count: usize,
    depth: usize,
) -> Result<Vec<CirclePoint>> {
    (0..count as u64)
        .into_par_iter()
        .map(|l| decode_point(pb, omega, &stream.shifted(l), depth).map(|(x, _)| x))
        .collect()
}

/// Number of leading points needed to hit every bin of a uniform histogram.
pub fn coverage_length(points: &[CirclePoint], bins: usize) -> Option<usize> {
    let mut hit = vec![false; bins];
    let mut remaining = bins;
    for (i, x) in points.iter().enumerate() {
        let b = ((x.value() * bins as f64) as usize).min(bins - 1);
        if !hit[b] {
            hit[b] = true;
            remaining -= 1;
            if remaining == 0 {
                return Some(i + 1);
            }
        }
    }
    None
}

/// Histogram counts of points over `bins` equal arcs.
pub fn histogram(points: &[CirclePoint], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for x in points {
        counts[((x.value() * bins as f64) as usize).min(bins - 1)] += 1;
    }
    counts
}

/// Distance between the s̄ and s″ past-orbit points in an even block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowRow {
    pub ell: u64,
    pub distance: f64,
    pub bound: f64,
}

/// For even block j and ℓ ≤ N_{j−1}, compares X_{σ^{N_{j−1}+ℓ} s̄}(ω) with
/// X_{σ^ℓ s″}(ω). Both are decoded past the end of block j so the shared
/// word of length N_j − N_{j−1} − ℓ is fully used.
pub fn shadowing_check(
    pb: &Pullback,
    omega: NoisePoint,
    schedule: &BlockSchedule,
    bar_s: &SymbolStream,
    s_second: &SymbolStream,
    block: usize,
    extra_depth: usize,
) -> Result<Vec<ShadowRow>> {
    if !block.is_multiple_of(2) || block == 0 || block > schedule.blocks() {
        return Err(Error::InvalidArgument(format!("block {block} is not an even block of the schedule")));
    }
    let m = schedule.n[block - 1];
    let n = schedule.n[block];
    let c_omega = partition(pb, omega)?
        .intervals()
        .iter()
        .map(|i| i.length())
        .fold(0.0, f64::max);
    (0..=m)
        .into_par_iter()
        .map(|ell| {
            let shared = (n - m - ell) as usize;
            let depth = shared + extra_depth;
            let (x, _) = decode_point(pb, omega, &bar_s.shifted(m + ell), depth)?;
            let (y, _) = decode_point(pb, omega, &s_second.shifted(ell), depth)?;
            Ok(ShadowRow {
                ell,
                distance: circle_distance(x, y),
                bound: c_omega * pb.lambda().powi(-(shared as i32)),
            })
        })
        .collect()
}

/// Witness indices for one starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessRow {
    pub shift: u64,
    pub point: CirclePoint,
    pub first_below: Option<u64>,
    pub last_below: Option<u64>,
    pub first_above: Option<u64>,
    pub last_above: Option<u64>,
    pub min_average: f64,
    pub max_average: f64,
}

impl WitnessRow {
    pub fn both(&self) -> bool {
        self.first_below.is_some() && self.first_above.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub omega: NoisePoint,
    pub alpha: f64,
    pub beta: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub rows: Vec<WitnessRow>,
}

impl WitnessReport {
    pub fn all_found(&self) -> bool {
        self.rows.iter().all(WitnessRow::both)
    }

    /// Plain-text lines naming witnesses with a missing index.
    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| !r.both())
            .map(|r| {
                let mut what = Vec::new();
                if r.first_below.is_none() {
                    what.push(format!("no n in [{}, {}] with B_n < {}", self.n_min, self.n_max, self.alpha));
                }
                if r.first_above.is_none() {
                    what.push(format!("no n in [{}, {}] with B_n > {}", self.n_min, self.n_max, self.beta));
                }
                format!("shift {}: {}", r.shift, what.join("; "))
            })
            .collect()
    }
}

/// For each witness y = X_{σ^ℓ s}(ω), ℓ in `shifts`, looks for n ∈ [n_min, n_max]
/// with B_n(φ0; ω, y) < α and with B_n(φ0; ω, y) > β.
#[allow(clippy::too_many_arguments)]
pub fn residual_witness(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    shifts: &[u64],
    obs: &BumpObservable,
    alpha: f64,
    beta: f64,
    n_min: u64,
    n_max: u64,
    depth: usize,
) -> Result<WitnessReport> {
    if !(alpha > 0.0 && alpha < beta) {
        return Err(Error::InvalidArgument(format!("need 0 < alpha < beta, got {alpha}, {beta}")));
    }
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidArgument("need 1 <= n_min <= n_max".into()));
    }
    let rows = shifts
        .iter()
        .map(|&shift| {
            let s = stream.shifted(shift);
            let avgs = birkhoff_running(pb, omega, &s, obs, n_max, depth)?;
            let (point, _) = decode_point(pb, omega, &s, depth + n_max as usize - 1)?;
            let window = &avgs[(n_min - 1) as usize..];
            let idx = |i: usize| n_min + i as u64;
            Ok(WitnessRow {
                shift,
                point,
                first_below: window.iter().position(|&b| b < alpha).map(idx),
                last_below: window.iter().rposition(|&b| b < alpha).map(idx),
                first_above: window.iter().position(|&b| b > beta).map(idx),
                last_above: window.iter().rposition(|&b| b > beta).map(idx),
                min_average: window.iter().copied().fold(f64::INFINITY, f64::min),
                max_average: window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect::<Result<_>>()?;
    Ok(WitnessReport {
        omega,
        alpha,
        beta,
        n_min,
        n_max,
        rows,
    })
}
