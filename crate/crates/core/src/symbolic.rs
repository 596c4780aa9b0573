//! Random Markov partition, cylinder arcs, coding and decoding of symbol
//! sequences.
//!
//! A symbol sequence s is decoded at ω by pulling the random fixed point back
//! along the word: X_s(ω) ≈ F_{s_0}(ω) ∘ F_{s_1}(θω) ∘ ⋯ ∘ F_{s_{d−1}}(θ^{d−1}ω)(p(θ^d ω)).
//! Orbit segments are produced by one backward sweep per chunk, which yields
//! X_{σ^j s}(θ^j ω) for every j in the chunk.

use crate::circle::{circle_distance, CircleInterval, CirclePoint};
use crate::conjugacy::{normalize_into, FibreMap, Pullback};
use crate::error::{Error, Result};
use crate::random_system::NoisePoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;

/// Points decoded per work unit of the parallel sweep.
pub const SWEEP_CHUNK: u64 = 1 << 14;

/// A finite word over {0, …, k−1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolWord {
    symbols: Vec<u32>,
}

impl SymbolWord {
    pub fn new(symbols: Vec<u32>, k: u32) -> Result<Self> {
        if let Some(bad) = symbols.iter().find(|&&s| s >= k) {
            return Err(Error::InvalidArgument(format!("symbol {bad} outside 0..{k}")));
        }
        Ok(SymbolWord { symbols })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.symbols[i]
    }

    /// [s]_m^n = (s_m, …, s_n), inclusive on both ends.
    pub fn slice(&self, m: usize, n: usize) -> SymbolWord {
        SymbolWord {
            symbols: self.symbols[m..=n].to_vec(),
        }
    }

    pub fn concat(&self, other: &SymbolWord) -> SymbolWord {
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&other.symbols);
        SymbolWord { symbols }
    }

    /// Index j = Σ w_i k^{n−1−i} of the level-n cylinder in grid order.
    pub fn grid_index(&self, k: u32) -> u64 {
        self.symbols
            .iter()
            .fold(0u64, |acc, &s| acc * k as u64 + s as u64)
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A one-sided symbol sequence described by its generator, evaluable at any
/// index without materialising it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolStream {
    /// The periodic repetition of a nonempty word.
    Periodic { word: Vec<u32> },
    /// Base-k expansion of x, exact for the dyadic rational round(x·2^64)/2^64.
    DigitsOf { k: u32, x: f64 },
    /// Independent uniform digits from a counter-based hash; the itinerary of
    /// a random point with a non-terminating expansion.
    RandomDigits { k: u32, seed: u64 },
    /// The block splice: index i with N_{j−1} ≤ i < N_j reads `odd` (j odd) or
    /// `even` (j even) at offset i − N_{j−1}. Indices past the last boundary
    /// continue the final block.
    BlockComposite {
        boundaries: Vec<u64>,
        odd: Box<SymbolStream>,
        even: Box<SymbolStream>,
    },
    /// σ^by applied to `inner`.
    Shifted { inner: Box<SymbolStream>, by: u64 },
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SymbolStream {
    pub fn zeros() -> Self {
        SymbolStream::Periodic { word: vec![0] }
    }

    pub fn periodic(word: Vec<u32>) -> Self {
        SymbolStream::Periodic { word }
    }

    pub fn digits_of(k: u32, x: CirclePoint) -> Self {
        SymbolStream::DigitsOf { k, x: x.value() }
    }

    pub fn random_digits(k: u32, seed: u64) -> Self {
        SymbolStream::RandomDigits { k, seed }
    }

    /// Checks every symbol the stream can produce lies in 0..k.
    pub fn validate(&self, k: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            SymbolStream::Periodic { word } => {
                if word.is_empty() {
                    return bad("periodic stream needs a nonempty word".into());
                }
                SymbolWord::new(word.clone(), k).map(|_| ())
            }
            SymbolStream::DigitsOf { k: kk, x } => {
                if *kk != k {
                    return bad(format!("digit stream base {kk} differs from k = {k}"));
                }
                if !(0.0..1.0).contains(x) {
                    return bad(format!("digit stream point {x} outside [0, 1)"));
                }
                Ok(())
            }
            SymbolStream::RandomDigits { k: kk, .. } => {
                if *kk != k {
                    return bad(format!("digit stream base {kk} differs from k = {k}"));
                }
                Ok(())
            }
            SymbolStream::BlockComposite {
                boundaries,
                odd,
                even,
            } => {
                if boundaries.len() < 2
                    || boundaries[0] != 0
                    || boundaries.windows(2).any(|w| w[1] <= w[0])
                {
                    return bad("block boundaries must start at 0 and increase".into());
                }
                odd.validate(k)?;
                even.validate(k)
            }
            SymbolStream::Shifted { inner, .. } => inner.validate(k),
        }
    }

    /// s_j.
    pub fn symbol(&self, j: u64) -> u32 {
        match self {
            SymbolStream::Periodic { word } => word[(j % word.len() as u64) as usize],
            SymbolStream::DigitsOf { k, x } => {
                let m = (x * 18_446_744_073_709_551_616.0) as u128 as u64;
                let kk = *k as u64;
                let r = m.wrapping_mul(wrapping_pow(kk, j));
                ((r as u128 * kk as u128) >> 64) as u32
            }
            SymbolStream::RandomDigits { k, seed } => {
                let h = splitmix64(
                    splitmix64(*seed).wrapping_add((j + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                );
                ((h as u128 * *k as u128) >> 64) as u32
            }
            SymbolStream::BlockComposite {
                boundaries,
                odd,
                even,
            } => {
                let (block, start) = block_of(boundaries, j);
                let source = if block % 2 == 1 { odd } else { even };
                source.symbol(j - start)
            }
            SymbolStream::Shifted { inner, by } => inner.symbol(j + by),
        }
    }

    /// σ^m of the stream.
    pub fn shifted(&self, m: u64) -> SymbolStream {
        if m == 0 {
            return self.clone();
        }
        match self {
            SymbolStream::Shifted { inner, by } => SymbolStream::Shifted {
                inner: inner.clone(),
                by: by + m,
            },
            other => SymbolStream::Shifted {
                inner: Box::new(other.clone()),
                by: m,
            },
        }
    }

    /// [s]_0^{n−1}.
    pub fn prefix(&self, n: usize) -> SymbolWord {
        SymbolWord {
            symbols: (0..n as u64).map(|j| self.symbol(j)).collect(),
        }
    }

    /// [s]_m^{n} as a word.
    pub fn window(&self, m: u64, n: u64) -> SymbolWord {
        SymbolWord {
            symbols: (m..=n).map(|j| self.symbol(j)).collect(),
        }
    }
}

/// k^j mod 2^64.
#[inline]
fn wrapping_pow(mut base: u64, mut e: u64) -> u64 {
    let mut acc: u64 = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc.wrapping_mul(base);
        }
        base = base.wrapping_mul(base);
        e >>= 1;
    }
    acc
}

/// Block number j ≥ 1 containing index i and its start N_{j−1}.
#[inline]
fn block_of(boundaries: &[u64], i: u64) -> (usize, u64) {
    let last = boundaries.len() - 1;
    let idx = boundaries.partition_point(|&b| b <= i);
    let block = idx.min(last).max(1);
    (block, boundaries[block - 1])
}

/// The random Markov partition {𝓘_j^ω} with boundaries a_j^1(ω).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovPartitionView {
    pub omega: NoisePoint,
    pub k: u32,
    /// Lifts a_0^1 < ⋯ < a_k^1 = a_0^1 + 1.
    pub lifts: Vec<f64>,
}

impl MarkovPartitionView {
    pub fn boundaries(&self) -> Vec<CirclePoint> {
        self.lifts[..self.k as usize]
            .iter()
            .map(|&a| CirclePoint::new(a))
            .collect()
    }

    pub fn interval(&self, j: usize) -> CircleInterval {
        CircleInterval::from_lifts(self.lifts[j], self.lifts[j + 1])
    }

    pub fn intervals(&self) -> Vec<CircleInterval> {
        (0..self.k as usize).map(|j| self.interval(j)).collect()
    }

    /// Index of the interval containing x and the distance to the nearest
    /// boundary.
    pub fn locate(&self, x: CirclePoint) -> (u32, f64) {
        let y = normalize_into(x.value(), self.lifts[0]);
        let j = self.lifts[1..self.k as usize].partition_point(|&a| a <= y);
        let nearest = self
            .boundaries()
            .iter()
            .map(|&b| circle_distance(b, x))
            .fold(f64::INFINITY, f64::min);
        (j as u32, nearest)
    }

    /// CSV rows (word, left, length).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("word,left,length\n");
        for j in 0..self.k as usize {
            let arc = self.interval(j);
            let _ = writeln!(out, "{j},{},{}", arc.left().unwrap().value(), arc.length());
        }
        out
    }
}

/// The partition at ω from the exact level-1 grid points.
pub fn partition(pb: &Pullback, omega: NoisePoint) -> Result<MarkovPartitionView> {
    let p = pb.fixed_point(pb.base().theta(omega))?;
    let k = pb.k();
    let mut lifts = Vec::with_capacity(k as usize + 1);
    for ell in 0..k {
        lifts.push(pb.inverse_branch(omega, p, ell)?);
    }
    lifts.push(lifts[0] + 1.0);
    Ok(MarkovPartitionView { omega, k, lifts })
}

/// The gap arcs (J, J′) avoided by every 𝓘_0^ω: J′ is the complement arc of
/// [−δ0, 1/k + δ0] with 10% of its length removed at each end, and J is J′
/// with 25% of its length removed at each end.
pub fn gap_interval(delta0: f64, k: u32) -> Result<(CircleInterval, CircleInterval)> {
    let gap = 1.0 - 1.0 / k as f64 - 2.0 * delta0;
    if gap.is_nan() || gap <= 0.0 || delta0 < 0.0 {
        return Err(Error::EmptyGap { delta0, k });
    }
    let left = 1.0 / k as f64 + delta0;
    let j_prime = CircleInterval::arc(CirclePoint::new(left + 0.1 * gap), 0.8 * gap);
    let j = CircleInterval::arc(CirclePoint::new(left + 0.3 * gap), 0.4 * gap);
    Ok((j, j_prime))
}

/// Pulls `base` back along the first `word.len()` symbols starting at ω.
fn pull_back_word(pb: &Pullback, omega: NoisePoint, word: &[u32], base: f64) -> Result<f64> {
    let b = pb.base();
    let mut w = b.theta_pow(omega, word.len() as i64);
    let mut x = base;
    for &s in word.iter().rev() {
        w = b.theta_inv(w);
        x = pb.branch(w, x + s as f64)?;
    }
    Ok(x)
}

/// Lift endpoints (left, right) of the cylinder 𝓘_w^ω.
pub fn cylinder_lifts(pb: &Pullback, omega: NoisePoint, word: &SymbolWord) -> Result<(f64, f64)> {
    if word.is_empty() {
        return Err(Error::InvalidArgument("cylinder word must be nonempty".into()));
    }
    let p = pb.fixed_point(pb.base().theta_pow(omega, word.len() as i64))?;
    let left = pull_back_word(pb, omega, word.symbols(), p)?;
    let right = pull_back_word(pb, omega, word.symbols(), p + 1.0)?;
    Ok((left, right))
}

/// 𝓘_w^ω as a left-closed right-open arc.
pub fn cylinder(pb: &Pullback, omega: NoisePoint, word: &SymbolWord) -> Result<CircleInterval> {
    let (left, right) = cylinder_lifts(pb, omega, word)?;
    Ok(CircleInterval::from_lifts(left, right))
}

/// CSV rows (word, left, length) for a list of cylinders at ω.
pub fn cylinders_csv(pb: &Pullback, omega: NoisePoint, words: &[SymbolWord]) -> Result<String> {
    let mut out = String::from("word,left,length\n");
    for w in words {
        let (l, r) = cylinder_lifts(pb, omega, w)?;
        let _ = writeln!(out, "{w},{},{}", CirclePoint::new(l).value(), r - l);
    }
    Ok(out)
}

/// Lift of the left endpoint of 𝓘^ω_{[s]_0^{d−1}}.
pub fn decode_lift(pb: &Pullback, omega: NoisePoint, stream: &SymbolStream, depth: usize) -> Result<f64> {
    let mut out = 0.0;
    sweep(pb, omega, stream, 0, 1, depth, |_, x| out = x)?;
    Ok(out)
}

/// X_s(ω) approximated at depth d, with the bound λ^{−d} on the error.
pub fn decode_point(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    depth: usize,
) -> Result<(CirclePoint, f64)> {
    if depth == 0 {
        return Err(Error::InvalidArgument("decode depth must be >= 1".into()));
    }
    let x = decode_lift(pb, omega, stream, depth)?;
    Ok((CirclePoint::new(x), pb.lambda().powi(-(depth as i32))))
}

/// One backward pass producing x_j = X_{σ^j s}(θ^j ω) for a ≤ j < b, visited in
/// descending j. Point j is decoded at depth b − 1 − j + depth ≥ depth.
pub(crate) fn sweep<F: FnMut(u64, f64)>(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    a: u64,
    b: u64,
    depth: usize,
    mut visit: F,
) -> Result<()> {
    if b <= a {
        return Ok(());
    }
    let depth = depth.max(1) as u64;
    let end = b - 1 + depth;
    let base = pb.base();
    let mut w = base.theta_pow(omega, end as i64);
    let mut x = pb.fixed_point(w)?;
    let fam = pb.family();
    let solver = pb.solver();
    for j in (a..end).rev() {
        w = base.theta_inv(w);
        let map = FibreMap::new(fam, w);
        x = solver.solve(&map, w, x + stream.symbol(j) as f64)?;
        if j < b {
            visit(j, x);
        }
    }
    Ok(())
}

/// Fixed segmentation of [a, b) into sweep chunks, split further at `cuts`.
pub(crate) fn segments(a: u64, b: u64, cuts: &[u64]) -> Vec<(u64, u64)> {
    let mut marks: Vec<u64> = Vec::new();
    let mut c = a.div_ceil(SWEEP_CHUNK) * SWEEP_CHUNK;
    while c < b {
        if c > a {
            marks.push(c);
        }
        c += SWEEP_CHUNK;
    }
    marks.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
    marks.sort_unstable();
    marks.dedup();
    let mut out = Vec::with_capacity(marks.len() + 1);
    let mut lo = a;
    for m in marks {
        out.push((lo, m));
        lo = m;
    }
    if lo < b {
        out.push((lo, b));
    }
    out
}

/// Orbit X_{σ^j s}(θ^j ω) for start ≤ j < start + count, each with depth ≥ d.
pub fn decode_orbit(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    start: u64,
    count: u64,
    depth: usize,
) -> Result<Vec<CirclePoint>> {
    let parts: Vec<Vec<CirclePoint>> = segments(start, start + count, &[])
        .into_par_iter()
        .map(|(a, b)| {
            let mut buf = vec![CirclePoint::ZERO; (b - a) as usize];
            sweep(pb, omega, stream, a, b, depth, |j, x| {
                buf[(j - a) as usize] = CirclePoint::new(x)
            })?;
            Ok(buf)
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// max_{j<J} d(f_{θ^j ω}(X_{σ^j s}(θ^j ω)), X_{σ^{j+1} s}(θ^{j+1} ω)), every
/// point decoded at exactly depth d.
pub fn equivariance_check(
    pb: &Pullback,
    omega: NoisePoint,
    stream: &SymbolStream,
    depth: usize,
    steps: usize,
) -> Result<f64> {
    let base = pb.base();
    let points: Vec<CirclePoint> = (0..=steps as i64)
        .into_par_iter()
        .map(|j| {
            let w = base.theta_pow(omega, j);
            decode_point(pb, w, &stream.shifted(j as u64), depth).map(|(x, _)| x)
        })
        .collect::<Result<_>>()?;
    Ok((0..steps)
        .map(|j| {
            let w = base.theta_pow(omega, j as i64);
            circle_distance(pb.family().step(w, points[j]), points[j + 1])
        })
        .fold(0.0, f64::max))
}

/// Itinerary of x under the random orbit from ω for n steps.
pub fn encode_point(pb: &Pullback, omega: NoisePoint, x: CirclePoint, n: usize) -> Result<SymbolWord> {
    let tol = 10.0 * pb.lambda().powi(-(pb.fixed_point_depth() as i32));
    let mut symbols = Vec::with_capacity(n);
    let mut w = omega;
    let mut y = x;
    for j in 0..n {
        let part = partition(pb, w)?;
        let (digit, distance) = part.locate(y);
        if distance <= tol {
            return Err(Error::BoundaryAmbiguity { index: j, distance });
        }
        symbols.push(digit);
        y = pb.family().step(w, y);
        w = pb.base().theta(w);
    }
    Ok(SymbolWord { symbols })
}
