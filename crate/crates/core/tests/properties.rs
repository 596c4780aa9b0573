use histcircle::circle::{endpoint_hausdorff, hausdorff_exact, lift_distance};
use histcircle::conjugacy::Pullback;
use histcircle::historic::{birkhoff_average, BumpObservable};
use histcircle::random_system::iterate_forward;
use histcircle::symbolic::{cylinder, cylinder_lifts, decode_point, encode_point};
use histcircle::*;
use proptest::prelude::*;
use std::sync::OnceLock;

fn default_pullback() -> &'static Pullback {
    static PB: OnceLock<Pullback> = OnceLock::new();
    PB.get_or_init(|| {
        Pullback::new(RandomMapFamily::new(FamilyParams::default()).unwrap(), BaseDynamics::golden())
    })
}

fn arc_strategy() -> impl Strategy<Value = CircleInterval> {
    (0.0..1.0f64, 0.01..0.6f64).prop_map(|(l, len)| CircleInterval::arc(CirclePoint::new(l), len))
}

/// Hausdorff distance by dense sampling of both closures.
fn sampled_hausdorff(a: &CircleInterval, b: &CircleInterval, n: usize) -> f64 {
    let sample = |c: &CircleInterval| -> Vec<CirclePoint> {
        let l = c.left().unwrap();
        (0..=n).map(|i| l.offset(c.length() * i as f64 / n as f64)).collect()
    };
    let (sa, sb) = (sample(a), sample(b));
    let directed = |x: &[CirclePoint], y: &[CirclePoint]| {
        x.iter()
            .map(|p| y.iter().map(|q| circle_distance(*p, *q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&sa, &sb).max(directed(&sb, &sa))
}

fn word(len: usize) -> impl Strategy<Value = SymbolWord> {
    prop::collection::vec(0u32..2, len).prop_map(|v| SymbolWord::new(v, 2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
        let (p, q, r) = (CirclePoint::new(a), CirclePoint::new(b), CirclePoint::new(c));
        prop_assert!(circle_distance(p, r) <= circle_distance(p, q) + circle_distance(q, r) + 1e-15);
        prop_assert!(circle_distance(p, q) <= 0.5);
    }

    #[test]
    fn projection_of_lift_is_identity(x in -50.0..50.0f64) {
        let p = CirclePoint::new(x);
        prop_assert!((0.0..1.0).contains(&p.value()));
        prop_assert_eq!(p.lift().project(), p);
        prop_assert!(lift_distance(x, x + 1.0) < 1e-12);
    }

    #[test]
    fn hausdorff_endpoint_formula(a in arc_strategy(), shift in -0.1..0.1f64, stretch in -0.05..0.05f64) {
        let b = CircleInterval::arc(a.left().unwrap().offset(shift), (a.length() + stretch).max(0.005));
        let exact = hausdorff_exact(&a, &b);
        if let Some(d) = endpoint_hausdorff(&a, &b) {
            prop_assert!((d - exact).abs() < 1e-12, "{} vs {}", d, exact);
        }
        let sampled = sampled_hausdorff(&a, &b, 2000);
        prop_assert!((sampled - exact).abs() < 1e-3, "{} vs {}", sampled, exact);
        prop_assert!((hausdorff_distance(&a, &b) - hausdorff_distance(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_arbitrary_arcs(a in arc_strategy(), b in arc_strategy()) {
        let sampled = sampled_hausdorff(&a, &b, 2000);
        prop_assert!((hausdorff_distance(&a, &b) - sampled).abs() < 1e-3);
    }

    #[test]
    fn rotation_cocycle(w in any::<u64>(), m in -10_000i64..10_000, n in -10_000i64..10_000) {
        let base = BaseDynamics::golden();
        let w = NoisePoint(w);
        prop_assert_eq!(base.theta_pow(w, m + n), base.theta_pow(base.theta_pow(w, m), n));
        prop_assert_eq!(base.theta_inv(base.theta(w)), w);
    }

    #[test]
    fn lift_degree_and_monotonicity(w in 0.0..1.0f64, x in -3.0..3.0f64, dx in 1e-9..0.5f64) {
        let fam = &default_pullback().family();
        let o = NoisePoint::from_f64(w);
        let d = fam.lift_eval(o, x + 1.0) - fam.lift_eval(o, x);
        prop_assert!((d - 2.0).abs() < 1e-12);
        prop_assert!(fam.lift_eval(o, x + dx) > fam.lift_eval(o, x));
    }

    #[test]
    fn skew_cocycle(w in 0.0..1.0f64, x in 0.0..1.0f64, m in 0usize..8, n in 0usize..8) {
        let pb = default_pullback();
        let (fam, base) = (pb.family(), pb.base());
        let o = NoisePoint::from_f64(w);
        let x = CirclePoint::new(x);
        let lhs = iterate_forward(fam, base, o, x, m + n);
        let mid = iterate_forward(fam, base, o, x, m);
        let rhs = iterate_forward(fam, base, base.theta_pow(o, m as i64), mid, n);
        prop_assert!(circle_distance(lhs, rhs) <= 1e-15 * 4f64.powi((m + n) as i32));
    }

    #[test]
    fn branch_contraction(w in 0.0..1.0f64, z in -2.0..2.0f64, dz in -1.0..1.0f64, ell in 0u32..2) {
        let pb = default_pullback();
        let o = NoisePoint::from_f64(w);
        let y0 = pb.inverse_branch(o, z, ell).unwrap();
        let y1 = pb.inverse_branch(o, z + dz, ell).unwrap();
        prop_assert!((y1 - y0).abs() <= dz.abs() / pb.lambda() + 1e-12);
    }

    #[test]
    fn grid_noise_stability(w0 in 0.0..1.0f64, w1 in 0.0..1.0f64, n in 0u32..=12) {
        let pb = default_pullback();
        let g0 = pb.conjugacy_grid(NoisePoint::from_f64(w0), n).unwrap();
        let g1 = pb.conjugacy_grid(NoisePoint::from_f64(w1), n).unwrap();
        prop_assert!(g0.is_strictly_increasing() && g1.is_strictly_increasing());
        for (a, b) in g0.points.iter().zip(&g1.points) {
            prop_assert!((a - b).abs() <= pb.family().delta0());
        }
        prop_assert!(g0.max_gap() <= pb.lambda().powi(-(n as i32)));
    }

    #[test]
    fn h_eval_monotone(w in 0.0..1.0f64, xs in prop::collection::vec(0.0..1.0f64, 2..20)) {
        let pb = default_pullback();
        let g = pb.conjugacy_grid(NoisePoint::from_f64(w), 8).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        for pair in xs.windows(2) {
            if pair[1] > pair[0] {
                prop_assert!(g.h_lift(pair[1]) > g.h_lift(pair[0]));
            }
        }
    }

    #[test]
    fn cylinder_length_and_nesting(w in 0.0..1.0f64, s in (1usize..=30).prop_flat_map(word), t in (1usize..=6).prop_flat_map(word)) {
        let pb = default_pullback();
        let o = NoisePoint::from_f64(w);
        let outer = cylinder(pb, o, &s).unwrap();
        prop_assert!(outer.length() <= pb.lambda().powi(-(s.len() as i32)) + 1e-12);
        let (l, r) = cylinder_lifts(pb, o, &s.concat(&t)).unwrap();
        for x in [l + 0.1 * (r - l), 0.5 * (l + r), r - 0.1 * (r - l)] {
            prop_assert!(outer.contains(CirclePoint::new(x)));
        }
    }

    #[test]
    fn encode_inverts_decode(w in 0.0..1.0f64, seed in any::<u64>()) {
        let pb = default_pullback();
        let o = NoisePoint::from_f64(w);
        let s = SymbolStream::random_digits(2, seed);
        let (x, _) = decode_point(pb, o, &s, 40).unwrap();
        match encode_point(pb, o, x, 12) {
            Ok(code) => prop_assert_eq!(code, s.prefix(12)),
            Err(Error::BoundaryAmbiguity { .. }) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn birkhoff_split(w in 0.0..1.0f64, seed in any::<u64>(), m in 1u64..200, extra in 1u64..300) {
        let pb = default_pullback();
        let obs = BumpObservable::from_gap(0.2, 2).unwrap();
        let o = NoisePoint::from_f64(w);
        let s = SymbolStream::random_digits(2, seed);
        let n = m + extra;
        let total = birkhoff_average(pb, o, &s, &obs, n, 30).unwrap();
        let head = birkhoff_average(pb, o, &s, &obs, m, 30 + extra as usize).unwrap();
        let tail = birkhoff_average(pb, pb.base().theta_pow(o, m as i64), &s.shifted(m), &obs, extra, 30).unwrap();
        let split = m as f64 / n as f64 * head + extra as f64 / n as f64 * tail;
        prop_assert!((total - split).abs() < 1e-14, "{} vs {}", total, split);
        prop_assert!((0.0..=1.0).contains(&total));
    }
}

#[test]
fn derivative_bound_on_dense_grid() {
    let pb = default_pullback();
    let fam = pb.family();
    let mut min = f64::INFINITY;
    for i in 0..1000 {
        let w = i as f64 / 1000.0;
        for j in 0..10_000 {
            min = min.min(fam.derivative_at(w, j as f64 / 10_000.0));
        }
    }
    assert!(min >= fam.lambda());
}
