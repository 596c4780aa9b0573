use histcircle::conjugacy::Pullback;
use histcircle::historic::*;
use histcircle::random_system::iterate_forward;
use histcircle::symbolic::{cylinder_lifts, decode_point, encode_point, partition};
use histcircle::*;

fn pullback(params: FamilyParams) -> Pullback {
    Pullback::new(RandomMapFamily::new(params).unwrap(), BaseDynamics::golden())
}

// Points in a pullback cylinder have the word as their forward itinerary.
#[test]
fn cylinder_equals_itinerary_set() {
    let pb = pullback(FamilyParams::default());
    let omega = NoisePoint::from_f64(0.58);
    let s = SymbolStream::random_digits(2, 99);
    for len in [1usize, 4, 9, 14] {
        let w = s.prefix(len);
        let (l, r) = cylinder_lifts(&pb, omega, &w).unwrap();
        for t in [0.2, 0.5, 0.8] {
            let x = CirclePoint::new(l + t * (r - l));
            assert_eq!(encode_point(&pb, omega, x, len).unwrap(), w);
        }
        // just outside either end the itinerary differs
        for x in [l - 0.2 * (r - l), r + 0.2 * (r - l)] {
            if let Ok(code) = encode_point(&pb, omega, CirclePoint::new(x), len) {
                assert_ne!(code, w);
            }
        }
    }
}

#[test]
fn forward_orbit_of_decoded_point() {
    let pb = pullback(FamilyParams::default());
    let omega = NoisePoint::from_f64(0.05);
    let s = SymbolStream::random_digits(2, 5);
    let (x, _) = decode_point(&pb, omega, &s, 60).unwrap();
    for j in [1usize, 5, 10, 20] {
        let forward = iterate_forward(pb.family(), pb.base(), omega, x, j);
        let w = pb.base().theta_pow(omega, j as i64);
        let (pulled, _) = decode_point(&pb, w, &s.shifted(j as u64), 60 - j).unwrap();
        assert!(circle_distance(forward, pulled) < 1e-15 * pb.family().lipschitz().powi(j as i32) + 1e-13);
    }
}

#[test]
fn residual_decay_rate() {
    let pb = pullback(FamilyParams::default());
    let omega = NoisePoint::from_f64(0.2);
    let levels: Vec<u32> = (6..=12).collect();
    let logs: Vec<f64> = levels
        .iter()
        .map(|&n| pb.conjugacy_residual(omega, n, 2048).unwrap().ln())
        .collect();
    let nbar = levels.iter().map(|&n| n as f64).sum::<f64>() / levels.len() as f64;
    let lbar = logs.iter().sum::<f64>() / logs.len() as f64;
    let (num, den) = levels.iter().zip(&logs).fold((0.0, 0.0), |(a, b), (&n, &l)| {
        (a + (n as f64 - nbar) * (l - lbar), b + (n as f64 - nbar).powi(2))
    });
    assert!(num / den <= -pb.lambda().ln() + 0.05, "slope {}", num / den);
}

#[test]
fn noise_stability_of_partition() {
    let pb = pullback(FamilyParams::default());
    let reference = partition(&pb, NoisePoint(0)).unwrap();
    for i in 1..50 {
        let p = partition(&pb, NoisePoint::from_f64(i as f64 / 50.0)).unwrap();
        for (a, b) in p.boundaries().iter().zip(reference.boundaries()) {
            assert!(circle_distance(*a, b) <= pb.family().delta0());
        }
    }
}

#[test]
fn two_block_oscillation_pipeline() {
    let pb = pullback(FamilyParams::default());
    let obs = BumpObservable::from_gap(0.2, 2).unwrap();
    let sched = build_schedule(&obs, pb.lambda(), &RhoRule::default(), 2, 1_000_000).unwrap();
    assert_eq!(sched.n, vec![0, 56, 5376]);
    let i_star = target_integral(&pb, &obs, 16, 12).unwrap();
    assert!(i_star.value > 0.05);
    let omega = NoisePoint::from_f64(0.3);
    let s2 = SymbolStream::random_digits(2, 17);
    let zeros = SymbolStream::zeros();
    let report = oscillation_report(&pb, omega, &sched, &zeros, &s2, &obs, i_star.value, 40, 1e-3).unwrap();
    assert!(report.all_pass(), "{:#?}", report.rows);
    assert!(report.rows.iter().all(|r| r.sharp_pass));
    assert!(report.rows[0].value < 1e-12);
    assert!(report.gap() > 0.0);
    let csv = report.to_csv();
    assert!(csv.starts_with("block,parity,n_j,checkpoint,value,bound,pass\n"));
    assert_eq!(csv.lines().count(), 3);

    let bar_s = build_bar_s(&sched, &zeros, &s2);
    let shadow = shadowing_check(&pb, omega, &sched, &bar_s, &s2, 2, 10).unwrap();
    assert_eq!(shadow.len(), 57);
    assert!(shadow.iter().all(|r| r.distance <= r.bound + 1e-12));

    let alpha = i_star.value / 3.0;
    let beta = 2.0 * i_star.value / 3.0;
    let shifts: Vec<u64> = (0..3).collect();
    let wit = residual_witness(&pb, omega, &bar_s, &shifts, &obs, alpha, beta, 1, sched.horizon(), 40).unwrap();
    assert!(wit.all_found(), "{:?}", wit.failures());
}

#[test]
fn folding_past_orbit_is_shifted_expansion() {
    let pb = pullback(FamilyParams::folding(2));
    let x = CirclePoint::new(0.3);
    let sched = BlockSchedule {
        rho_tilde: vec![0.5, 0.25],
        n: vec![0, 4, 64],
        certificates: vec![],
    };
    let bar_s = build_bar_s(&sched, &SymbolStream::zeros(), &SymbolStream::digits_of(2, x));
    let pts = past_orbit_points(&pb, NoisePoint(0), &bar_s, 12, 50).unwrap();
    for (l, p) in pts.iter().enumerate().skip(4) {
        let expected = CirclePoint::new(0.3 * 2f64.powi(l as i32 - 4));
        assert!(circle_distance(*p, expected) < 1e-9, "{l}: {p} vs {expected}");
    }
}

#[test]
fn past_orbit_dense_histogram() {
    let pb = pullback(FamilyParams::default());
    let obs = BumpObservable::from_gap(0.2, 2).unwrap();
    let sched = build_schedule(&obs, pb.lambda(), &RhoRule::default(), 2, 1_000_000).unwrap();
    let bar_s = build_bar_s(&sched, &SymbolStream::zeros(), &SymbolStream::random_digits(2, 8));
    let pts = past_orbit_points(&pb, NoisePoint::from_f64(0.6), &bar_s, 4000, 40).unwrap();
    let l = coverage_length(&pts, 100).expect("all bins hit");
    assert!(l > 56 && l < 4000);
}
