mod common;

use proptest::prelude::*;

use rmt_crisis::calibration::{find_danger_zone, forward_mdd, max_drawdown, CalibrationPoint};
use rmt_crisis::evaluation::full_period_mdd;
use rmt_crisis::stats::percentile;

fn prices(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.08f64..0.08, 2..max_len).prop_map(|r| {
        let mut p = 100.0;
        r.iter()
            .map(|x| {
                p *= (*x as f64).exp();
                p
            })
            .collect()
    })
}

fn points() -> impl Strategy<Value = Vec<CalibrationPoint>> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..0.5), 1..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (value, forward_mdd))| CalibrationPoint {
                anchor: i + 1,
                value,
                forward_mdd,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn forward_mdd_matches_pairwise_oracle(p in prices(120), h in 1usize..60, t in 0usize..60) {
        let t0 = t % p.len();
        prop_assume!(t0 + h < p.len());
        let fast = forward_mdd(&p, t0, h).unwrap();
        prop_assert_eq!(fast, common::brute_mdd(&p[t0..=t0 + h]));
    }
}

proptest! {
    #[test]
    fn mdd_lies_in_unit_interval(p in prices(200)) {
        let m = max_drawdown(&p);
        prop_assert!((0.0..1.0).contains(&m));
    }

    #[test]
    fn full_period_mdd_contains_every_horizon(p in prices(200), h in 1usize..50, t in 0usize..200) {
        let t0 = t % p.len();
        prop_assume!(t0 + h < p.len());
        prop_assert!(full_period_mdd(&p) >= forward_mdd(&p, t0, h).unwrap());
    }

    #[test]
    fn zone_support_is_maximal(pts in points(), threshold in 0.0f64..0.5) {
        let Ok(z) = find_danger_zone(&pts, threshold) else {
            prop_assert!(pts.iter().all(|p| p.forward_mdd < threshold || p.value < z_clip(&pts).0 || p.value > z_clip(&pts).1));
            return Ok(());
        };
        let values: Vec<f64> = pts.iter().map(|p| p.value).collect();
        let survivor: Vec<bool> = pts.iter().map(|p| p.forward_mdd >= threshold).collect();
        let best = common::brute_zone_count(&values, &survivor, (z.clip_lo, z.clip_hi), z.hi - z.lo);
        prop_assert_eq!(z.support_count, best);
        let inside = pts
            .iter()
            .filter(|p| p.forward_mdd >= threshold && p.value >= z.clip_lo && p.value <= z.clip_hi)
            .filter(|p| p.value >= z.lo && p.value <= z.hi)
            .count();
        prop_assert_eq!(z.support_count, inside);
    }

    #[test]
    fn zone_width_is_fifteen_percent_of_clipped_range(pts in points(), threshold in 0.0f64..0.3) {
        if let Ok(z) = find_danger_zone(&pts, threshold) {
            let (lo, hi) = z_clip(&pts);
            prop_assert_eq!(z.clip_lo, lo);
            prop_assert_eq!(z.clip_hi, hi);
            prop_assert!(((z.hi - z.lo) - 0.15 * (hi - lo)).abs() <= 1e-12 * (1.0 + hi.abs() + lo.abs()));
            prop_assert!(z.lo >= lo - 1e-12 && z.hi <= hi + 1e-12);
        }
    }

    #[test]
    fn raising_threshold_never_adds_support(pts in points(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (low, high) = if a <= b { (a, b) } else { (b, a) };
        let count = |t| find_danger_zone(&pts, t).map_or(0, |z| z.support_count);
        let survivors = |t| find_danger_zone(&pts, t).map_or(0, |z| z.survivor_count);
        prop_assert!(count(high) <= count(low));
        prop_assert!(survivors(high) <= survivors(low));
    }
}

fn z_clip(pts: &[CalibrationPoint]) -> (f64, f64) {
    let v: Vec<f64> = pts.iter().map(|p| p.value).collect();
    let lo = common::oracle_percentile(&v, 1.0);
    let hi = common::oracle_percentile(&v, 99.0);
    assert_eq!(lo, percentile(&v, 1.0));
    (lo, hi)
}
