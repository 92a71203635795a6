use chrono::NaiveDate;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rmt_crisis::calibration::DangerZone;
use rmt_crisis::evaluation::investment_ratio;
use rmt_crisis::indicators::{enumerate_indicators, IndicatorPanel, IndicatorSeries};
use rmt_crisis::strategy::{
    decide, gamma, gamma_at, simulate_orders, step_portfolio, OrderKind, Portfolio, StrategyParams,
};

fn order() -> impl Strategy<Value = OrderKind> {
    prop::sample::select(OrderKind::ALL.to_vec())
}

fn price_path(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.1f64..0.1, len).prop_map(|r| {
        let mut p = 50.0;
        r.iter()
            .map(|x| {
                p *= x.exp();
                p
            })
            .collect()
    })
}

fn portfolio() -> impl Strategy<Value = Portfolio> {
    (0.0f64..1e6, 0u64..50_000).prop_map(|(cash, shares)| Portfolio { cash, shares })
}

proptest! {
    #[test]
    fn holdings_never_go_negative(
        initial in portfolio(),
        prices in price_path(2..120),
        orders in prop::collection::vec(order(), 120),
        rate in 0.0f64..0.1,
        lag in 0usize..3,
    ) {
        let rates = vec![rate; prices.len()];
        let sim = simulate_orders(initial, &prices, &rates, &orders[..prices.len()], lag);
        for k in 0..prices.len() {
            prop_assert!(sim.cash[k] >= 0.0);
            if initial.cash > 0.0 || initial.shares > 0 {
                prop_assert!(sim.values[k] > 0.0);
                prop_assert!((0.0..=1.0).contains(&sim.ir[k]), "ir {}", sim.ir[k]);
            }
        }
    }

    #[test]
    fn stay_with_zero_rate_tracks_shares_times_price(initial in portfolio(), prices in price_path(2..80)) {
        let rates = vec![0.0; prices.len()];
        let sim = simulate_orders(initial, &prices, &rates, &vec![OrderKind::Stay; prices.len()], 0);
        for k in 1..prices.len() {
            prop_assert_eq!(sim.shares[k], initial.shares);
            let change = sim.values[k] - sim.values[k - 1];
            let expected = initial.shares as f64 * (prices[k] - prices[k - 1]);
            prop_assert!((change - expected).abs() <= 1e-9 * sim.values[k].max(1.0));
        }
    }

    #[test]
    fn selling_lowers_the_investment_ratio(initial in portfolio(), price in 1.0f64..500.0) {
        prop_assume!(initial.shares > 0);
        let before = investment_ratio(&initial, price).unwrap();
        let after = step_portfolio(initial, OrderKind::Sell, price, 0.0);
        prop_assert!(after.shares < initial.shares);
        prop_assert!(investment_ratio(&after, price).unwrap() < before);
    }

    #[test]
    fn buying_never_overdraws(initial in portfolio(), price in 0.5f64..500.0, rate in 0.0f64..0.1) {
        let after = step_portfolio(initial, OrderKind::Buy, price, rate);
        prop_assert!(after.cash >= 0.0);
        prop_assert!(after.shares >= initial.shares);
    }

    #[test]
    fn decision_depends_on_vote_count_only(flags in prop::collection::vec(any::<bool>(), 29), seed in any::<u64>()) {
        let mut shuffled = flags.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(gamma(&flags), gamma(&shuffled));
        prop_assert_eq!(decide(gamma(&flags)), decide(gamma(&shuffled)));
    }

    #[test]
    fn gamma_ignores_indicator_order(values in prop::collection::vec(0.0f64..1.0, 29 * 30), seed in any::<u64>()) {
        let ids = enumerate_indicators();
        let series: Vec<IndicatorSeries> = ids
            .iter()
            .enumerate()
            .map(|(k, id)| IndicatorSeries { id: *id, values: values[k * 30..(k + 1) * 30].to_vec() })
            .collect();
        let zones: Vec<Option<DangerZone>> = (0..29)
            .map(|k| (k % 7 != 0).then_some(DangerZone {
                lo: 0.1 + 0.02 * k as f64,
                hi: 0.5 + 0.01 * k as f64,
                support_count: 1,
                survivor_count: 1,
                clip_lo: 0.0,
                clip_hi: 1.0,
            }))
            .collect();
        let dates = vec![NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(); 30];
        let panel = IndicatorPanel { first_anchor: 5, dates: dates.clone(), series: series.clone() };
        let mut order: Vec<usize> = (0..29).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = IndicatorPanel {
            first_anchor: 5,
            dates,
            series: order.iter().map(|&k| series[k].clone()).collect(),
        };
        let permuted_zones: Vec<_> = order.iter().map(|&k| zones[k]).collect();
        let params = StrategyParams { lookback: 20, ..StrategyParams::new(0.1, 12).unwrap() };
        for t0 in 25..35 {
            prop_assert_eq!(
                gamma_at(&panel, &zones, t0, &params).unwrap(),
                gamma_at(&permuted, &permuted_zones, t0, &params).unwrap()
            );
        }
    }
}

#[test]
fn decide_is_a_step_function_of_gamma() {
    for g in 0..=29 {
        let expected = match g {
            0 | 1 => OrderKind::Buy,
            2..=4 => OrderKind::Stay,
            _ => OrderKind::Sell,
        };
        assert_eq!(decide(g), expected);
    }
}
