//! Cost functions checked against direct per-request summation.

use jitr_core::cost::{CostModel, Money, TimeModel, TokenPrice, TrafficProfile};
use proptest::prelude::*;

fn price(input_micro: u32, output_micro: u32) -> TokenPrice {
    // Random prices as whole micro-dollars per 1M tokens.
    let usd = |m: u32| format!("{}.{:06}", m / 1_000_000, m % 1_000_000);
    TokenPrice::from_usd_per_million(&usd(input_micro), &usd(output_micro)).unwrap()
}

/// Cumulative costs by adding one request at a time.
fn summed(model: &CostModel, n: u64) -> (Money, Money) {
    let p = &model.profile;
    let mut llm = Money::ZERO;
    let mut jitr = Money::ZERO;
    for k in 0..n {
        llm = llm + model.llm.cost(p.avg_input_tokens, p.avg_output_tokens);
        if k < p.switch_index {
            jitr = jitr
                + model.llm.cost(
                    p.avg_input_tokens + p.wrapper_input_overhead_tokens,
                    p.avg_output_tokens + p.wrapper_output_overhead_tokens,
                );
        } else {
            jitr = jitr + model.surrogate.cost(p.avg_input_tokens, p.avg_output_tokens);
        }
    }
    if n >= p.switch_index {
        jitr = jitr + p.dev_cost;
    }
    (llm, jitr)
}

/// Smallest n >= 1 from which jitr stays at or below llm, by scanning.
/// Past the switch both curves are linear, so `horizon` settles the tail.
fn scanned_break_even(model: &CostModel, horizon: u64) -> Option<u64> {
    let p = &model.profile;
    let mut llm = Money::ZERO;
    let mut jitr = Money::ZERO;
    let mut candidate = None;
    for n in 1..=horizon {
        llm = llm + model.llm.cost(p.avg_input_tokens, p.avg_output_tokens);
        jitr = jitr
            + if n <= p.switch_index {
                model.llm.cost(
                    p.avg_input_tokens + p.wrapper_input_overhead_tokens,
                    p.avg_output_tokens + p.wrapper_output_overhead_tokens,
                )
            } else {
                model.surrogate.cost(p.avg_input_tokens, p.avg_output_tokens)
            };
        if n == p.switch_index.max(1) {
            jitr = jitr + p.dev_cost;
        }
        if jitr <= llm {
            candidate.get_or_insert(n);
        } else {
            candidate = None;
        }
    }
    // A candidate only counts if the slope past the horizon keeps it below.
    let sur = model.surrogate.cost(p.avg_input_tokens, p.avg_output_tokens);
    let l = model.llm.cost(p.avg_input_tokens, p.avg_output_tokens);
    candidate.filter(|_| sur <= l)
}

fn arb_model() -> impl Strategy<Value = CostModel> {
    (
        (1u32..5_000_000, 1u32..10_000_000),
        (0u32..200_000, 0u32..200_000),
        (1u64..600, 0u64..60, 0u64..200, 0u64..40),
        (0u64..400, 0u64..2_000_000),
    )
        .prop_map(|((li, lo), (si, so), (a, b, wa, wb), (i, dev_micro))| CostModel {
            llm: price(li, lo),
            surrogate: price(si, so),
            profile: TrafficProfile {
                avg_input_tokens: a,
                avg_output_tokens: b,
                wrapper_input_overhead_tokens: wa,
                wrapper_output_overhead_tokens: wb,
                switch_index: i,
                dev_cost: Money::from_pico(dev_micro as i64 * 1_000_000),
            },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cumulative_costs_match_summation(model in arb_model(), n in 0u64..1_000) {
        let (llm, jitr) = summed(&model, n);
        prop_assert_eq!(model.llm_cumulative(n), llm);
        prop_assert_eq!(model.jitr_cumulative(n), jitr);
        prop_assert_eq!(model.savings_at(n), llm - jitr);
    }

    #[test]
    fn break_even_matches_scan(model in arb_model()) {
        let closed = model.break_even();
        // Horizon beyond any closed-form answer, so the scan sees the crossing.
        let horizon = closed.map_or(20_000, |n| n + 500).min(400_000);
        let scanned = scanned_break_even(&model, horizon);
        match closed {
            Some(n) if n < horizon => prop_assert_eq!(scanned, Some(n)),
            Some(_) => {}
            None => {
                let l = model.llm_per_request();
                let s = model.surrogate_per_request();
                // Either the surrogate is not cheaper or the gap never closes.
                prop_assert!(s >= l || scanned.is_none());
            }
        }
    }

    #[test]
    fn curves_are_monotone(model in arb_model(), n in 0u64..100_000) {
        prop_assert!(model.llm_cumulative(n + 1) >= model.llm_cumulative(n));
        prop_assert!(model.jitr_cumulative(n + 1) >= model.jitr_cumulative(n));
    }

    #[test]
    fn savings_increase_past_break_even(model in arb_model(), k in 1u64..10_000) {
        if let Some(n) = model.break_even() {
            if model.surrogate_per_request() < model.llm_per_request() {
                let a = n.max(model.profile.switch_index) + k;
                prop_assert!(model.savings_at(a + 1) > model.savings_at(a));
            }
        }
    }

    #[test]
    fn time_break_even_is_the_first_crossing(
        llm in 1.0f64..50.0,
        factor in 1.5f64..40.0,
        dev in 0.0f64..20_000.0,
        i in 0u64..10_000,
    ) {
        let t = TimeModel::new(llm, llm * factor, dev, i).unwrap();
        let n = t.break_even();
        prop_assert!(t.jitr_time(n) <= t.llm_time(n));
        if n > 1 {
            prop_assert!(t.jitr_time(n - 1) > t.llm_time(n - 1));
        }
        prop_assert!(t.speedup(2 * n + 2_000_000) > t.speedup(n + 1_000_000) - 1e-12);
    }
}

#[test]
fn equal_prices_never_break_even() {
    let p = price(1_000_000, 1_000_000);
    let m = CostModel { llm: p, surrogate: p, profile: TrafficProfile::default() };
    assert_eq!(m.break_even(), None);
}

#[test]
fn jitr_at_switch_is_wrapped_plus_dev() {
    let m = CostModel {
        llm: price(2_000_000, 8_000_000),
        surrogate: price(10_000, 10_000),
        profile: TrafficProfile::default(),
    };
    let i = m.profile.switch_index;
    assert_eq!(m.jitr_cumulative(i), m.wrapped_per_request() * i + m.profile.dev_cost);
    assert_eq!(m.jitr_cumulative(0), Money::ZERO);
}
