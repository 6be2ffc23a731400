//! Recovers the per-request token profile from published savings figures
//! and checks that the default profile is consistent with it.
//!
//! Inputs: list prices per 1M tokens, a switch after 5,000 requests, a $4
//! development cost, and two reported outcomes at 1M requests:
//! Llama 405B Turbo saves $1420 at an 82x cost ratio, GPT-4.1 saves $850 at
//! a 60x ratio. Savings s and ratio r fix both cumulative totals:
//! llm = s*r/(r-1), jitr = s/(r-1). That gives four linear equations in the
//! base tokens (a, b) and the wrapper overhead (wa, wb).

use jitr_core::cost::{CostModel, PricingTable, TrafficProfile, BERT_80M, GPT_41, LLAMA_405B_TURBO};

const N: f64 = 1_000_000.0;
const I: f64 = 5_000.0;
const DEV: f64 = 4.0;
const SUR: f64 = 0.01e-6; // BERT, same input and output price

struct Solved {
    a: f64,
    b: f64,
    wa: f64,
    wb: f64,
}

fn totals(savings: f64, ratio: f64) -> (f64, f64) {
    (savings * ratio / (ratio - 1.0), savings / (ratio - 1.0))
}

fn back_solve() -> Solved {
    let (llm_405, jitr_405) = totals(1420.0, 82.0);
    let (llm_gpt, jitr_gpt) = totals(850.0, 60.0);
    // 405B: 3.5e-6 * (a + b) * N = llm_405
    let a_plus_b = llm_405 / (3.5e-6 * N);
    // GPT-4.1: (2e-6 a + 8e-6 b) * N = llm_gpt
    let b = (llm_gpt / N / 1e-6 - 2.0 * a_plus_b) / 6.0;
    let a = a_plus_b - b;
    let surrogate_tail = (N - I) * SUR * (a + b);
    // 405B wrapped phase: I * 3.5e-6 * (a + b + wa + wb)
    let w_sum = (jitr_405 - DEV - surrogate_tail) / (I * 3.5e-6) - a_plus_b;
    // GPT-4.1 wrapped phase: I * (2e-6 (a + wa) + 8e-6 (b + wb))
    let weighted = (jitr_gpt - DEV - surrogate_tail) / (I * 1e-6) - (2.0 * a + 8.0 * b);
    let wb = (weighted - 2.0 * w_sum) / 6.0;
    Solved { a, b, wa: w_sum - wb, wb }
}

#[test]
fn back_solved_profile_is_near_the_default() {
    let s = back_solve();
    println!("back-solved profile: in {:.1}, out {:.2}, wrapper +{:.1}/+{:.1}", s.a, s.b, s.wa, s.wb);
    let d = TrafficProfile::default();
    assert!((s.a - d.avg_input_tokens as f64).abs() < 10.0, "{}", s.a);
    assert!((s.b - d.avg_output_tokens as f64).abs() < 4.0, "{}", s.b);
    // Total wrapper overhead is well determined; its input/output split less so.
    let w_default = (d.wrapper_input_overhead_tokens + d.wrapper_output_overhead_tokens) as f64;
    assert!((s.wa + s.wb - w_default).abs() / w_default < 0.25, "{} + {}", s.wa, s.wb);
}

#[test]
fn back_solved_profile_reproduces_the_figures() {
    let s = back_solve();
    let profile = TrafficProfile {
        avg_input_tokens: s.a.round() as u64,
        avg_output_tokens: s.b.round() as u64,
        wrapper_input_overhead_tokens: s.wa.round() as u64,
        wrapper_output_overhead_tokens: s.wb.round() as u64,
        ..TrafficProfile::default()
    };
    let pricing = PricingTable::default();
    let m405 = CostModel::new(profile, LLAMA_405B_TURBO, BERT_80M, &pricing).unwrap();
    let mgpt = CostModel::new(profile, GPT_41, BERT_80M, &pricing).unwrap();
    assert!((m405.savings_at(1_000_000).usd() - 1420.0).abs() < 15.0);
    assert!((m405.cost_ratio_at(1_000_000).unwrap() - 82.0).abs() < 2.0);
    assert!((mgpt.savings_at(1_000_000).usd() - 850.0).abs() < 15.0);
    assert!((mgpt.cost_ratio_at(1_000_000).unwrap() - 60.0).abs() < 2.0);
}

#[test]
fn default_profile_is_within_tolerance_of_the_figures() {
    let pricing = PricingTable::default();
    let p = TrafficProfile::default();
    let m405 = CostModel::new(p, LLAMA_405B_TURBO, BERT_80M, &pricing).unwrap();
    let mgpt = CostModel::new(p, GPT_41, BERT_80M, &pricing).unwrap();
    let s405 = m405.savings_at(1_000_000).usd();
    assert!((1278.0..=1562.0).contains(&s405), "{s405}");
    assert!((70.0..=95.0).contains(&m405.cost_ratio_at(1_000_000).unwrap()));
    assert!((50.0..=70.0).contains(&mgpt.cost_ratio_at(1_000_000).unwrap()));
}
