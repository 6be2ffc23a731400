//! Token-level cost accounting and break-even analysis.
//!
//! All money is carried as integer picodollars (1e-12 USD). A price quoted in
//! USD per one million tokens with at most six fractional digits is then an
//! exact integer number of picodollars per token, so cumulative costs over
//! millions of requests involve no rounding at all.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PICO_PER_USD: i64 = 1_000_000_000_000;

/// An amount of money in picodollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_pico(pico: i64) -> Self {
        Money(pico)
    }

    pub const fn from_micro(micro: i64) -> Self {
        Money(micro * 1_000_000)
    }

    pub const fn pico(self) -> i64 {
        self.0
    }

    pub fn usd(self) -> f64 {
        self.0 as f64 / PICO_PER_USD as f64
    }

    /// Parses a decimal dollar amount such as `"3.50"` or `"0.000001"`.
    pub fn parse_usd(text: &str) -> Result<Self> {
        let bad = || Error::InvalidPrice(text.to_string());
        let t = text.trim();
        let t = t.strip_prefix('$').unwrap_or(t);
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if frac_part.len() > 6 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let mut micro_frac: i64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            micro_frac += i64::from(b - b'0') * 10i64.pow(5 - i as u32);
        }
        whole
            .checked_mul(1_000_000)
            .and_then(|w| w.checked_add(micro_frac))
            .and_then(|m| m.checked_mul(1_000_000))
            .map(Money)
            .ok_or_else(bad)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Mul<u64> for Money {
    type Output = Money;
    fn mul(self, rhs: u64) -> Money {
        Money(self.0 * rhs as i64)
    }
}

impl fmt::Display for Money {
    /// Dollars with six fractional digits, e.g. `$0.000880`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let micro = (abs + 500_000) / 1_000_000;
        write!(f, "{sign}${}.{:06}", micro / 1_000_000, micro % 1_000_000)
    }
}

/// Price of one model in USD per one million tokens, stored as picodollars
/// per token (numerically equal to microdollars per million tokens).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPrice {
    pub input: Money,
    pub output: Money,
}

impl TokenPrice {
    /// Builds a price from USD-per-million-token decimal strings.
    pub fn from_usd_per_million(input: &str, output: &str) -> Result<Self> {
        Ok(TokenPrice {
            input: per_token(Money::parse_usd(input)?),
            output: per_token(Money::parse_usd(output)?),
        })
    }

    pub fn input_per_million(&self) -> Money {
        self.input * 1_000_000
    }

    pub fn output_per_million(&self) -> Money {
        self.output * 1_000_000
    }

    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> Money {
        self.input * tokens_in + self.output * tokens_out
    }
}

fn per_token(per_million: Money) -> Money {
    // parse_usd keeps at most six fractional digits, so this division is exact.
    Money(per_million.0 / 1_000_000)
}

pub const GPT_41: &str = "gpt-4.1";
pub const GPT_41_NANO: &str = "gpt-4.1-nano";
pub const LLAMA_405B_TURBO: &str = "llama-405b-turbo";
pub const LLAMA_8B: &str = "llama-8b";
pub const BERT_80M: &str = "bert-80m";

/// Per-model token prices keyed by model name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingTable {
    models: BTreeMap<String, TokenPrice>,
}

impl Default for PricingTable {
    /// Published list prices for the reference models.
    fn default() -> Self {
        let mut t = PricingTable::empty();
        for (name, i, o) in [
            (GPT_41, "2.00", "8.00"),
            (GPT_41_NANO, "0.10", "0.40"),
            (LLAMA_405B_TURBO, "3.50", "3.50"),
            (LLAMA_8B, "0.20", "0.20"),
            (BERT_80M, "0.01", "0.01"),
        ] {
            t.insert(name, TokenPrice::from_usd_per_million(i, o).expect("static price"));
        }
        t
    }
}

impl PricingTable {
    pub fn empty() -> Self {
        PricingTable { models: BTreeMap::new() }
    }

    pub fn insert(&mut self, model: &str, price: TokenPrice) {
        self.models.insert(model.to_string(), price);
    }

    pub fn get(&self, model: &str) -> Result<TokenPrice> {
        self.models.get(model).copied().ok_or_else(|| Error::UnknownModel(model.to_string()))
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, &TokenPrice)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Cost of a single request.
pub fn request_cost(tokens_in: u64, tokens_out: u64, model: &str, pricing: &PricingTable) -> Result<Money> {
    Ok(pricing.get(model)?.cost(tokens_in, tokens_out))
}

/// Per-request traffic shape for one task plus the replacement parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub avg_input_tokens: u64,
    pub avg_output_tokens: u64,
    pub wrapper_input_overhead_tokens: u64,
    pub wrapper_output_overhead_tokens: u64,
    /// Number of requests answered by the wrapped LLM before the switch.
    pub switch_index: u64,
    pub dev_cost: Money,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            avg_input_tokens: 400,
            avg_output_tokens: 10,
            wrapper_input_overhead_tokens: 150,
            wrapper_output_overhead_tokens: 20,
            switch_index: 5_000,
            dev_cost: Money::from_micro(4_000_000),
        }
    }
}

/// Cumulative cost of serving a task with the LLM only versus with JITR
/// (wrapped LLM up to the switch, one-off development cost, then the
/// surrogate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    pub llm: TokenPrice,
    pub surrogate: TokenPrice,
    pub profile: TrafficProfile,
}

impl CostModel {
    pub fn new(
        profile: TrafficProfile,
        llm_model: &str,
        surrogate_model: &str,
        pricing: &PricingTable,
    ) -> Result<Self> {
        Ok(CostModel {
            llm: pricing.get(llm_model)?,
            surrogate: pricing.get(surrogate_model)?,
            profile,
        })
    }

    pub fn llm_per_request(&self) -> Money {
        self.llm.cost(self.profile.avg_input_tokens, self.profile.avg_output_tokens)
    }

    pub fn wrapped_per_request(&self) -> Money {
        let p = &self.profile;
        self.llm.cost(
            p.avg_input_tokens + p.wrapper_input_overhead_tokens,
            p.avg_output_tokens + p.wrapper_output_overhead_tokens,
        )
    }

    pub fn surrogate_per_request(&self) -> Money {
        self.surrogate.cost(self.profile.avg_input_tokens, self.profile.avg_output_tokens)
    }

    pub fn llm_cumulative(&self, n: u64) -> Money {
        self.llm_per_request() * n
    }

    pub fn jitr_cumulative(&self, n: u64) -> Money {
        let i = self.profile.switch_index;
        let wrapped = self.wrapped_per_request() * n.min(i);
        let dev = if n >= i { self.profile.dev_cost } else { Money::ZERO };
        let surrogate = self.surrogate_per_request() * n.saturating_sub(i);
        wrapped + dev + surrogate
    }

    pub fn savings_at(&self, n: u64) -> Money {
        self.llm_cumulative(n) - self.jitr_cumulative(n)
    }

    /// LLM-only cost divided by JITR cost at `n` requests.
    pub fn cost_ratio_at(&self, n: u64) -> Option<f64> {
        let jitr = self.jitr_cumulative(n).pico();
        (jitr > 0).then(|| self.llm_cumulative(n).pico() as f64 / jitr as f64)
    }

    /// Smallest request count `n >= 1` from which the cumulative JITR cost
    /// stays at or below the LLM-only cost, or `None` if it never does.
    pub fn break_even(&self) -> Option<u64> {
        let i = self.profile.switch_index as i128;
        let llm = self.llm_per_request().pico() as i128;
        let wrapped = self.wrapped_per_request().pico() as i128;
        let sur = self.surrogate_per_request().pico() as i128;
        // Excess of JITR over LLM-only accumulated by the time of the switch.
        let excess = i * (wrapped - llm) + self.profile.dev_cost.pico() as i128;
        let gain = llm - sur;
        if gain < 0 {
            return None;
        }
        if excess <= 0 {
            // Never above the LLM curve before the switch and not above after.
            return if wrapped <= llm { Some(1) } else { None };
        }
        if gain == 0 {
            return None;
        }
        let tail = (excess + gain - 1) / gain;
        Some(((i + tail).max(1)) as u64)
    }

    pub fn report(&self, sample_points: &[u64]) -> CostReport {
        CostReport {
            samples: sample_points
                .iter()
                .map(|&n| CostSample {
                    requests: n,
                    llm_cumulative: self.llm_cumulative(n),
                    jitr_cumulative: self.jitr_cumulative(n),
                })
                .collect(),
            break_even_n: self.break_even(),
            llm_per_request: self.llm_per_request(),
            wrapped_per_request: self.wrapped_per_request(),
            surrogate_per_request: self.surrogate_per_request(),
            savings_at_1m: self.savings_at(1_000_000),
            cost_ratio_at_1m: self.cost_ratio_at(1_000_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub requests: u64,
    pub llm_cumulative: Money,
    pub jitr_cumulative: Money,
}

impl CostSample {
    pub fn savings(&self) -> Money {
        self.llm_cumulative - self.jitr_cumulative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub samples: alloc::vec::Vec<CostSample>,
    pub break_even_n: Option<u64>,
    pub llm_per_request: Money,
    pub wrapped_per_request: Money,
    pub surrogate_per_request: Money,
    pub savings_at_1m: Money,
    pub cost_ratio_at_1m: Option<f64>,
}

/// Throughput analogue of [`CostModel`]: processing time instead of money.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    /// LLM throughput in items per second.
    pub llm_rate: f64,
    /// Surrogate throughput in items per second.
    pub surrogate_rate: f64,
    /// Search plus fine-tuning time in seconds, paid once at the switch.
    pub dev_time_s: f64,
    pub switch_index: u64,
}

impl TimeModel {
    pub fn new(llm_rate: f64, surrogate_rate: f64, dev_time_s: f64, switch_index: u64) -> Result<Self> {
        if !(llm_rate > 0.0 && surrogate_rate > llm_rate) {
            return Err(Error::Precondition(format!(
                "surrogate rate ({surrogate_rate}) must exceed a positive llm rate ({llm_rate})"
            )));
        }
        if !(dev_time_s >= 0.0 && dev_time_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("dev_time must be finite and >= 0, got {dev_time_s}")));
        }
        Ok(TimeModel { llm_rate, surrogate_rate, dev_time_s, switch_index })
    }

    pub fn llm_time(&self, n: u64) -> f64 {
        n as f64 / self.llm_rate
    }

    pub fn jitr_time(&self, n: u64) -> f64 {
        let i = self.switch_index;
        let dev = if n >= i { self.dev_time_s } else { 0.0 };
        n.min(i) as f64 / self.llm_rate + dev + n.saturating_sub(i) as f64 / self.surrogate_rate
    }

    /// LLM-only time over JITR time.
    pub fn speedup(&self, n: u64) -> f64 {
        let j = self.jitr_time(n);
        if j == 0.0 {
            1.0
        } else {
            self.llm_time(n) / j
        }
    }

    /// Smallest `n >= 1` from which JITR time stays at or below LLM-only time.
    pub fn break_even(&self) -> u64 {
        let i = self.switch_index;
        if self.dev_time_s == 0.0 {
            return 1;
        }
        let gain = 1.0 / self.llm_rate - 1.0 / self.surrogate_rate;
        let estimate = i as f64 + libm::ceil(self.dev_time_s / gain);
        let mut n = (estimate as u64).max(i).max(1);
        // Settle float rounding at the boundary against the defining inequality.
        while n > i.max(1) && self.jitr_time(n - 1) <= self.llm_time(n - 1) {
            n -= 1;
        }
        while self.jitr_time(n) > self.llm_time(n) {
            n += 1;
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nano_to_bert() -> CostModel {
        CostModel::new(TrafficProfile::default(), GPT_41_NANO, BERT_80M, &PricingTable::default()).unwrap()
    }

    #[test]
    fn parses_decimal_prices_exactly() {
        assert_eq!(Money::parse_usd("0.01").unwrap().pico(), 10_000_000_000);
        assert_eq!(Money::parse_usd("3.5").unwrap().pico(), 3_500_000_000_000);
        assert_eq!(Money::parse_usd("$4").unwrap(), Money::from_micro(4_000_000));
        assert_eq!(Money::parse_usd(".000001").unwrap().pico(), 1_000_000);
        assert!(Money::parse_usd("0.0000001").is_err());
        assert!(Money::parse_usd("-1").is_err());
        assert!(Money::parse_usd("abc").is_err());
        assert!(Money::parse_usd("").is_err());
    }

    #[test]
    fn money_display() {
        assert_eq!(Money::from_pico(880_000_000).to_string(), "$0.000880");
        assert_eq!(Money::from_micro(-1_500_000).to_string(), "-$1.500000");
    }

    #[test]
    fn request_cost_examples() {
        let p = PricingTable::default();
        assert_eq!(request_cost(0, 0, GPT_41, &p).unwrap(), Money::ZERO);
        // 400 * 2.00/1e6 + 10 * 8.00/1e6
        assert_eq!(request_cost(400, 10, GPT_41, &p).unwrap(), Money::from_pico(880_000_000));
        // 410 * 3.50/1e6
        assert_eq!(request_cost(400, 10, LLAMA_405B_TURBO, &p).unwrap(), Money::from_pico(1_435_000_000));
        assert_eq!(request_cost(1, 1, "gpt-5", &p), Err(Error::UnknownModel("gpt-5".into())));
    }

    #[test]
    fn table_prices_per_million() {
        let p = PricingTable::default();
        let bert = p.get(BERT_80M).unwrap();
        assert_eq!(bert.input_per_million(), Money::parse_usd("0.01").unwrap());
        let gpt = p.get(GPT_41).unwrap();
        assert_eq!(gpt.output_per_million(), Money::parse_usd("8.00").unwrap());
    }

    #[test]
    fn jitr_boundaries() {
        let m = nano_to_bert();
        assert_eq!(m.jitr_cumulative(0), Money::ZERO);
        let at_switch = m.jitr_cumulative(5_000);
        assert_eq!(at_switch, m.wrapped_per_request() * 5_000 + m.profile.dev_cost);
        assert_eq!(m.jitr_cumulative(4_999), m.wrapped_per_request() * 4_999);
    }

    #[test]
    fn nano_million_requests() {
        let m = nano_to_bert();
        // 5000 * 67e-6 + 4 + 995000 * 4.1e-6 = 0.335 + 4 + 4.0795
        assert_eq!(m.jitr_cumulative(1_000_000), Money::parse_usd("8.4145").unwrap());
        assert_eq!(m.savings_at(1_000_000), Money::parse_usd("35.5855").unwrap());
    }

    #[test]
    fn equal_prices_never_break_even() {
        let mut p = PricingTable::default();
        p.insert("same", p.get(LLAMA_8B).unwrap());
        let m = CostModel::new(TrafficProfile::default(), LLAMA_8B, "same", &p).unwrap();
        assert_eq!(m.break_even(), None);
    }

    #[test]
    fn nano_break_even_closed_form() {
        // i + ceil((i*(W-L) + D) / (L - s)) = 5000 + ceil(4.115 / 39.9e-6)
        assert_eq!(nano_to_bert().break_even(), Some(108_133));
    }

    #[test]
    fn time_model_examples() {
        let t = TimeModel::new(13.0, 13.0 * 19.6, 5_967.0, 5_000).unwrap();
        assert!((t.surrogate_rate - 254.8).abs() < 1e-9);
        assert!(t.break_even() < 100_000);
        assert!(t.speedup(2_000_000) > t.speedup(1_000_000));
        assert!(TimeModel::new(13.0, 13.0, 1.0, 10).is_err());
    }
}
