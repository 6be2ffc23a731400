//! TOML configuration. Every section and field is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use jitr_core::cost::{Money, PricingTable, TimeModel, TokenPrice, TrafficProfile, BERT_80M, GPT_41};
use jitr_core::learn::TrainConfig;
use jitr_core::miner::MinerConfig;
use jitr_core::monitor::MonitorConfig;
use jitr_core::zoo::SearchConfig;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusParams;
use crate::dataset::SplitFractions;
use crate::upstream::MockConfig;
use crate::wire::WrapperTemplate;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitrConfig {
    pub gateway: GatewayConfig,
    pub upstream: UpstreamConfig,
    pub mock: MockConfig,
    pub wrapper: WrapperConfig,
    pub miner: MinerConfig,
    pub lifecycle: LifecycleConfig,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub monitor: MonitorConfig,
    /// Price overrides and additions, keyed by model name.
    pub pricing: BTreeMap<String, PriceEntry>,
    pub cost: CostConfig,
    pub time: TimeConfig,
    pub corpus: CorpusParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub ledger: PathBuf,
    pub artifacts_dir: PathBuf,
    /// Zoo manifest; the bundled zoo is used when absent.
    pub zoo: Option<PathBuf>,
    /// Wrap requests of unknown and collecting tasks.
    pub identification: bool,
    /// Run search and training off the request path.
    pub background_jobs: bool,
    /// fsync the ledger after every append.
    pub fsync: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: "127.0.0.1:8080".into(),
            ledger: "jitr-ledger.log".into(),
            artifacts_dir: "jitr-artifacts".into(),
            zoo: None,
            identification: true,
            background_jobs: true,
            fsync: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpstreamMode {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpstreamConfig {
    pub mode: UpstreamMode,
    /// Base URL; `/v1/chat/completions` is appended.
    pub url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
}

impl Default for UpstreamConfig {
    fn default() -> Self {
        UpstreamConfig {
            mode: UpstreamMode::Mock,
            url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrapperConfig {
    /// Replacement wrapper text containing `<USER REQUEST>` once.
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleConfig {
    /// Labeled examples needed before the first search.
    pub min_train_examples: u64,
    /// Further examples collected after a failed shadow run or a rollback.
    pub collect_target: u64,
    /// Parsed responses used to infer a task's label schema.
    pub schema_sample: usize,
    /// Recent member prompts kept for template mining.
    pub template_sample: usize,
    /// Examples used for model search.
    pub search_examples: usize,
    /// Share of the search examples used to fit probes.
    pub search_fit_fraction: f64,
    pub splits: SplitFractions,
    pub split_seed: u64,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        LifecycleConfig {
            min_train_examples: 500,
            collect_target: 500,
            schema_sample: 20,
            template_sample: 64,
            search_examples: 500,
            search_fit_fraction: 0.5,
            splits: SplitFractions::default(),
            split_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceEntry {
    /// USD per million input tokens, as a decimal string.
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// LLM assumed by reports and simulations when a request names none.
    pub llm_model: String,
    pub surrogate_model: String,
    /// One-off development cost in USD.
    pub dev_cost: String,
    pub avg_input_tokens: u64,
    pub avg_output_tokens: u64,
    pub wrapper_input_overhead_tokens: u64,
    pub wrapper_output_overhead_tokens: u64,
    pub switch_index: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        let p = TrafficProfile::default();
        CostConfig {
            llm_model: GPT_41.into(),
            surrogate_model: BERT_80M.into(),
            dev_cost: "4.00".into(),
            avg_input_tokens: p.avg_input_tokens,
            avg_output_tokens: p.avg_output_tokens,
            wrapper_input_overhead_tokens: p.wrapper_input_overhead_tokens,
            wrapper_output_overhead_tokens: p.wrapper_output_overhead_tokens,
            switch_index: p.switch_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// LLM throughput, items per second.
    pub llm_rate: f64,
    pub surrogate_rate: f64,
    pub dev_time_s: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { llm_rate: 13.0, surrogate_rate: 254.8, dev_time_s: 5967.0 }
    }
}

impl JitrConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: JitrConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.gateway.ledger);
        fix(&mut self.gateway.artifacts_dir);
        if let Some(z) = &mut self.gateway.zoo {
            fix(z);
        }
    }

    /// Rejects invalid settings; returns warnings for legal but inert ones.
    pub fn validate(&self) -> anyhow::Result<Vec<String>> {
        let mut warnings = self.monitor.validate()?;
        self.train.validate()?;
        self.search.probe.validate()?;
        self.lifecycle.splits.validate()?;
        self.wrapper()?;
        self.pricing()?.get(&self.cost.surrogate_model)?;
        Money::parse_usd(&self.cost.dev_cost)?;
        self.time_model()?;
        let l = &self.lifecycle;
        anyhow::ensure!(l.schema_sample >= 1, "lifecycle.schema_sample must be at least 1");
        anyhow::ensure!(l.template_sample >= 2, "lifecycle.template_sample must be at least 2");
        anyhow::ensure!(
            l.search_fit_fraction > 0.0 && l.search_fit_fraction < 1.0,
            "lifecycle.search_fit_fraction must be in (0, 1)"
        );
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.miner.similarity_threshold),
            "miner.similarity_threshold must be in [0, 1]"
        );
        anyhow::ensure!(self.miner.signature.num_hashes > 0, "miner.signature.num_hashes must be positive");
        anyhow::ensure!((0.0..=1.0).contains(&self.mock.accuracy), "mock.accuracy must be in [0, 1]");
        if !self.gateway.identification {
            warnings.push("gateway.identification is off: no task will ever be detected".into());
        }
        Ok(warnings)
    }

    pub fn wrapper(&self) -> anyhow::Result<WrapperTemplate> {
        match &self.wrapper.text {
            Some(t) => WrapperTemplate::new(t),
            None => Ok(WrapperTemplate::default()),
        }
    }

    /// Built-in prices with the configured overrides applied.
    pub fn pricing(&self) -> anyhow::Result<PricingTable> {
        let mut table = PricingTable::default();
        for (model, p) in &self.pricing {
            let price = TokenPrice::from_usd_per_million(&p.input, &p.output)
                .with_context(|| format!("price of `{model}`"))?;
            table.insert(model, price);
        }
        Ok(table)
    }

    pub fn dev_cost(&self) -> Money {
        Money::parse_usd(&self.cost.dev_cost).unwrap_or(Money::ZERO)
    }

    /// The configured (not measured) traffic profile.
    pub fn profile(&self) -> TrafficProfile {
        let c = &self.cost;
        TrafficProfile {
            avg_input_tokens: c.avg_input_tokens,
            avg_output_tokens: c.avg_output_tokens,
            wrapper_input_overhead_tokens: c.wrapper_input_overhead_tokens,
            wrapper_output_overhead_tokens: c.wrapper_output_overhead_tokens,
            switch_index: c.switch_index,
            dev_cost: self.dev_cost(),
        }
    }

    pub fn time_model(&self) -> anyhow::Result<TimeModel> {
        self.time_model_at(self.cost.switch_index)
    }

    pub fn time_model_at(&self, switch_index: u64) -> anyhow::Result<TimeModel> {
        Ok(TimeModel::new(self.time.llm_rate, self.time.surrogate_rate, self.time.dev_time_s, switch_index)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: JitrConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, JitrConfig::default());
        assert!(cfg.validate().unwrap().is_empty());
        assert_eq!(cfg.profile(), TrafficProfile::default());
    }

    #[test]
    fn partial_sections_and_price_overrides() {
        let cfg: JitrConfig = toml::from_str(
            r#"
            [monitor]
            window = 50
            probe_fraction = 0.0
            [pricing."my-llm"]
            input = "1.50"
            output = "6.00"
            [cost]
            llm_model = "my-llm"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.monitor.window, 50);
        assert_eq!(cfg.monitor.tau, 0.95);
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(cfg.pricing().unwrap().get("my-llm").unwrap().input_per_million(), Money::from_micro(1_500_000));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[monitor]\nwindow = 0",
            "[pricing.x]\ninput = \"-1\"\noutput = \"1\"",
            "[wrapper]\ntext = \"no marker\"",
            "[lifecycle.splits]\ntrain = 0.5",
            "[gateway]\nunknown = 1",
        ] {
            let parsed: Result<JitrConfig, _> = toml::from_str(text);
            assert!(parsed.map_err(anyhow::Error::from).and_then(|c| c.validate()).is_err(), "{text}");
        }
    }
}
