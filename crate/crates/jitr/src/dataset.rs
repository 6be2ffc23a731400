//! Label schemas inferred from LLM responses and seeded dataset splits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Key path to the categorical field of a task's JSON answer, e.g.
/// `["sentiment"]` for `{"sentiment": "negative"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub path: Vec<String>,
}

impl LabelSchema {
    pub fn extract(&self, json_text: &str) -> Option<String> {
        let v: Value = serde_json::from_str(json_text).ok()?;
        let mut cur = &v;
        for key in &self.path {
            cur = cur.get(key)?;
        }
        scalar_text(cur)
    }

    /// JSON answer carrying `label` at this schema's path.
    pub fn render(&self, label: &str) -> String {
        let mut v = Value::String(label.to_string());
        for key in self.path.iter().rev() {
            let mut m = serde_json::Map::new();
            m.insert(key.clone(), v);
            v = Value::Object(m);
        }
        v.to_string()
    }
}

impl fmt::Display for LabelSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            return f.write_str("$");
        }
        write!(f, "$.{}", self.path.join("."))
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn leaf_paths(v: &Value, prefix: &mut Vec<String>, out: &mut Vec<(Vec<String>, String)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                prefix.push(k.clone());
                leaf_paths(child, prefix, out);
                prefix.pop();
            }
        }
        other => {
            if let Some(s) = scalar_text(other) {
                out.push((prefix.clone(), s));
            }
        }
    }
}

/// Picks the categorical scalar path present in the most responses; ties
/// prefer fewer distinct values, then the lexicographically first path. A
/// path is categorical when its values repeat, i.e. it has at most half as
/// many distinct values as occurrences. `None` when no path qualifies, as for
/// free-text answers.
pub fn infer_schema<S: AsRef<str>>(responses: &[S]) -> Option<LabelSchema> {
    let mut seen: BTreeMap<Vec<String>, (usize, BTreeMap<String, ()>)> = BTreeMap::new();
    for r in responses {
        let Ok(v) = serde_json::from_str::<Value>(r.as_ref()) else { continue };
        let mut leaves = Vec::new();
        leaf_paths(&v, &mut Vec::new(), &mut leaves);
        for (path, value) in leaves {
            let e = seen.entry(path).or_default();
            e.0 += 1;
            e.1.insert(value, ());
        }
    }
    seen.into_iter()
        .filter(|(_, (count, values))| values.len() * 2 <= *count)
        .min_by(|(pa, (ca, va)), (pb, (cb, vb))| cb.cmp(ca).then(va.len().cmp(&vb.len())).then(pa.cmp(pb)))
        .map(|(path, _)| LabelSchema { path })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Search,
    Validation,
}

impl FromStr for Split {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "search" => Ok(Split::Search),
            "validation" => Ok(Split::Validation),
            other => anyhow::bail!("unknown split `{other}` (expected train, search or validation)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub search: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, search: 0.1, validation: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> anyhow::Result<()> {
        let parts = [self.train, self.search, self.validation];
        anyhow::ensure!(parts.iter().all(|p| (0.0..=1.0).contains(p)), "split fractions must be in [0, 1]");
        anyhow::ensure!(((parts.iter().sum::<f64>()) - 1.0).abs() < 1e-9, "split fractions must sum to 1");
        Ok(())
    }
}

/// Partitions `0..n` by a seeded shuffle into train, search and validation
/// index lists. Validation takes whatever rounding leaves over.
pub fn split_indices(n: usize, seed: u64, fractions: &SplitFractions) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = ((n as f64 * fractions.train).round() as usize).min(n);
    let search = ((n as f64 * fractions.search).round() as usize).min(n - train);
    let validation = idx.split_off(train + search);
    let search_part = idx.split_off(train);
    [idx, search_part, validation]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_from_sentiment_answers() {
        let s = infer_schema(&[
            r#"{"sentiment": "negative"}"#,
            r#"{"sentiment": "positive"}"#,
            "oops",
            r#"{"sentiment": "positive"}"#,
            r#"{"sentiment": "negative"}"#,
        ])
        .unwrap();
        assert_eq!(s.path, vec!["sentiment"]);
        assert_eq!(s.extract(r#"{"sentiment": "negative"}"#).as_deref(), Some("negative"));
        assert_eq!(s.extract("not json"), None);
        assert_eq!(s.render("positive"), r#"{"sentiment":"positive"}"#);
        assert_eq!(s.to_string(), "$.sentiment");
    }

    #[test]
    fn categorical_field_wins_ties() {
        let s = infer_schema(&[
            r#"{"label": "a", "explanation": "one"}"#,
            r#"{"label": "a", "explanation": "two"}"#,
            r#"{"label": "b", "explanation": "three"}"#,
            r#"{"label": "b", "explanation": "four"}"#,
        ])
        .unwrap();
        assert_eq!(s.path, vec!["label"]);
    }

    #[test]
    fn free_text_has_no_schema() {
        let answers: Vec<String> = (0..20).map(|i| format!(r#"{{"translation": "Satz {i}"}}"#)).collect();
        assert_eq!(infer_schema(&answers), None);
    }

    #[test]
    fn scalar_answers_have_an_empty_path() {
        let s = infer_schema(&[r#""yes""#, r#""no""#, r#""no""#, r#""yes""#]).unwrap();
        assert!(s.path.is_empty());
        assert_eq!(s.extract(r#""no""#).as_deref(), Some("no"));
        assert_eq!(infer_schema::<&str>(&[]), None);
    }

    #[test]
    fn splits_partition_deterministically() {
        let f = SplitFractions::default();
        let a = split_indices(500, 7, &f);
        assert_eq!(a, split_indices(500, 7, &f));
        assert_eq!((a[0].len(), a[1].len(), a[2].len()), (400, 50, 50));
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        assert_ne!(a, split_indices(500, 8, &f));
        let b = split_indices(7, 1, &f);
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 7);
    }
}
