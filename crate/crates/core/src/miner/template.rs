use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One piece of a prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Literal(String),
    Slot,
}

/// A prompt skeleton: literal text interleaved with slots. No two slots are
/// adjacent and literals are never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Normalizes `segments`: merges adjacent literals, collapses adjacent
    /// slots and drops empty literals.
    pub fn from_segments(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut out: Vec<Segment> = Vec::new();
        for seg in segments {
            match (out.last_mut(), seg) {
                (_, Segment::Literal(s)) if s.is_empty() => {}
                (Some(Segment::Literal(prev)), Segment::Literal(s)) => prev.push_str(&s),
                (Some(Segment::Slot), Segment::Slot) => {}
                (_, seg) => out.push(seg),
            }
        }
        PromptTemplate { segments: out }
    }

    /// Template with no slots matching exactly `text`.
    pub fn literal(text: &str) -> Self {
        Self::from_segments([Segment::Literal(text.into())])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn slot_count(&self) -> usize {
        self.segments.iter().filter(|s| matches!(s, Segment::Slot)).count()
    }

    /// Renders the template with the given slot values.
    ///
    /// Missing bindings render as empty strings; extra bindings are ignored.
    pub fn instantiate<S: AsRef<str>>(&self, bindings: &[S]) -> String {
        let mut out = String::new();
        let mut next = bindings.iter();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot => {
                    if let Some(b) = next.next() {
                        out.push_str(b.as_ref());
                    }
                }
            }
        }
        out
    }

    /// Splits `prompt` into slot values if it matches this template.
    ///
    /// Leading and trailing literals are anchored; interior literals are
    /// matched leftmost, which finds a match whenever one exists.
    pub fn extract_bindings<'a>(&self, prompt: &'a str) -> Option<Vec<&'a str>> {
        let segs = &self.segments;
        if segs.is_empty() {
            return prompt.is_empty().then(Vec::new);
        }
        let mut start = 0usize;
        let mut end = prompt.len();
        let mut first = 0usize;
        let mut last = segs.len();
        if let Segment::Literal(lit) = &segs[0] {
            if !prompt.starts_with(lit.as_str()) {
                return None;
            }
            start = lit.len();
            first = 1;
        }
        if last > first {
            if let Segment::Literal(lit) = &segs[last - 1] {
                if end < start + lit.len() || !prompt.ends_with(lit.as_str()) {
                    return None;
                }
                end -= lit.len();
                last -= 1;
            }
        } else {
            // Pure literal template.
            return (start == end).then(Vec::new);
        }
        let mut bindings = Vec::with_capacity(self.slot_count());
        let mut slot_start = start;
        let mut pos = start;
        for seg in &segs[first..last] {
            match seg {
                Segment::Slot => slot_start = pos,
                Segment::Literal(lit) => {
                    let found = prompt[pos..end].find(lit.as_str())? + pos;
                    bindings.push(&prompt[slot_start..found]);
                    pos = found + lit.len();
                }
            }
        }
        // The segment run between the anchors ends in a slot.
        bindings.push(&prompt[slot_start.max(pos)..end]);
        Some(bindings)
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.extract_bindings(prompt).is_some()
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => f.write_str(s)?,
                Segment::Slot => f.write_str("<SLOT>")?,
            }
        }
        Ok(())
    }
}

/// Splits text into alternating runs of whitespace and non-whitespace so that
/// concatenating the tokens reproduces the input.
fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws: Option<bool> = None;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if prev_ws.is_some_and(|p| p != ws) {
            out.push(&text[start..i]);
            start = i;
        }
        prev_ws = Some(ws);
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item<'a> {
    Lit(&'a str),
    Slot,
}

/// Aligns the template items against `tokens` by longest common subsequence
/// over literal tokens; everything left unaligned on either side becomes a
/// slot.
fn fold<'a>(items: &[Item<'a>], tokens: &[&'a str]) -> Vec<Item<'a>> {
    let n = items.len();
    let m = tokens.len();
    let w = m + 1;
    let mut dp = alloc::vec![0u32; (n + 1) * w];
    for a in (0..n).rev() {
        for b in (0..m).rev() {
            let v = match items[a] {
                Item::Lit(t) if t == tokens[b] => dp[(a + 1) * w + b + 1] + 1,
                _ => dp[(a + 1) * w + b].max(dp[a * w + b + 1]),
            };
            dp[a * w + b] = v;
        }
    }
    let mut out = Vec::new();
    let (mut a, mut b) = (0, 0);
    let mut gap = false;
    while a < n && b < m {
        match items[a] {
            Item::Lit(t) if t == tokens[b] && dp[a * w + b] == dp[(a + 1) * w + b + 1] + 1 => {
                if gap {
                    out.push(Item::Slot);
                    gap = false;
                }
                out.push(Item::Lit(t));
                a += 1;
                b += 1;
            }
            _ => {
                gap = true;
                if dp[(a + 1) * w + b] >= dp[a * w + b + 1] {
                    a += 1;
                } else {
                    b += 1;
                }
            }
        }
    }
    if gap || a < n || b < m {
        out.push(Item::Slot);
    }
    absorb_separators(out)
}

/// Folds whitespace that sits between two slots into a single slot, so a
/// varying multi-word region does not fragment around the spaces it shares
/// with other prompts.
fn absorb_separators(items: Vec<Item<'_>>) -> Vec<Item<'_>> {
    let mut out: Vec<Item<'_>> = Vec::with_capacity(items.len());
    for it in items {
        if it == Item::Slot {
            let n = out.len();
            if n >= 2
                && out[n - 2] == Item::Slot
                && matches!(out[n - 1], Item::Lit(t) if t.chars().all(char::is_whitespace))
            {
                out.pop();
                continue;
            }
            if out.last() == Some(&Item::Slot) {
                continue;
            }
        }
        out.push(it);
    }
    out
}

fn to_template(items: &[Item<'_>]) -> PromptTemplate {
    PromptTemplate::from_segments(items.iter().map(|it| match it {
        Item::Lit(t) => Segment::Literal((*t).into()),
        Item::Slot => Segment::Slot,
    }))
}

/// Mines the shared skeleton of `prompts`.
///
/// Prompts are folded in sorted order, so the result does not depend on the
/// order they are given in. Each fold aligns the current template with the
/// next prompt at token level and turns every unaligned run into a slot;
/// prompts that already match the current template are skipped. Every input
/// prompt matches the result. An empty input yields a single-slot template.
pub fn mine_template<S: AsRef<str>>(prompts: &[S]) -> PromptTemplate {
    let mut sorted: Vec<&str> = prompts.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let Some((first, rest)) = sorted.split_first() else {
        return PromptTemplate::from_segments([Segment::Slot]);
    };
    let mut items: Vec<Item<'_>> = tokenize(first).into_iter().map(Item::Lit).collect();
    let mut template = to_template(&items);
    for prompt in rest {
        if template.matches(prompt) {
            continue;
        }
        items = fold(&items, &tokenize(prompt));
        template = to_template(&items);
    }
    if template.segments.is_empty() {
        // Only the empty prompt was given.
        return PromptTemplate::from_segments([]);
    }
    template
}
