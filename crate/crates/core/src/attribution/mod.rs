//! Norm-based attention attribution.
//!
//! For the last-token query, the contribution of token `j` in one layer is
//! `‖Σ_h α_h[j] · f_h(x_j)‖₂`, where heads are summed *before* the norm.
//! Contributions are averaged over layers, then over the tokens of each
//! prompt component, then over samples.

mod dump;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{AssembledPrompt, ComponentKind};

pub use dump::{AttentionDump, DumpData, DumpHeader, SidecarSpan, SpanFile, Variant, ROW_SUM_TOLERANCE};

/// Contribution of token `j` at `layer`. Full dumps only.
pub fn token_contribution(dump: &AttentionDump, layer: usize, j: usize) -> Result<f64> {
    if dump.header.variant == Variant::Reduced {
        return Err(Error::Unsupported(
            "reduced dumps carry precomputed norms; use per_token_norms".into(),
        ));
    }
    if layer >= dump.layers() || j >= dump.tokens() {
        return Err(Error::validation(
            "token",
            format!("(layer {layer}, token {j}) outside L={} T={}", dump.layers(), dump.tokens()),
        ));
    }
    let mut acc = vec![0f64; dump.dim()];
    for h in 0..dump.heads() {
        let a = dump.alpha(layer, h, j).expect("in range") as f64;
        if a == 0.0 {
            continue;
        }
        for (s, v) in acc.iter_mut().zip(dump.fvec(layer, h, j).expect("in range")) {
            *s += a * *v as f64;
        }
    }
    Ok(acc.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Layer-averaged contribution of every token.
pub fn per_token_norms(dump: &AttentionDump) -> Result<Vec<f64>> {
    let layers = dump.layers();
    if layers == 0 {
        return Err(Error::validation("L", "dump has no layers"));
    }
    let t = dump.tokens();
    let mut sums = vec![0f64; t];
    for l in 0..layers {
        for (j, s) in sums.iter_mut().enumerate() {
            *s += match dump.header.variant {
                Variant::Full => token_contribution(dump, l, j)?,
                Variant::Reduced => dump.stored_norm(l, j).expect("validated") as f64,
            };
        }
    }
    Ok(sums.into_iter().map(|s| s / layers as f64).collect())
}

/// A contiguous run of tokens belonging to one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub kind: ComponentKind,
    pub demo: Option<usize>,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpanMap {
    pub spans: Vec<TokenSpan>,
}

impl TokenSpanMap {
    pub fn new(spans: Vec<TokenSpan>) -> Self {
        TokenSpanMap { spans }
    }

    pub fn from_sidecar(file: &SpanFile) -> Self {
        TokenSpanMap::new(
            file.spans
                .iter()
                .map(|s| TokenSpan {
                    kind: s.kind,
                    demo: s.demo,
                    start: s.start,
                    end: s.end,
                })
                .collect(),
        )
    }

    pub fn to_sidecar_spans(&self) -> Vec<SidecarSpan> {
        self.spans
            .iter()
            .map(|s| SidecarSpan {
                kind: s.kind,
                demo: s.demo,
                start: s.start,
                end: s.end,
            })
            .collect()
    }

    /// Spans must tile `[0, tokens)` in order.
    pub fn validate(&self, tokens: usize) -> Result<()> {
        let mut cursor = 0;
        for (i, s) in self.spans.iter().enumerate() {
            if s.start != cursor || s.end < s.start {
                return Err(Error::validation(
                    format!("spans[{i}]"),
                    format!("expected start {cursor}, got {}..{}", s.start, s.end),
                ));
            }
            cursor = s.end;
        }
        if cursor != tokens {
            return Err(Error::validation("spans", format!("cover {cursor} tokens, dump has {tokens}")));
        }
        Ok(())
    }

    /// Map tokenizer character offsets (half-open, in Unicode scalar values)
    /// onto the component spans of an assembled prompt.
    ///
    /// A token belongs to the component holding its first non-whitespace
    /// character, so a leading-space token such as `" Which"` goes to the
    /// inline instruction. Tokens made only of whitespace with a newline are
    /// separators wherever they occur, including inside a demonstration input.
    pub fn from_char_offsets(prompt: &AssembledPrompt, offsets: &[(usize, usize)]) -> Result<Self> {
        let chars: Vec<char> = prompt.text.chars().collect();
        let mut spans: Vec<TokenSpan> = Vec::new();
        for (i, &(start, end)) in offsets.iter().enumerate() {
            if start > end || end > chars.len() {
                return Err(Error::validation(
                    format!("offsets[{i}]"),
                    format!("{start}..{end} outside prompt of {} chars", chars.len()),
                ));
            }
            let anchor = (start..end).find(|&c| !chars[c].is_whitespace()).unwrap_or(start);
            let anchor = anchor.min(chars.len().saturating_sub(1));
            let owner = prompt
                .spans
                .iter()
                .find(|s| s.start <= anchor && anchor < s.end)
                .ok_or_else(|| Error::validation(format!("offsets[{i}]"), "token outside every span"))?;
            let token = &chars[start..end];
            let (kind, demo) = if token.contains(&'\n') && token.iter().all(|c| c.is_whitespace()) {
                (ComponentKind::Separator, None)
            } else {
                (owner.kind, owner.demo_index)
            };
            match spans.last_mut() {
                Some(last) if last.kind == kind && last.demo == demo => last.end = i + 1,
                _ => spans.push(TokenSpan {
                    kind,
                    demo,
                    start: i,
                    end: i + 1,
                }),
            }
        }
        Ok(TokenSpanMap { spans })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributionOptions {
    /// Leave out the query token itself (position T-1).
    pub exclude_query: bool,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        AttributionOptions { exclude_query: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub kind: ComponentKind,
    /// Mean token norm.
    pub raw: f64,
    pub percent: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoScore {
    pub kind: ComponentKind,
    pub demo: usize,
    pub raw: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    /// One entry per component kind present, ordered by kind.
    pub components: Vec<ComponentScore>,
    pub per_demo: Vec<DemoScore>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AttributionResult {
    pub fn component(&self, kind: ComponentKind) -> Option<&ComponentScore> {
        self.components.iter().find(|c| c.kind == kind)
    }

    pub fn percent_sum(&self) -> f64 {
        self.components.iter().map(|c| c.percent).sum()
    }
}

fn fill_percentages(components: &mut [ComponentScore]) {
    let total: f64 = components.iter().map(|c| c.raw).sum();
    let k = components.len() as f64;
    for c in components.iter_mut() {
        c.percent = if total > 0.0 { c.raw / total * 100.0 } else { 100.0 / k };
    }
}

/// Average token norms within each component.
pub fn component_scores(norms: &[f64], map: &TokenSpanMap, opts: AttributionOptions) -> Result<AttributionResult> {
    map.validate(norms.len())?;
    let limit = if opts.exclude_query {
        norms.len().saturating_sub(1)
    } else {
        norms.len()
    };

    let mut pooled: BTreeMap<ComponentKind, (f64, usize)> = BTreeMap::new();
    let mut demos: BTreeMap<(ComponentKind, usize), (f64, usize)> = BTreeMap::new();
    let mut seen: Vec<ComponentKind> = Vec::new();
    for s in &map.spans {
        if !seen.contains(&s.kind) {
            seen.push(s.kind);
        }
        for norm in &norms[s.start.min(limit)..s.end.min(limit)] {
            let e = pooled.entry(s.kind).or_default();
            e.0 += norm;
            e.1 += 1;
            if let Some(d) = s.demo {
                let e = demos.entry((s.kind, d)).or_default();
                e.0 += norm;
                e.1 += 1;
            }
        }
    }

    let mut warnings = Vec::new();
    seen.sort();
    for kind in seen {
        if !pooled.contains_key(&kind) {
            warnings.push(format!("component {kind} has no tokens and was left out"));
        }
    }

    let mut components: Vec<ComponentScore> = pooled
        .into_iter()
        .map(|(kind, (sum, n))| ComponentScore {
            kind,
            raw: sum / n as f64,
            percent: 0.0,
            tokens: n,
        })
        .collect();
    if components.is_empty() {
        return Err(Error::InsufficientData("no tokens left to attribute".into()));
    }
    fill_percentages(&mut components);

    Ok(AttributionResult {
        components,
        per_demo: demos
            .into_iter()
            .map(|((kind, demo), (sum, n))| DemoScore {
                kind,
                demo,
                raw: sum / n as f64,
                tokens: n,
            })
            .collect(),
        samples: 1,
        warnings,
    })
}

/// Per-token norms and component scores for one dump.
pub fn attribute(dump: &AttentionDump, map: &TokenSpanMap, opts: AttributionOptions) -> Result<AttributionResult> {
    component_scores(&per_token_norms(dump)?, map, opts)
}

/// Componentwise mean of raw scores; percentages are recomputed from the means.
pub fn average_over_samples(results: &[AttributionResult]) -> Result<AttributionResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::InsufficientData("no samples to average".into()))?;
    let keys: Vec<ComponentKind> = first.components.iter().map(|c| c.kind).collect();
    let mut raws = vec![0f64; keys.len()];
    let mut tokens = vec![0usize; keys.len()];
    let mut demos: BTreeMap<(ComponentKind, usize), (f64, usize, usize)> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut samples = 0;
    for (i, r) in results.iter().enumerate() {
        let these: Vec<ComponentKind> = r.components.iter().map(|c| c.kind).collect();
        if these != keys {
            return Err(Error::validation(
                format!("samples[{i}]"),
                format!("components {these:?} differ from {keys:?}"),
            ));
        }
        for (k, c) in r.components.iter().enumerate() {
            raws[k] += c.raw;
            tokens[k] += c.tokens;
        }
        for d in &r.per_demo {
            let e = demos.entry((d.kind, d.demo)).or_default();
            e.0 += d.raw;
            e.1 += d.tokens;
            e.2 += 1;
        }
        warnings.extend(r.warnings.iter().cloned());
        samples += r.samples;
    }
    let n = results.len() as f64;
    let mut components: Vec<ComponentScore> = keys
        .into_iter()
        .zip(raws.into_iter().zip(tokens))
        .map(|(kind, (raw, tokens))| ComponentScore {
            kind,
            raw: raw / n,
            percent: 0.0,
            tokens,
        })
        .collect();
    fill_percentages(&mut components);
    Ok(AttributionResult {
        components,
        per_demo: demos
            .into_iter()
            .map(|((kind, demo), (raw, tokens, count))| DemoScore {
                kind,
                demo,
                raw: raw / count as f64,
                tokens,
            })
            .collect(),
        samples,
        warnings,
    })
}

/// One attributed prompt plus whether the model answered it correctly.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedSample {
    pub result: AttributionResult,
    pub correct: bool,
}

/// Average, optionally keeping only correctly answered samples.
pub fn average_filtered(samples: &[AttributedSample], correct_only: bool) -> Result<AttributionResult> {
    let kept: Vec<AttributionResult> = samples
        .iter()
        .filter(|s| !correct_only || s.correct)
        .map(|s| s.result.clone())
        .collect();
    average_over_samples(&kept)
}
