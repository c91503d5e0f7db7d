//! Extraction of the structured response list from a raw chat log.
//!
//! Responses end with a Python-style list literal, but the surrounding text can contain
//! earlier drafts, citations in brackets and other noise. Every `[` is treated as a
//! potential list start; the last candidate that tokenizes into 40 scalars and
//! type-checks against the schema wins.

use std::str::FromStr;

use super::schema::{ExtractSchema, FieldKind, FieldSlot, SCHEMA_ARITY};
use super::{Decision, IngestError, RangeFlag, SignalFields};

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Str(String),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListCandidate {
    /// Byte offset of the opening bracket.
    pub start: usize,
    /// Byte offset of the matching closing bracket.
    pub end: usize,
    /// Tokenized elements, or the failing element index and reason.
    pub elements: Result<Vec<Literal>, (usize, String)>,
}

fn matching_bracket(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    for (j, &b) in bytes.iter().enumerate().skip(open) {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == q {
                quote = None;
            }
            continue;
        }
        match b {
            b'\'' | b'"' => quote = Some(b),
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits list content at top-level commas, honouring quotes.
fn split_elements(content: &str) -> Result<Vec<&str>, (usize, String)> {
    let bytes = content.as_bytes();
    let mut pieces = Vec::new();
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    let mut last = 0;
    for (j, &b) in bytes.iter().enumerate() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == q {
                quote = None;
            }
            continue;
        }
        match b {
            b'\'' | b'"' => quote = Some(b),
            b'[' | b']' => return Err((pieces.len(), "nested list".to_string())),
            b',' => {
                pieces.push(&content[last..j]);
                last = j + 1;
            }
            _ => {}
        }
    }
    if quote.is_some() {
        return Err((pieces.len(), "unterminated string".to_string()));
    }
    let tail = &content[last..];
    if !tail.trim().is_empty() || !pieces.is_empty() {
        pieces.push(tail);
    }
    // Python permits a trailing comma.
    if pieces.len() > 1 && pieces.last().is_some_and(|p| p.trim().is_empty()) {
        pieces.pop();
    }
    Ok(pieces)
}

fn unescape(inner: &str) -> String {
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_number(s: &str) -> Option<f64> {
    if s.is_empty()
        || !s
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'))
    {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_literal(piece: &str) -> Result<Literal, String> {
    let p = piece.trim();
    if p.is_empty() {
        return Err("empty element".into());
    }
    let b = p.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        return Ok(Literal::Str(unescape(&p[1..p.len() - 1])));
    }
    if matches!(p, "None" | "null" | "NULL") {
        return Ok(Literal::None);
    }
    parse_number(p)
        .map(Literal::Number)
        .ok_or_else(|| format!("`{p}` is not a scalar literal"))
}

fn tokenize(content: &str) -> Result<Vec<Literal>, (usize, String)> {
    split_elements(content)?
        .into_iter()
        .enumerate()
        .map(|(i, piece)| parse_literal(piece).map_err(|e| (i, e)))
        .collect()
}

/// Every bracket-delimited list candidate in `text`, ordered by start offset.
pub fn find_list_candidates(text: &str) -> Vec<ListCandidate> {
    let bytes = text.as_bytes();
    bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'[')
        .filter_map(|(start, _)| {
            let end = matching_bracket(bytes, start)?;
            Some(ListCandidate {
                start,
                end,
                elements: tokenize(&text[start + 1..end]),
            })
        })
        .collect()
}

fn numeric(lit: &Literal) -> Option<f64> {
    match lit {
        Literal::Number(v) => Some(*v),
        Literal::Str(s) => parse_number(s.trim()),
        Literal::None => None,
    }
}

fn build_fields(
    elements: &[Literal],
    schema: &ExtractSchema,
    source: &str,
) -> Result<SignalFields, IngestError> {
    debug_assert_eq!(elements.len(), SCHEMA_ARITY);
    let mut out = SignalFields {
        attractiveness: [0.0; 6],
        russell_attractiveness: [0.0; 6],
        sentiment: 0.0,
        divergence: 0.0,
        prob_beat: 0.0,
        decision: Decision::Wait,
        price_targets: [0.0; 7],
        eps_forecasts: [0.0; 5],
        range_flags: Vec::new(),
        source_line: source.to_string(),
    };
    for (index, (lit, desc)) in elements.iter().zip(schema.fields()).enumerate() {
        let slot = schema.slot(index);
        match desc.kind {
            FieldKind::Reserved => continue,
            FieldKind::Decision => {
                out.decision = match lit {
                    Literal::Str(s) => {
                        Decision::from_str(s).map_err(|_| IngestError::UnparseableElement {
                            index,
                            detail: format!("`{s}` is not BUY/WAIT/SELL"),
                        })?
                    }
                    other => {
                        return Err(IngestError::UnparseableElement {
                            index,
                            detail: format!("expected decision string, found {other:?}"),
                        })
                    }
                };
                continue;
            }
            FieldKind::Score | FieldKind::Price | FieldKind::Eps => {}
        }
        let value = numeric(lit).ok_or_else(|| IngestError::UnparseableElement {
            index,
            detail: format!("expected number for `{}`, found {lit:?}", desc.name),
        })?;
        if !desc.in_range(value) {
            out.range_flags.push(RangeFlag {
                index,
                field: desc.name.clone(),
                value,
            });
        }
        match slot {
            FieldSlot::Attractiveness(h) => out.attractiveness[h] = value,
            FieldSlot::RussellAttractiveness(h) => out.russell_attractiveness[h] = value,
            FieldSlot::Sentiment => out.sentiment = value,
            FieldSlot::Divergence => out.divergence = value,
            FieldSlot::ProbBeat => out.prob_beat = value,
            FieldSlot::PriceTarget(j) => out.price_targets[j] = value,
            FieldSlot::Eps(j) => out.eps_forecasts[j] = value,
            FieldSlot::Decision | FieldSlot::Reserved => unreachable!("handled by kind"),
        }
    }
    Ok(out)
}

/// Builds the signal payload from the last well-formed 40-element list in `raw_text`.
///
/// Out-of-range values are recorded in `range_flags` rather than rejected.
pub fn parse_response_list(
    raw_text: &str,
    schema: &ExtractSchema,
) -> Result<SignalFields, IngestError> {
    let candidates = find_list_candidates(raw_text);
    if candidates.is_empty() {
        return Err(IngestError::NoListFound);
    }
    let mut typed_failure = None;
    let mut arity_failure = None;
    for cand in candidates.iter().rev() {
        match &cand.elements {
            Ok(elems) if elems.len() == SCHEMA_ARITY => {
                match build_fields(elems, schema, &raw_text[cand.start..=cand.end]) {
                    Ok(fields) => return Ok(fields),
                    Err(e) => {
                        typed_failure.get_or_insert(e);
                    }
                }
            }
            Ok(elems) if elems.len() > 1 => {
                arity_failure.get_or_insert(IngestError::WrongArity {
                    found: elems.len(),
                    expected: SCHEMA_ARITY,
                });
            }
            _ => {}
        }
    }
    if let Some(e) = typed_failure.or(arity_failure) {
        return Err(e);
    }
    let last = candidates.last().expect("non-empty");
    Err(match &last.elements {
        Ok(elems) => IngestError::WrongArity {
            found: elems.len(),
            expected: SCHEMA_ARITY,
        },
        Err((index, detail)) => IngestError::UnparseableElement {
            index: *index,
            detail: detail.clone(),
        },
    })
}

/// Writes the payload back as a list literal in schema order. Reserved slots become `None`.
pub fn serialize_response_list(fields: &SignalFields, schema: &ExtractSchema) -> String {
    let elems: Vec<String> = (0..SCHEMA_ARITY)
        .map(|i| {
            let v = match schema.slot(i) {
                FieldSlot::Decision => return format!("'{}'", fields.decision.as_str()),
                FieldSlot::Reserved => return "None".to_string(),
                FieldSlot::Attractiveness(h) => fields.attractiveness[h],
                FieldSlot::RussellAttractiveness(h) => fields.russell_attractiveness[h],
                FieldSlot::Sentiment => fields.sentiment,
                FieldSlot::Divergence => fields.divergence,
                FieldSlot::ProbBeat => fields.prob_beat,
                FieldSlot::PriceTarget(j) => fields.price_targets[j],
                FieldSlot::Eps(j) => fields.eps_forecasts[j],
            };
            format!("{v}")
        })
        .collect();
    format!("[{}]", elems.join(", "))
}
