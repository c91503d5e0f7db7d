//! Signal files: chat-log blocks headed `### <TICKER> <YYYY-MM-DD> [draw]`, or a
//! pre-parsed CSV with `stock_id,date` followed by the schema's named fields.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::extract::{parse_response_list, serialize_response_list};
use super::schema::{ExtractSchema, FieldKind, FieldSlot};
use super::{
    parse_date, parse_f64, Decision, IngestError, IngestWarning, RangeFlag, SignalFields,
    SignalObservation,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub stock_id: String,
    pub date: NaiveDate,
    pub draw_index: Option<u32>,
    pub line: usize,
    pub text: String,
}

#[derive(Debug)]
pub struct BlockFailure {
    pub stock_id: String,
    pub date: NaiveDate,
    pub line: usize,
    pub error: IngestError,
}

#[derive(Debug, Default)]
pub struct SignalLoad {
    /// One observation per (stock, date); the lowest draw index when regenerations exist.
    pub observations: Vec<SignalObservation>,
    /// Additional draws for keys that carried explicit draw indices.
    pub extra_draws: Vec<(u32, SignalObservation)>,
    pub failures: Vec<BlockFailure>,
    pub warnings: Vec<IngestWarning>,
}

fn parse_header(
    line: &str,
    lineno: usize,
) -> Result<Option<(String, NaiveDate, Option<u32>)>, IngestError> {
    let Some(rest) = line.strip_prefix("###") else {
        return Ok(None);
    };
    let parts: Vec<&str> = rest.split_whitespace().collect();
    let malformed = || IngestError::Malformed {
        line: lineno,
        detail: format!("block header must be `### <TICKER> <YYYY-MM-DD> [draw]`, found `{line}`"),
    };
    if !(2..=3).contains(&parts.len()) {
        return Err(malformed());
    }
    let date = parse_date(parts[1]).map_err(|_| malformed())?;
    let draw = match parts.get(2) {
        Some(d) => Some(d.parse::<u32>().map_err(|_| malformed())?),
        None => None,
    };
    Ok(Some((parts[0].to_string(), date, draw)))
}

pub fn split_signal_blocks(text: &str) -> Result<Vec<SignalBlock>, IngestError> {
    let mut blocks: Vec<SignalBlock> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some((stock_id, date, draw_index)) = parse_header(line, i + 1)? {
            blocks.push(SignalBlock {
                stock_id,
                date,
                draw_index,
                line: i + 1,
                text: String::new(),
            });
        } else if let Some(b) = blocks.last_mut() {
            b.text.push_str(line);
            b.text.push('\n');
        } else if !line.trim().is_empty() {
            return Err(IngestError::Malformed {
                line: i + 1,
                detail: "text before the first block header".into(),
            });
        }
    }
    Ok(blocks)
}

fn range_warnings(obs: &SignalObservation) -> impl Iterator<Item = IngestWarning> + '_ {
    obs.fields
        .range_flags
        .iter()
        .map(|flag| IngestWarning::RangeViolation {
            stock_id: obs.stock_id.clone(),
            date: obs.date,
            flag: flag.clone(),
        })
}

/// Parses every block. A block without a usable list is recorded as a failure, not an error.
pub fn load_signal_blocks(path: &Path, schema: &ExtractSchema) -> Result<SignalLoad, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let mut load = SignalLoad::default();
    let mut by_key: BTreeMap<(String, NaiveDate), Vec<(Option<u32>, SignalObservation)>> =
        BTreeMap::new();
    for block in split_signal_blocks(&text)? {
        match parse_response_list(&block.text, schema) {
            Ok(fields) => {
                let obs = SignalObservation {
                    stock_id: block.stock_id.clone(),
                    date: block.date,
                    fields,
                };
                load.warnings.extend(range_warnings(&obs));
                by_key
                    .entry((block.stock_id, block.date))
                    .or_default()
                    .push((block.draw_index, obs));
            }
            Err(error) => load.failures.push(BlockFailure {
                stock_id: block.stock_id,
                date: block.date,
                line: block.line,
                error,
            }),
        }
    }
    for ((stock_id, date), mut draws) in by_key {
        if draws.len() > 1 {
            let mut idx: Vec<Option<u32>> = draws.iter().map(|d| d.0).collect();
            idx.sort();
            idx.dedup();
            if idx.len() != draws.len() || idx.contains(&None) {
                return Err(IngestError::DuplicateKey { stock_id, date });
            }
        }
        draws.sort_by_key(|d| d.0);
        let mut it = draws.into_iter();
        load.observations.push(it.next().expect("non-empty").1);
        load.extra_draws
            .extend(it.map(|(d, o)| (d.expect("checked above"), o)));
    }
    Ok(load)
}

pub fn write_signal_blocks(
    path: &Path,
    observations: &[SignalObservation],
    schema: &ExtractSchema,
) -> Result<(), IngestError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for obs in observations {
        writeln!(w, "### {} {}", obs.stock_id, obs.date.format("%Y-%m-%d"))?;
        writeln!(w, "Final summary list:")?;
        writeln!(w, "{}", serialize_response_list(&obs.fields, schema))?;
    }
    w.flush()?;
    Ok(())
}

fn field_value(fields: &SignalFields, slot: FieldSlot) -> Option<f64> {
    Some(match slot {
        FieldSlot::Attractiveness(h) => fields.attractiveness[h],
        FieldSlot::RussellAttractiveness(h) => fields.russell_attractiveness[h],
        FieldSlot::Sentiment => fields.sentiment,
        FieldSlot::Divergence => fields.divergence,
        FieldSlot::ProbBeat => fields.prob_beat,
        FieldSlot::PriceTarget(j) => fields.price_targets[j],
        FieldSlot::Eps(j) => fields.eps_forecasts[j],
        FieldSlot::Decision | FieldSlot::Reserved => return None,
    })
}

pub fn write_signals_csv(
    path: &Path,
    observations: &[SignalObservation],
    schema: &ExtractSchema,
) -> Result<(), IngestError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let names: Vec<&str> = schema
        .named_fields()
        .map(|(_, f)| f.name.as_str())
        .collect();
    writeln!(w, "stock_id,date,{}", names.join(","))?;
    let slots: Vec<FieldSlot> = schema.named_fields().map(|(i, _)| schema.slot(i)).collect();
    let mut line = String::new();
    for obs in observations {
        line.clear();
        line.push_str(&obs.stock_id);
        line.push(',');
        line.push_str(&obs.date.format("%Y-%m-%d").to_string());
        for slot in &slots {
            line.push(',');
            match field_value(&obs.fields, *slot) {
                Some(v) => line.push_str(&v.to_string()),
                None => line.push_str(obs.fields.decision.as_str()),
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads the pre-parsed signal CSV. Range flags are recomputed from the schema.
pub fn load_signals_csv(path: &Path, schema: &ExtractSchema) -> Result<SignalLoad, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let mut expected = vec!["stock_id", "date"];
    expected.extend(schema.named_fields().map(|(_, f)| f.name.as_str()));
    super::check_header(path, &header, &expected)?;
    let cols: Vec<(usize, FieldSlot)> = schema
        .named_fields()
        .map(|(i, _)| (i, schema.slot(i)))
        .collect();
    let mut load = SignalLoad::default();
    let mut seen = std::collections::HashSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let stock_id = rec[0].to_string();
        let date = parse_date(&rec[1])?;
        if !seen.insert((stock_id.clone(), date)) {
            return Err(IngestError::DuplicateKey { stock_id, date });
        }
        let mut fields = SignalFields {
            attractiveness: [0.0; 6],
            russell_attractiveness: [0.0; 6],
            sentiment: 0.0,
            divergence: 0.0,
            prob_beat: 0.0,
            decision: Decision::Wait,
            price_targets: [0.0; 7],
            eps_forecasts: [0.0; 5],
            range_flags: Vec::new(),
            source_line: rec.iter().collect::<Vec<_>>().join(","),
        };
        for (k, (index, slot)) in cols.iter().enumerate() {
            let raw = &rec[k + 2];
            let desc = &schema.fields()[*index];
            if desc.kind == FieldKind::Decision {
                fields.decision = raw.parse().map_err(|_| IngestError::InvalidValue {
                    field: desc.name.clone(),
                    value: raw.to_string(),
                })?;
                continue;
            }
            let v = parse_f64(&desc.name, raw)?;
            if !desc.in_range(v) {
                fields.range_flags.push(RangeFlag {
                    index: *index,
                    field: desc.name.clone(),
                    value: v,
                });
            }
            match slot {
                FieldSlot::Attractiveness(h) => fields.attractiveness[*h] = v,
                FieldSlot::RussellAttractiveness(h) => fields.russell_attractiveness[*h] = v,
                FieldSlot::Sentiment => fields.sentiment = v,
                FieldSlot::Divergence => fields.divergence = v,
                FieldSlot::ProbBeat => fields.prob_beat = v,
                FieldSlot::PriceTarget(j) => fields.price_targets[*j] = v,
                FieldSlot::Eps(j) => fields.eps_forecasts[*j] = v,
                FieldSlot::Decision | FieldSlot::Reserved => {}
            }
        }
        fields.range_flags.sort_by_key(|f| f.index);
        let obs = SignalObservation {
            stock_id,
            date,
            fields,
        };
        load.warnings.extend(range_warnings(&obs));
        load.observations.push(obs);
    }
    Ok(load)
}

/// Dispatches on extension: `.csv` is the pre-parsed form, anything else is a block log.
pub fn load_signals(path: &Path, schema: &ExtractSchema) -> Result<SignalLoad, IngestError> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        load_signals_csv(path, schema)
    } else {
        load_signal_blocks(path, schema)
    }
}
