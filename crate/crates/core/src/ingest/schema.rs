use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Horizon, IngestError};

pub const SCHEMA_ARITY: usize = 40;

const DEFAULT_VERSION: &str = "default-40.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Score,
    Decision,
    Price,
    Eps,
    Reserved,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Score => "score",
            FieldKind::Decision => "decision",
            FieldKind::Price => "price",
            FieldKind::Eps => "eps",
            FieldKind::Reserved => "reserved",
        }
    }
}

impl FromStr for FieldKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "score" => FieldKind::Score,
            "decision" => FieldKind::Decision,
            "price" => FieldKind::Price,
            "eps" => FieldKind::Eps,
            "reserved" => FieldKind::Reserved,
            other => {
                return Err(IngestError::InvalidSchema(format!(
                    "unknown field kind `{other}`"
                )))
            }
        })
    }
}

/// Where a schema field lands in [`super::SignalFields`]. Resolved from the field name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldSlot {
    Decision,
    Attractiveness(usize),
    RussellAttractiveness(usize),
    Sentiment,
    Divergence,
    ProbBeat,
    PriceTarget(usize),
    Eps(usize),
    Reserved,
}

const PRICE_TARGET_LABELS: [&str; 7] = ["today", "1d", "1w", "1m", "1q", "2q", "1y"];

impl FieldSlot {
    /// The 28 named slots every schema must carry exactly once.
    pub fn required() -> Vec<(String, FieldSlot, FieldKind)> {
        let mut out = vec![(
            "decision".to_string(),
            FieldSlot::Decision,
            FieldKind::Decision,
        )];
        for h in Horizon::ALL {
            out.push((
                format!("attractiveness_{h}"),
                FieldSlot::Attractiveness(h.index()),
                FieldKind::Score,
            ));
        }
        for (j, label) in PRICE_TARGET_LABELS.iter().enumerate() {
            out.push((
                format!("price_target_{label}"),
                FieldSlot::PriceTarget(j),
                FieldKind::Price,
            ));
        }
        for j in 0..5 {
            out.push((
                format!("eps_fy{}", j + 1),
                FieldSlot::Eps(j),
                FieldKind::Eps,
            ));
        }
        out.push((
            "prob_beat".to_string(),
            FieldSlot::ProbBeat,
            FieldKind::Score,
        ));
        for h in Horizon::ALL {
            out.push((
                format!("russell_attractiveness_{h}"),
                FieldSlot::RussellAttractiveness(h.index()),
                FieldKind::Score,
            ));
        }
        out.push((
            "sentiment".to_string(),
            FieldSlot::Sentiment,
            FieldKind::Score,
        ));
        out.push((
            "divergence".to_string(),
            FieldSlot::Divergence,
            FieldKind::Score,
        ));
        out
    }

    fn from_name(name: &str) -> FieldSlot {
        Self::required()
            .into_iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, slot, _)| slot)
            .unwrap_or(FieldSlot::Reserved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: FieldKind,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl FieldDescriptor {
    pub fn in_range(&self, value: f64) -> bool {
        self.min.is_none_or(|lo| value >= lo) && self.max.is_none_or(|hi| value <= hi)
    }
}

/// Ordered layout of the 40-element response list.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSchema {
    version: String,
    fields: Vec<FieldDescriptor>,
    slots: Vec<FieldSlot>,
}

impl ExtractSchema {
    pub fn new(
        version: impl Into<String>,
        fields: Vec<FieldDescriptor>,
    ) -> Result<Self, IngestError> {
        if fields.len() != SCHEMA_ARITY {
            return Err(IngestError::InvalidSchema(format!(
                "schema has {} fields, expected {SCHEMA_ARITY}",
                fields.len()
            )));
        }
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(IngestError::InvalidSchema(format!(
                    "duplicate field name `{}`",
                    f.name
                )));
            }
        }
        let slots: Vec<FieldSlot> = fields
            .iter()
            .map(|f| FieldSlot::from_name(&f.name))
            .collect();
        for (name, slot, kind) in FieldSlot::required() {
            let Some(pos) = slots.iter().position(|s| *s == slot) else {
                return Err(IngestError::InvalidSchema(format!(
                    "missing required field `{name}`"
                )));
            };
            if fields[pos].kind != kind {
                return Err(IngestError::InvalidSchema(format!(
                    "field `{name}` must have kind `{}`",
                    kind.as_str()
                )));
            }
        }
        for (f, slot) in fields.iter().zip(&slots) {
            if *slot == FieldSlot::Reserved && f.kind != FieldKind::Reserved {
                return Err(IngestError::InvalidSchema(format!(
                    "unknown field `{}` must have kind `reserved`",
                    f.name
                )));
            }
        }
        Ok(Self {
            version: version.into(),
            fields,
            slots,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn fields(&self) -> &[FieldDescriptor] {
        &self.fields
    }

    pub fn slot(&self, index: usize) -> FieldSlot {
        self.slots[index]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Non-reserved field names in schema order.
    pub fn named_fields(&self) -> impl Iterator<Item = (usize, &FieldDescriptor)> {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind != FieldKind::Reserved)
    }

    /// Reads `index,name,kind,min,max` rows. An optional leading `# version=<tag>` line sets the version.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut version = String::from("unversioned");
        let mut body = String::new();
        for line in text.lines() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("version=") {
                    version = v.trim().to_string();
                }
                continue;
            }
            body.push_str(line);
            body.push('\n');
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let header = reader.headers()?.clone();
        let expected = ["index", "name", "kind", "min", "max"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(IngestError::InvalidSchema(format!(
                "schema header must be `{}`",
                expected.join(",")
            )));
        }
        let mut fields = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let index: usize = rec[0]
                .parse()
                .map_err(|_| IngestError::InvalidSchema(format!("bad index `{}`", &rec[0])))?;
            if index != row {
                return Err(IngestError::InvalidSchema(format!(
                    "rows must be ordered by index: expected {row}, found {index}"
                )));
            }
            let bound = |s: &str| -> Result<Option<f64>, IngestError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| IngestError::InvalidSchema(format!("bad bound `{s}`")))
                }
            };
            fields.push(FieldDescriptor {
                name: rec[1].to_string(),
                kind: rec[2].parse()?,
                min: bound(&rec[3])?,
                max: bound(&rec[4])?,
            });
        }
        Self::new(version, fields)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# version={}\nindex,name,kind,min,max\n", self.version);
        let fmt = |b: Option<f64>| b.map(|v| v.to_string()).unwrap_or_default();
        for (i, f) in self.fields.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{}",
                f.name,
                f.kind.as_str(),
                fmt(f.min),
                fmt(f.max)
            );
        }
        out
    }

    /// A copy of this schema with fields reordered: new position `i` holds old field `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, IngestError> {
        let fields = order.iter().map(|&i| self.fields[i].clone()).collect();
        Self::new(self.version.clone(), fields)
    }
}

impl Default for ExtractSchema {
    /// The 28 fields named by the prompt (decision, six attractiveness scores, seven price
    /// targets, five EPS forecasts, the earnings-beat rating, six index scores, sentiment and
    /// divergence) followed by twelve reserved slots.
    fn default() -> Self {
        let mut fields: Vec<FieldDescriptor> = FieldSlot::required()
            .into_iter()
            .map(|(name, _, kind)| {
                let (min, max) = match kind {
                    FieldKind::Score => (Some(-5.0), Some(5.0)),
                    FieldKind::Price => (Some(0.0), None),
                    _ => (None, None),
                };
                FieldDescriptor {
                    name,
                    kind,
                    min,
                    max,
                }
            })
            .collect();
        for j in fields.len()..SCHEMA_ARITY {
            fields.push(FieldDescriptor {
                name: format!("reserved_{:02}", j - 27),
                kind: FieldKind::Reserved,
                min: None,
                max: None,
            });
        }
        Self::new(DEFAULT_VERSION, fields).expect("default schema is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let s = ExtractSchema::default();
        assert_eq!(s.fields().len(), 40);
        assert_eq!(s.named_fields().count(), 28);
        assert_eq!(s.fields()[28].name, "reserved_01");
        assert_eq!(s.fields()[39].name, "reserved_12");
        assert_eq!(s.slot(0), FieldSlot::Decision);
    }

    #[test]
    fn csv_round_trip() {
        let s = ExtractSchema::default();
        let back = ExtractSchema::parse(&s.to_csv()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_wrong_arity_and_duplicates() {
        let mut fields = ExtractSchema::default().fields().to_vec();
        fields.pop();
        assert!(matches!(
            ExtractSchema::new("x", fields.clone()),
            Err(IngestError::InvalidSchema(_))
        ));
        fields.push(fields[0].clone());
        let err = ExtractSchema::new("x", fields).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_missing_required_field() {
        let mut fields = ExtractSchema::default().fields().to_vec();
        fields[3] = FieldDescriptor {
            name: "something_else".into(),
            kind: FieldKind::Reserved,
            min: None,
            max: None,
        };
        let err = ExtractSchema::new("x", fields).unwrap_err();
        assert!(err.to_string().contains("attractiveness_1m"), "{err}");
    }
}
