use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::{check_header, parse_date, parse_f64, IngestError, IngestWarning};

const FACTOR_COLUMNS: [&str; 8] = ["date", "mkt_rf", "smb", "hml", "rmw", "cma", "mom", "rf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorUnits {
    Percent,
    Decimal,
}

impl FactorUnits {
    /// Units per unit of decimal return.
    pub fn scale(self) -> f64 {
        match self {
            FactorUnits::Percent => 100.0,
            FactorUnits::Decimal => 1.0,
        }
    }
}

impl FromStr for FactorUnits {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "percent" => Ok(FactorUnits::Percent),
            "decimal" => Ok(FactorUnits::Decimal),
            other => Err(IngestError::InvalidValue {
                field: "units".into(),
                value: other.into(),
            }),
        }
    }
}

/// One day of factor returns, stored as decimal fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorObservation {
    pub date: NaiveDate,
    pub mkt_rf: f64,
    pub smb: f64,
    pub hml: f64,
    pub rmw: f64,
    pub cma: f64,
    pub mom: f64,
    pub rf: f64,
}

impl FactorObservation {
    /// MKT, SMB, HML, RMW, CMA, MOM.
    pub fn factors(&self) -> [f64; 6] {
        [
            self.mkt_rf,
            self.smb,
            self.hml,
            self.rmw,
            self.cma,
            self.mom,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub rows: Vec<FactorObservation>,
    pub warnings: Vec<IngestWarning>,
}

fn weekdays_between(after: NaiveDate, before: NaiveDate) -> usize {
    after
        .iter_days()
        .skip(1)
        .take_while(|d| *d < before)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .count()
}

/// Loads `date,mkt_rf,smb,hml,rmw,cma,mom,rf` with `YYYYMMDD` dates, sorted by date.
///
/// Missing weekdays between consecutive rows produce `GapInCalendar` warnings.
pub fn load_factor_panel(path: &Path, units: FactorUnits) -> Result<FactorPanel, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    check_header(path, reader.headers()?, &FACTOR_COLUMNS)?;
    let scale = units.scale();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        let mut v = [0.0; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            let name = FACTOR_COLUMNS[k + 1];
            let x = parse_f64(name, &rec[k + 1])?;
            if !x.is_finite() {
                return Err(IngestError::NonFinite {
                    field: name.into(),
                    date,
                });
            }
            *slot = x / scale;
        }
        rows.push(FactorObservation {
            date,
            mkt_rf: v[0],
            smb: v[1],
            hml: v[2],
            rmw: v[3],
            cma: v[4],
            mom: v[5],
            rf: v[6],
        });
    }
    rows.sort_by_key(|r| r.date);
    let mut warnings = Vec::new();
    for w in rows.windows(2) {
        if w[0].date == w[1].date {
            return Err(IngestError::DuplicateDate(w[0].date));
        }
        let missing = weekdays_between(w[0].date, w[1].date);
        if missing > 0 {
            warnings.push(IngestWarning::GapInCalendar {
                after: w[0].date,
                before: w[1].date,
                missing_weekdays: missing,
            });
        }
    }
    Ok(FactorPanel { rows, warnings })
}

pub fn write_factor_panel(
    path: &Path,
    rows: &[FactorObservation],
    units: FactorUnits,
) -> Result<(), IngestError> {
    let scale = units.scale();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", FACTOR_COLUMNS.join(","))?;
    for r in rows {
        write!(w, "{}", r.date.format("%Y%m%d"))?;
        for x in [r.mkt_rf, r.smb, r.hml, r.rmw, r.cma, r.mom, r.rf] {
            write!(w, ",{}", x * scale)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "date,mkt_rf,smb,hml,rmw,cma,mom,rf\n";

    fn load(body: &str, units: FactorUnits) -> Result<FactorPanel, IngestError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, body).unwrap();
        load_factor_panel(&p, units)
    }

    #[test]
    fn percent_is_divided_by_100() {
        let panel = load(
            &format!("{HEADER}20250402,1.00,0,0,0,0,0,0.02\n"),
            FactorUnits::Percent,
        )
        .unwrap();
        assert_eq!(panel.rows[0].mkt_rf, 0.01);
        assert_eq!(panel.rows[0].rf, 0.0002);
    }

    #[test]
    fn decimal_passthrough() {
        let panel = load(
            &format!("{HEADER}20250402,0.0123,-0.004,0,0,0,0.5,0\n"),
            FactorUnits::Decimal,
        )
        .unwrap();
        assert_eq!(panel.rows[0].mkt_rf, 0.0123);
        assert_eq!(panel.rows[0].smb, -0.004);
        assert_eq!(panel.rows[0].mom, 0.5);
    }

    #[test]
    fn gap_and_duplicate() {
        // Wed 2 Apr then Mon 7 Apr: Thu and Fri missing.
        let panel = load(
            &format!("{HEADER}20250402,0,0,0,0,0,0,0\n20250407,0,0,0,0,0,0,0\n"),
            FactorUnits::Decimal,
        )
        .unwrap();
        assert_eq!(panel.warnings.len(), 1);
        assert!(matches!(
            panel.warnings[0],
            IngestWarning::GapInCalendar {
                missing_weekdays: 2,
                ..
            }
        ));
        // Fri to Mon is not a gap.
        let panel = load(
            &format!("{HEADER}20250404,0,0,0,0,0,0,0\n20250407,0,0,0,0,0,0,0\n"),
            FactorUnits::Decimal,
        )
        .unwrap();
        assert!(panel.warnings.is_empty());
        let err = load(
            &format!("{HEADER}20250404,0,0,0,0,0,0,0\n20250404,0,0,0,0,0,0,0\n"),
            FactorUnits::Decimal,
        );
        assert!(matches!(err, Err(IngestError::DuplicateDate(_))));
    }

    #[test]
    fn missing_column() {
        let err = load("date,mkt_rf,smb,hml,rmw,cma,rf\n", FactorUnits::Decimal).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "mom"));
    }

    proptest! {
        #[test]
        fn write_read_round_trip(
            vals in proptest::collection::vec(proptest::array::uniform7(-0.1f64..0.1), 1..40),
            percent in any::<bool>(),
        ) {
            let units = if percent { FactorUnits::Percent } else { FactorUnits::Decimal };
            let start = NaiveDate::from_ymd_opt(2025, 4, 1).unwrap();
            let rows: Vec<FactorObservation> = vals.iter().enumerate().map(|(i, v)| FactorObservation {
                date: start + chrono::Days::new(i as u64),
                mkt_rf: v[0], smb: v[1], hml: v[2], rmw: v[3], cma: v[4], mom: v[5], rf: v[6],
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            write_factor_panel(&p, &rows, units).unwrap();
            let back = load_factor_panel(&p, units).unwrap();
            prop_assert_eq!(back.rows.len(), rows.len());
            for (a, b) in back.rows.iter().zip(&rows) {
                prop_assert_eq!(a.date, b.date);
                for (x, y) in a.factors().iter().chain([a.rf].iter()).zip(b.factors().iter().chain([b.rf].iter())) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
