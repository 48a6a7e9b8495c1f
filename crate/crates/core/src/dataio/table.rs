use std::collections::HashMap;

use super::spec::{DatasetSpec, FeatureKind};
use crate::error::{Result, SurvError};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Continuous(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Continuous(v) => v.len(),
            ColumnValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnValues::Continuous(v) => v[row].is_none(),
            ColumnValues::Categorical(v) => v[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_missing(r)).count()
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            ColumnValues::Continuous(_) => FeatureKind::Continuous,
            ColumnValues::Categorical(_) => FeatureKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: ColumnValues,
}

/// Parsed CSV rows: outcome columns plus typed feature cells, `None` = missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub columns: Vec<RawColumn>,
    /// Feature columns removed by [`super::drop_sparse_features`].
    pub dropped: Vec<String>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Reads the CSV named by `spec` into a [`RawTable`].
pub fn load_csv(spec: &DatasetSpec) -> Result<RawTable> {
    let path = spec.resolved_path();
    let file = std::fs::File::open(&path).map_err(|e| SurvError::io(&path, e))?;
    read_table(spec, file, &path)
}

pub(crate) fn read_table<R: std::io::Read>(
    spec: &DatasetSpec,
    reader: R,
    path: &std::path::Path,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let locate = |name: &str| {
        position.get(name).copied().ok_or_else(|| SurvError::Schema {
            path: path.to_path_buf(),
            msg: format!("column '{name}' not found in header"),
        })
    };

    let time_idx = locate(&spec.time_column)?;
    let start_idx = spec.start_column.as_deref().map(locate).transpose()?;
    let event_idx = locate(&spec.event.column)?;
    let filter = spec
        .filter
        .as_ref()
        .map(|f| locate(&f.column).map(|i| (i, &f.values)))
        .transpose()?;
    let feature_idx: Vec<usize> = spec
        .features
        .iter()
        .map(|f| locate(&f.name))
        .collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut columns: Vec<RawColumn> = spec
        .features
        .iter()
        .map(|f| RawColumn {
            name: f.name.clone(),
            values: match f.kind {
                FeatureKind::Continuous => ColumnValues::Continuous(Vec::new()),
                FeatureKind::Categorical => ColumnValues::Categorical(Vec::new()),
            },
        })
        .collect();

    let missing = spec.missing_token.as_str();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        // Header is row 1.
        let row = line + 2;
        let cell = |i: usize| record.get(i).unwrap_or("");
        if let Some((i, values)) = &filter {
            if !values.iter().any(|v| v == cell(*i)) {
                continue;
            }
        }
        let parse_num = |i: usize, column: &str| -> Result<f64> {
            let raw = cell(i);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SurvError::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: column.to_string(),
                    msg: format!("expected a number, found '{raw}'"),
                })
        };
        let mut time = parse_num(time_idx, &spec.time_column)?;
        if let (Some(i), Some(name)) = (start_idx, spec.start_column.as_deref()) {
            time -= parse_num(i, name)?;
        }
        if time < 0.0 {
            return Err(SurvError::Parse {
                path: path.to_path_buf(),
                row,
                column: spec.time_column.clone(),
                msg: format!("negative observed time {time}"),
            });
        }
        let ev = cell(event_idx);
        if ev == missing || ev.is_empty() {
            return Err(SurvError::Parse {
                path: path.to_path_buf(),
                row,
                column: spec.event.column.clone(),
                msg: "missing event indicator".into(),
            });
        }
        times.push(time);
        events.push(spec.event.event_values.iter().any(|v| v == ev));

        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            let raw = cell(i);
            let is_missing = raw == missing || raw.is_empty();
            match &mut col.values {
                ColumnValues::Continuous(v) => {
                    if is_missing {
                        v.push(None);
                    } else {
                        v.push(Some(parse_num(i, &col.name)?));
                    }
                }
                ColumnValues::Categorical(v) => {
                    v.push((!is_missing).then(|| raw.to_string()));
                }
            }
        }
    }

    Ok(RawTable {
        times,
        events,
        columns,
        dropped: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn spec(extra: &str) -> DatasetSpec {
        DatasetSpec::from_toml(&format!(
            r#"
name = "toy"
path = "toy.csv"
time_column = "time"
time_unit_length = 1.0
{extra}
[event]
column = "status"
event_values = ["1"]

[[features]]
name = "age"
kind = "continuous"

[[features]]
name = "grp"
kind = "categorical"
"#
        ))
        .unwrap()
    }

    #[test]
    fn reads_three_rows() {
        let csv = "time,status,age,grp\n1,1,30,a\n2,0,NA,b\n3.5,1,40,\"a\"\n";
        let t = read_table(&spec(""), csv.as_bytes(), Path::new("toy.csv")).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.events, vec![true, false, true]);
        assert_eq!(
            t.columns[0].values,
            ColumnValues::Continuous(vec![Some(30.0), None, Some(40.0)])
        );
        assert_eq!(
            t.columns[1].values,
            ColumnValues::Categorical(vec![Some("a".into()), Some("b".into()), Some("a".into())])
        );
    }

    #[test]
    fn missing_event_column_is_schema_error() {
        let csv = "time,age,grp\n1,30,a\n";
        let err = read_table(&spec(""), csv.as_bytes(), Path::new("toy.csv")).unwrap_err();
        assert!(matches!(err, SurvError::Schema { .. }));
    }

    #[test]
    fn bad_number_reports_location() {
        let csv = "time,status,age,grp\n1,1,30,a\n2,0,old,b\n";
        let err = read_table(&spec(""), csv.as_bytes(), Path::new("toy.csv")).unwrap_err();
        match err {
            SurvError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filter_and_start_column() {
        let csv = "time,start,status,age,grp,kind\n10,4,1,30,a,x\n9,1,0,31,a,y\n";
        let s = spec("start_column = \"start\"\nfilter = { column = \"kind\", values = [\"x\"] }");
        let t = read_table(&s, csv.as_bytes(), Path::new("toy.csv")).unwrap();
        assert_eq!(t.times, vec![6.0]);
    }
}
