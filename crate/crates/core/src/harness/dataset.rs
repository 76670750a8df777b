//! CSV data sets and evaluation on user-supplied data.
//!
//! Every column other than the target columns is a numeric feature. Target
//! columns by kind:
//!
//! | kind        | columns        | values                     |
//! |-------------|----------------|----------------------------|
//! | continuous  | `y`            | real                       |
//! | binary      | `label`        | `-1` or `1`                |
//! | survival    | `time`,`event` | positive real, `0` or `1`  |
//! | class       | `label`        | any string                 |

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, SurvivalData, Target, TargetKind};
use crate::error::{Error, Result};

use super::{evaluate_methods, splitmix64, PipelineOptions, ReplicateRecord, Split};

/// Features and target read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: FeatureMatrix,
    pub target: Target,
    /// Original class names, in index order (class targets only).
    pub class_names: Vec<String>,
}

fn target_columns(kind: TargetKind) -> &'static [&'static str] {
    match kind {
        TargetKind::Continuous => &["y"],
        TargetKind::Binary | TargetKind::Class => &["label"],
        TargetKind::Survival => &["time", "event"],
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_real(field: &str, column: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(line, format!("column `{column}`: cannot parse '{field}' as a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("column `{column}`: non-finite value '{field}'")));
    }
    Ok(v)
}

/// Reads a headed CSV with the target columns of `kind`.
pub fn read_dataset<R: Read>(reader: R, kind: TargetKind) -> Result<LabeledData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let wanted = target_columns(kind);
    let mut target_idx = Vec::with_capacity(wanted.len());
    for name in wanted {
        let positions: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h == name).map(|(j, _)| j).collect();
        match positions.as_slice() {
            [j] => target_idx.push(*j),
            [] => return Err(Error::Schema(format!("missing target column `{name}` for {kind} data"))),
            _ => return Err(Error::Schema(format!("target column `{name}` appears more than once"))),
        }
    }
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|j| !target_idx.contains(j)).collect();
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let names: Vec<String> = feature_idx.iter().map(|&j| headers[j].clone()).collect();

    let mut values = Vec::new();
    let mut reals = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let mut events = Vec::new();
    let mut classes: Vec<u32> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, u32> = HashMap::new();
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_error(line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        for &j in &feature_idx {
            values.push(parse_real(&record[j], &headers[j], line)?);
        }
        let field = |k: usize| record[target_idx[k]].trim();
        match kind {
            TargetKind::Continuous => reals.push(parse_real(field(0), "y", line)?),
            TargetKind::Binary => labels.push(match field(0) {
                "-1" | "-1.0" => -1,
                "1" | "+1" | "1.0" => 1,
                other => return Err(parse_error(line, format!("column `label`: expected -1 or 1, found '{other}'"))),
            }),
            TargetKind::Class => {
                let name = field(0).to_string();
                let next = class_index.len() as u32;
                let id = *class_index.entry(name.clone()).or_insert_with(|| {
                    class_names.push(name);
                    next
                });
                classes.push(id);
            }
            TargetKind::Survival => {
                let t = parse_real(field(0), "time", line)?;
                if t <= 0.0 {
                    return Err(parse_error(line, format!("column `time`: times must be positive, found {t}")));
                }
                reals.push(t);
                events.push(match field(1) {
                    "0" | "0.0" | "false" => false,
                    "1" | "1.0" | "true" => true,
                    other => return Err(parse_error(line, format!("column `event`: expected 0 or 1, found '{other}'"))),
                });
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyData("CSV has a header but no rows".into()));
    }
    let x = FeatureMatrix::with_names(
        Array2::from_shape_vec((n, feature_idx.len()), values).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        names,
    )?;
    let target = match kind {
        TargetKind::Continuous => Target::Continuous(reals),
        TargetKind::Binary => Target::Binary(labels),
        TargetKind::Class => Target::Class(classes),
        TargetKind::Survival => {
            if !events.iter().any(|&e| e) {
                return Err(Error::AllCensored {
                    column: headers[target_idx[1]].clone(),
                });
            }
            Target::Survival(SurvivalData::new(reals, events)?)
        }
    };
    Ok(LabeledData { x, target, class_names })
}

pub fn read_dataset_path(path: &Path, kind: TargetKind) -> Result<LabeledData> {
    read_dataset(File::open(path)?, kind)
}

/// Writes features followed by the target columns of `target`'s kind.
pub fn write_dataset<W: Write>(x: &FeatureMatrix, target: &Target, w: W) -> Result<()> {
    if x.nrows() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: target.len(),
        });
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = x.names().iter().map(String::as_str).collect();
    header.extend_from_slice(target_columns(target.kind()));
    out.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..x.nrows() {
        row.clear();
        row.extend(x.row(i).iter().map(|v| v.to_string()));
        match target {
            Target::Continuous(y) => row.push(y[i].to_string()),
            Target::Binary(y) => row.push(y[i].to_string()),
            Target::Class(y) => row.push(y[i].to_string()),
            Target::Survival(s) => {
                row.push(s.time[i].to_string());
                row.push(u8::from(s.event[i]).to_string());
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Settings for [`evaluate_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Random splits to run when no separate test set is given.
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub pipeline: PipelineOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            train_fraction: 0.75,
            seed: 0,
            pipeline: PipelineOptions::default(),
        }
    }
}

/// How the evaluation rows are chosen.
#[derive(Debug, Clone, Copy)]
pub enum EvalSplit<'a> {
    /// `repeats` random splits of the training data.
    Repeated,
    /// Train on all of the first data set and score on this one.
    TestSet(&'a LabeledData),
}

/// Runs the method comparison on user data.
pub fn evaluate_csv(data: &LabeledData, split: EvalSplit<'_>, options: &EvalOptions) -> Result<Vec<ReplicateRecord>> {
    options.pipeline.validate()?;
    match split {
        EvalSplit::TestSet(test) => {
            if test.x.names() != data.x.names() {
                return Err(Error::Schema(format!(
                    "test features {:?} differ from training features {:?}",
                    test.x.names(),
                    data.x.names()
                )));
            }
            if test.target.kind() != data.target.kind() {
                return Err(Error::Schema("test and training targets differ in kind".into()));
            }
            let metrics = evaluate_methods(&data.x, &data.target, &test.x, &test.target, &options.pipeline, splitmix64(options.seed))?;
            Ok(vec![ReplicateRecord {
                index: 0,
                seed: options.seed,
                split_hash: 0,
                n_train: data.x.nrows(),
                n_test: test.x.nrows(),
                metrics,
            }])
        }
        EvalSplit::Repeated => {
            if options.repeats == 0 {
                return Err(Error::InvalidParameter("repeats must be >= 1".into()));
            }
            if !(options.train_fraction > 0.0 && options.train_fraction < 1.0) {
                return Err(Error::InvalidParameter("train_fraction must be in (0, 1)".into()));
            }
            (0..options.repeats)
                .into_par_iter()
                .map(|r| {
                    let seed = options.seed ^ splitmix64(r as u64);
                    let s = Split::random(data.x.nrows(), options.train_fraction, splitmix64(seed))?;
                    let metrics = evaluate_methods(
                        &data.x.select_rows(&s.train),
                        &data.target.select(&s.train),
                        &data.x.select_rows(&s.test),
                        &data.target.select(&s.test),
                        &options.pipeline,
                        splitmix64(seed ^ 1),
                    )?;
                    Ok(ReplicateRecord {
                        index: r,
                        seed,
                        split_hash: s.hash(),
                        n_train: s.train.len(),
                        n_test: s.test.len(),
                        metrics,
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_survival_columns_anywhere() {
        let csv = "time,a,event,b\n1.5,0.1,1,2\n2.0,0.2,0,3\n";
        let d = read_dataset(csv.as_bytes(), TargetKind::Survival).unwrap();
        assert_eq!(d.x.names(), ["a", "b"]);
        let Target::Survival(s) = d.target else { panic!() };
        assert_eq!(s.time, vec![1.5, 2.0]);
        assert_eq!(s.event, vec![true, false]);
    }

    #[test]
    fn all_censored_names_column() {
        let csv = "x1,time,event\n0.1,1,0\n0.2,2,0\n";
        let err = read_dataset(csv.as_bytes(), TargetKind::Survival).unwrap_err();
        assert!(matches!(&err, Error::AllCensored { column } if column == "event"));
        assert!(err.to_string().contains("event"));
    }

    #[test]
    fn schema_and_parse_errors() {
        let err = read_dataset("x1,x2\n1,2\n".as_bytes(), TargetKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = read_dataset("x1,y\n1,2\n3,oops\n".as_bytes(), TargetKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_dataset("x1,label\n1,1\n2,0\n".as_bytes(), TargetKind::Binary).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn class_labels_keep_first_seen_order() {
        let d = read_dataset("x,label\n1,b\n2,a\n3,b\n".as_bytes(), TargetKind::Class).unwrap();
        assert_eq!(d.target, Target::Class(vec![0, 1, 0]));
        assert_eq!(d.class_names, ["b", "a"]);
    }

    #[test]
    fn write_then_read_round_trips() {
        let x = FeatureMatrix::from_rows(&[vec![0.1, 2.5], vec![1.0 / 3.0, -4.0]]).unwrap();
        let t = Target::Survival(SurvivalData::new(vec![0.7, 1.9], vec![true, false]).unwrap());
        let mut buf = Vec::new();
        write_dataset(&x, &t, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), TargetKind::Survival).unwrap();
        assert_eq!(back.x, x);
        assert_eq!(back.target, t);
    }
}
