//! CSV query points and labels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::QueryPoint;
use crate::error::{Error, Result};

/// Feature-map position with a class name or numeric target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub section: usize,
    pub x: usize,
    pub y: usize,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    section: usize,
    x: usize,
    y: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Rows `section,x,y` with a header.
pub fn read_points(text: &str) -> Result<Vec<QueryPoint>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<PointRow>()
        .map(|r| {
            r.map(|p| QueryPoint {
                section: p.section,
                x: p.x,
                y: p.y,
            })
            .map_err(csv_err)
        })
        .collect()
}

pub fn write_points(points: &[QueryPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(PointRow {
            section: p.section,
            x: p.x,
            y: p.y,
        })
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Rows `section,x,y,label` with a header.
pub fn read_labels(text: &str) -> Result<Vec<LabeledPoint>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<LabeledPoint>()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn write_labels(points: &[LabeledPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<QueryPoint>> {
    read_points(&std::fs::read_to_string(path)?)
}

pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledPoint>> {
    read_labels(&std::fs::read_to_string(path)?)
}
