//! CSV output for fields and JSON output for reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid, StepField, TimeGrid};

/// Embedded in every JSON document written by this crate.
pub const SCHEMA_VERSION: &str = "kdvb-report/1";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// `{"schema": ..., "kind": kind, ...body}` as pretty JSON.
pub fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    serde_json::to_string_pretty(&Envelope {
        schema: SCHEMA_VERSION,
        kind,
        body,
    })
    .map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    let mut text = to_json(kind, body)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn push_row(out: &mut String, t: f64, sg: &SpatialGrid, values: &[f64]) {
    // the pinned glue node is written at both ends
    let _ = writeln!(out, "{t:e},{:e},0e0", 0.0);
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{t:e},{:e},{v:e}", sg.node(i + 1));
    }
    let _ = writeln!(out, "{t:e},{:e},0e0", sg.length());
}

/// Long format `t,x,value` over levels, glue node included.
pub fn field_csv(field: &Field, sg: &SpatialGrid, tg: &TimeGrid) -> Result<String> {
    field.check_grids(sg, tg)?;
    let mut out = String::from("t,x,value\n");
    for n in 0..tg.levels() {
        push_row(&mut out, tg.time(n), sg, field.level(n));
    }
    Ok(out)
}

/// The same over steps, with `t` the step time at `theta`.
pub fn step_field_csv(
    field: &StepField,
    sg: &SpatialGrid,
    tg: &TimeGrid,
    theta: f64,
) -> Result<String> {
    field.check_grids(sg, tg)?;
    let mut out = String::from("t,x,value\n");
    for n in 0..tg.steps() {
        push_row(&mut out, tg.step_time(n, theta), sg, field.step(n));
    }
    Ok(out)
}

pub fn write_field_csv(path: &Path, field: &Field, sg: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
    fs::write(path, field_csv(field, sg, tg)?)?;
    Ok(())
}

/// Columns `header` with one row per entry of the equally long `columns`.
pub fn table_csv(header: &[&str], columns: &[Vec<f64>]) -> Result<String> {
    if header.len() != columns.len() {
        return Err(Error::shape(header.len(), columns.len()));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::shape(rows, c.len()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| format!("{:e}", c[r])).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};

    #[test]
    fn field_csv_has_one_row_per_node_and_level() {
        let sg = make_grid(1.0, 8).unwrap();
        let tg = make_time_grid(1.0, 8).unwrap();
        let f = Field::from_fn(&sg, &tg, |x, t| x + t);
        let text = field_csv(&f, &sg, &tg).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,value");
        assert_eq!(lines.len(), 9 * 9 + 1);
        let row: Vec<f64> = lines[12].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.125, 0.25, 0.375]);
    }

    #[test]
    fn json_carries_the_schema_version() {
        let text = to_json("demo", &serde_json::json!({ "a": 1 })).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], SCHEMA_VERSION);
        assert_eq!(v["kind"], "demo");
        assert_eq!(v["a"], 1);
    }

    #[test]
    fn ragged_table_is_rejected() {
        assert!(table_csv(&["a", "b"], &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
