//! Strict numeric CSV: comma separator, `.` decimal point, mandatory
//! header row, one sample per row. Numbers are emitted with 17
//! significant digits so reruns are byte-identical.

use std::path::Path;

use treelets::mat::Mat;

use crate::CliError;

/// Parsed CSV: header names plus the numeric body.
pub struct NumericCsv {
    pub columns: Vec<String>,
    pub data: Mat,
}

/// Reads a numeric CSV, reporting 1-based line numbers on every failure.
pub fn read_numeric_csv(path: &Path) -> Result<NumericCsv, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let at = |line: usize, msg: String| {
        CliError::Usage(format!("{}: line {line}: {msg}", path.display()))
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| at(1, "missing header row".into()))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if columns.iter().all(|c| c.parse::<f64>().is_ok()) {
        return Err(at(1, "expected a header row, found numeric data".into()));
    }
    if columns.iter().any(|c| c.is_empty()) {
        return Err(at(1, "empty column name in header".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(at(
                line_no,
                format!("expected {} cells, got {}", columns.len(), cells.len()),
            ));
        }
        let mut row = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                at(
                    line_no,
                    format!("column {}: cannot parse {cell:?} as a number", c + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(at(line_no, format!("column {}: non-finite value", c + 1)));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(at(2, "no data rows".into()));
    }
    let data =
        Mat::from_rows(&rows).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(NumericCsv { columns, data })
}

/// Renders a matrix as CSV under the given header.
pub fn matrix_to_csv(columns: &[String], data: &Mat) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for r in 0..data.rows() {
        let row: Vec<String> = data
            .row(r)
            .iter()
            .map(|&v| treelets::eiv::format_g17(v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
