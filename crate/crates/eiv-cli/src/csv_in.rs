//! CSV input with the schema `group,y1,...,yl,x`; group labels 1..p.

use crate::CliError;
use eiv::linalg::Mat;
use eiv::model::{Dataset, ModelSpec};
use std::path::Path;

pub struct LoadedData {
    pub group_sizes: Vec<usize>,
    pub groups: Vec<Vec<Vec<f64>>>,
}

pub fn read_csv(path: &Path, l: usize, p: usize) -> Result<LoadedData, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;

    let expected: Vec<String> = std::iter::once("group".to_string())
        .chain((1..=l).map(|i| format!("y{i}")))
        .chain(std::iter::once("x".to_string()))
        .collect();
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        .clone();
    let found: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    if found != expected {
        for want in &expected {
            if !found.contains(want) {
                return Err(CliError::input(format!(
                    "{}: missing column `{want}` (expected header {})",
                    path.display(),
                    expected.join(",")
                )));
            }
        }
        return Err(CliError::input(format!(
            "{}: header must be exactly `{}`, got `{}`",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }

    let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); p];
    for result in reader.records() {
        let record = result.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|pos| pos.line()).unwrap_or_default();
        let group: usize = record[0].parse().map_err(|_| {
            CliError::input(format!(
                "{}: line {line}: bad group label `{}`",
                path.display(),
                &record[0]
            ))
        })?;
        if group == 0 || group > p {
            return Err(CliError::input(format!(
                "{}: line {line}: group {group} out of range 1..={p}",
                path.display()
            )));
        }
        let mut row = Vec::with_capacity(l + 1);
        for col in 1..=l + 1 {
            let value: f64 = record[col].parse().map_err(|_| {
                CliError::input(format!(
                    "{}: line {line}, column {}: bad number `{}`",
                    path.display(),
                    col + 1,
                    &record[col]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::input(format!(
                    "{}: line {line}: non-finite value",
                    path.display()
                )));
            }
            row.push(value);
        }
        groups[group - 1].push(row);
    }

    let group_sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    for (k, &n) in group_sizes.iter().enumerate() {
        if n == 0 {
            return Err(CliError::input(format!(
                "{}: group {} has no observations",
                path.display(),
                k + 1
            )));
        }
        if n < 3 {
            return Err(CliError::input(format!(
                "{}: group {} too small (n = {n}, need at least 3)",
                path.display(),
                k + 1
            )));
        }
    }
    Ok(LoadedData {
        group_sizes,
        groups,
    })
}

pub fn to_dataset(spec: &ModelSpec, data: &LoadedData) -> Result<Dataset, CliError> {
    let mats = data
        .groups
        .iter()
        .map(|rows| {
            let mut m = Mat::zeros(rows.len(), spec.l + 1);
            for (j, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    m[(j, c)] = *v;
                }
            }
            m
        })
        .collect();
    Dataset::new(spec, mats).map_err(|e| CliError::input(e.to_string()))
}
