//! CSV formats.
//!
//! **Functional sample**: the first row holds the grid points, every further
//! row one curve's values at those points.
//!
//! **Paired random-effects sample**: the header row is
//! `device,group,index,t_1,...,t_p`; every further row is
//! `device,group,index,x_1,...,x_p` with `device` in `{1,2}` and 1-based
//! `group` and `index`. Rows are written group by group, and within a group
//! pair by pair with device 1 before device 2; readers accept any row order
//! but require both devices for every `(group, index)`.
//!
//! Numbers are plain decimals with `.` as separator. Values are written in
//! shortest round-trip form, so write/read reproduces every bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fdata::{FunctionalSample, Grid};
use crate::random_effects::{Device, GroupRecord, PairedRESample};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn records<R: Read>(input: R, path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in reader(input).records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_f64(field: &str, path: &Path, line: u64, column: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("column {}: cannot parse {field:?} as a number", column + 1),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("column {}: non-finite value", column + 1),
        ));
    }
    Ok(v)
}

fn parse_values(fields: &[String], path: &Path, line: u64, offset: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| parse_f64(f, path, line, i + offset))
        .collect()
}

fn parse_index(field: &str, path: &Path, line: u64, what: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(parse_err(
            path,
            line,
            format!("{what} must be a positive integer, got {field:?}"),
        )),
    }
}

fn parse_grid(points: Vec<f64>, path: &Path, line: u64) -> Result<Grid> {
    Grid::new(points).map_err(|e| parse_err(path, line, e.to_string()))
}

/// Parses a functional sample; `path` is only used in diagnostics.
pub fn parse_sample<R: Read>(input: R, path: &Path) -> Result<FunctionalSample> {
    let recs = records(input, path)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(parse_err(path, 1, "empty file"));
    };
    let grid = parse_grid(parse_values(header, path, *hline, 0)?, path, *hline)?;
    if rows.is_empty() {
        return Err(parse_err(path, *hline, "no curves after the grid row"));
    }
    let mut curves = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != grid.len() {
            return Err(parse_err(
                path,
                *line,
                format!("expected {} values, found {}", grid.len(), fields.len()),
            ));
        }
        curves.push(parse_values(fields, path, *line, 0)?);
    }
    FunctionalSample::from_rows(grid, curves)
}

pub fn read_sample(path: impl AsRef<Path>) -> Result<FunctionalSample> {
    let path = path.as_ref();
    parse_sample(File::open(path)?, path)
}

fn write_row<W: Write>(out: &mut W, lead: &[String], values: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for cell in lead
        .iter()
        .cloned()
        .chain(values.iter().map(|v| format!("{v}")))
    {
        if !first {
            out.write_all(b",")?;
        }
        out.write_all(cell.as_bytes())?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn format_sample<W: Write>(out: &mut W, sample: &FunctionalSample) -> Result<()> {
    write_row(out, &[], sample.grid().points())?;
    for c in sample.curves() {
        write_row(out, &[], c)?;
    }
    Ok(())
}

pub fn write_sample(path: impl AsRef<Path>, sample: &FunctionalSample) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    format_sample(&mut f, sample)?;
    f.flush()?;
    Ok(())
}

const PAIRED_HEADER: [&str; 3] = ["device", "group", "index"];

/// Parses a paired random-effects sample; `path` is only used in diagnostics.
pub fn parse_paired<R: Read>(input: R, path: &Path) -> Result<PairedRESample> {
    let recs = records(input, path)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(parse_err(path, 1, "empty file"));
    };
    if header.len() < 5 || header[..3] != PAIRED_HEADER.map(String::from) {
        return Err(parse_err(
            path,
            *hline,
            "header must be device,group,index followed by at least two grid points",
        ));
    }
    let grid = parse_grid(parse_values(&header[3..], path, *hline, 3)?, path, *hline)?;

    type Slot = [Option<Vec<f64>>; 2];
    let mut groups: BTreeMap<usize, BTreeMap<usize, Slot>> = BTreeMap::new();
    for (line, fields) in rows {
        if fields.len() != grid.len() + 3 {
            return Err(parse_err(
                path,
                *line,
                format!("expected {} fields, found {}", grid.len() + 3, fields.len()),
            ));
        }
        let device = match fields[0].as_str() {
            "1" => 0,
            "2" => 1,
            other => {
                return Err(parse_err(
                    path,
                    *line,
                    format!("device must be 1 or 2, got {other:?}"),
                ))
            }
        };
        let group = parse_index(&fields[1], path, *line, "group")?;
        let index = parse_index(&fields[2], path, *line, "index")?;
        let values = parse_values(&fields[3..], path, *line, 3)?;
        let slot = groups.entry(group).or_default().entry(index).or_default();
        if slot[device].replace(values).is_some() {
            return Err(parse_err(
                path,
                *line,
                format!(
                    "duplicate row for device {}, group {group}, index {index}",
                    device + 1
                ),
            ));
        }
    }

    let mut records = Vec::with_capacity(groups.len());
    for (group, pairs) in groups {
        let mut d1 = Vec::with_capacity(pairs.len());
        let mut d2 = Vec::with_capacity(pairs.len());
        for (index, [a, b]) in pairs {
            match (a, b) {
                (Some(a), Some(b)) => {
                    d1.push(a);
                    d2.push(b);
                }
                _ => {
                    return Err(parse_err(
                        path,
                        0,
                        format!("group {group}, index {index} lacks one of the two devices"),
                    ))
                }
            }
        }
        records.push(GroupRecord::new(
            FunctionalSample::from_rows(grid.clone(), d1)?,
            FunctionalSample::from_rows(grid.clone(), d2)?,
        )?);
    }
    PairedRESample::new(grid, records)
}

pub fn read_paired(path: impl AsRef<Path>) -> Result<PairedRESample> {
    let path = path.as_ref();
    parse_paired(File::open(path)?, path)
}

pub fn format_paired<W: Write>(out: &mut W, data: &PairedRESample) -> Result<()> {
    let lead: Vec<String> = PAIRED_HEADER.iter().map(|s| s.to_string()).collect();
    write_row(out, &lead, data.grid().points())?;
    for (gi, g) in data.groups().iter().enumerate() {
        for j in 0..g.size() {
            for (d, dev) in [(1, Device::One), (2, Device::Two)] {
                let lead = [d.to_string(), (gi + 1).to_string(), (j + 1).to_string()];
                write_row(out, &lead, g.device(dev).curve(j))?;
            }
        }
    }
    Ok(())
}

pub fn write_paired(path: impl AsRef<Path>, data: &PairedRESample) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    format_paired(&mut f, data)?;
    f.flush()?;
    Ok(())
}

/// Placeholder path for in-memory parsing diagnostics.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
