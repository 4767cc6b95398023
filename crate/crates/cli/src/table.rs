//! CSV time series: a header row, then one time step per row with input
//! columns `u_0..` followed by optional target columns `y_0..`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use linres::faer::{Mat, MatRef};

pub struct Series {
    pub inputs: Mat<f64>,
    pub targets: Option<Mat<f64>>,
}

fn column_index(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok()
}

pub fn read_series(path: &Path) -> Result<Series> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .with_context(|| format!("{}: cannot read the header row", path.display()))?
        .clone();
    let mut d_in = 0;
    let mut d_out = 0;
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        if column_index(name, "u_") == Some(pos) && d_out == 0 {
            d_in += 1;
        } else if column_index(name, "y_") == Some(pos - d_in) && d_in > 0 {
            d_out += 1;
        } else {
            bail!(
                "{}: line 1: unexpected column {name:?}; expected u_0..u_{{D_in-1}} then optional y_0..",
                path.display()
            );
        }
    }
    if d_in == 0 {
        bail!("{}: line 1: no input columns", path.display());
    }
    let width = d_in + d_out;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            bail!(
                "{}: line {line}: expected {width} fields, found {}",
                path.display(),
                record.len()
            );
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().with_context(|| {
                format!(
                    "{}: line {line}: column {} is not a number: {field:?}",
                    path.display(),
                    &headers[j]
                )
            })?;
            values.push(v);
        }
    }
    let steps = values.len() / width;
    if steps == 0 {
        bail!("{}: no data rows", path.display());
    }
    let inputs = Mat::from_fn(steps, d_in, |i, j| values[i * width + j]);
    let targets =
        (d_out > 0).then(|| Mat::from_fn(steps, d_out, |i, j| values[i * width + d_in + j]));
    Ok(Series { inputs, targets })
}

/// Writes named column blocks side by side; every block has the same row count.
pub fn write_columns(path: &Path, blocks: &[(&str, MatRef<'_, f64>)]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let header: Vec<String> = blocks
        .iter()
        .flat_map(|(prefix, m)| (0..m.ncols()).map(move |j| format!("{prefix}_{j}")))
        .collect();
    out.write_record(&header)?;
    let rows = blocks.first().map_or(0, |(_, m)| m.nrows());
    let mut record = Vec::with_capacity(header.len());
    for i in 0..rows {
        record.clear();
        for (_, m) in blocks {
            record.extend((0..m.ncols()).map(|j| num(m[(i, j)])));
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Serializes `rows` to `<prefix>.csv` with the given header and `report`
/// to `<prefix>.json`.
pub fn write_report<T: serde::Serialize>(
    prefix: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
    report: &T,
) -> Result<()> {
    let csv_path = prefix.with_extension("csv");
    let mut out = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("cannot create {}", csv_path.display()))?;
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    let json_path = prefix.with_extension("json");
    let mut file = File::create(&json_path)
        .with_context(|| format!("cannot create {}", json_path.display()))?;
    serde_json::to_writer_pretty(&mut file, report)?;
    writeln!(file)?;
    Ok(())
}

/// Shortest round-trip text of `v`, in exponent form when that is shorter.
pub fn num(v: f64) -> String {
    let plain = v.to_string();
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}
