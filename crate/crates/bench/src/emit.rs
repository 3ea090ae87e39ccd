use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use turbocs_core::recover::Algorithm;

use crate::sweep::{Cell, SweepResult};
use crate::{BenchError, Result};

pub const CSV_HEADER: &str =
    "algorithm,snr_db,trials,symbol_errors,ser,ci_lo,ci_hi,mean_iters,clamp_rate,wall_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            other => Err(BenchError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// One line of the CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub trials: u64,
    pub symbol_errors: u64,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_iters: f64,
    pub clamp_rate: f64,
    pub wall_time_s: f64,
}

impl From<&Cell> for CsvRow {
    fn from(c: &Cell) -> Self {
        CsvRow {
            algorithm: c.algorithm,
            snr_db: c.snr_db,
            trials: c.trials,
            symbol_errors: c.symbol_errors,
            ser: c.ser,
            ci_lo: c.ci_lo,
            ci_hi: c.ci_hi,
            mean_iters: c.mean_iters,
            clamp_rate: c.clamp_rate,
            wall_time_s: c.wall_time_s,
        }
    }
}

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for cell in &result.cells {
        w.serialize(CsvRow::from(cell))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected CSV header {:?}", header.join(","))));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    writeln!(out)?;
    Ok(())
}

/// `snr_db` followed by one SER column per algorithm.
pub fn write_plot_data<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let algos = &result.config.algorithms;
    let mut header = vec!["snr_db".to_string()];
    header.extend(algos.iter().map(|a| a.name().to_string()));
    w.write_record(&header)?;
    for &snr in &result.config.snr_db_grid {
        let mut row = vec![snr.to_string()];
        for &a in algos {
            row.push(result.cell(a, snr).map_or(String::new(), |c| c.ser.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `<stem>.csv` and/or `<stem>.json`, plus `<stem>_plot.csv`, where
/// `<stem>` is `path` without its extension. Returns the files written.
pub fn emit(result: &SweepResult, format: Format, path: &Path) -> Result<Vec<PathBuf>> {
    let stem = path.with_extension("");
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let p = stem.with_extension("csv");
        write_csv(result, create(&p)?)?;
        written.push(p);
    }
    if matches!(format, Format::Json | Format::Both) {
        let p = stem.with_extension("json");
        write_json(result, create(&p)?)?;
        written.push(p);
    }
    let mut plot = stem.into_os_string();
    plot.push("_plot.csv");
    let plot = PathBuf::from(plot);
    write_plot_data(result, create(&plot)?)?;
    written.push(plot);
    Ok(written)
}
