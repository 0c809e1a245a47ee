//! Sweep records and their CSV form: `method,K,N,seed,estimate,ground_truth,elapsed_ns`,
//! floats written with 17 significant digits so they parse back exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::HarnessError;

pub const HEADER: [&str; 7] = ["method", "K", "N", "seed", "estimate", "ground_truth", "elapsed_ns"];

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub method: String,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub estimate: f64,
    pub ground_truth: f64,
    pub elapsed_ns: u64,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_records<W: Write>(w: W, records: &[EstimateRecord]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in records {
        out.write_record([
            r.method.clone(),
            r.k.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            float(r.estimate),
            float(r.ground_truth),
            r.elapsed_ns.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<EstimateRecord>, HarnessError> {
    let mut input = csv::Reader::from_reader(r);
    if input.headers()?.iter().ne(HEADER) {
        return Err(HarnessError::BadRecord {
            row: 0,
            message: format!("header must be {}", HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, row) in input.records().enumerate() {
        let row = row?;
        let bad = |field: &str| HarnessError::BadRecord {
            row: i + 1,
            message: format!("bad {field}"),
        };
        if row.len() != HEADER.len() {
            return Err(bad("field count"));
        }
        records.push(EstimateRecord {
            method: row[0].to_owned(),
            k: row[1].parse().map_err(|_| bad("K"))?,
            n: row[2].parse().map_err(|_| bad("N"))?,
            seed: row[3].parse().map_err(|_| bad("seed"))?,
            estimate: row[4].parse().map_err(|_| bad("estimate"))?,
            ground_truth: row[5].parse().map_err(|_| bad("ground_truth"))?,
            elapsed_ns: row[6].parse().map_err(|_| bad("elapsed_ns"))?,
        });
    }
    Ok(records)
}

pub fn write_csv(path: &Path, records: &[EstimateRecord]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_records(std::io::BufWriter::new(file), records)
}

pub fn read_csv(path: &Path) -> Result<Vec<EstimateRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_records(std::io::BufReader::new(file))
}
