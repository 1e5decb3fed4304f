use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub p: usize,
    /// `||x^p - F(x^p)||_inf`.
    pub residual_inf: f64,
    /// `max_{0 <= l <= min(s, p)} ||x^{p-l} - u||_inf` when a reference `u` is known.
    pub z_p: Option<f64>,
    /// `||x^p - u||_inf` when a reference `u` is known.
    pub err_inf: Option<f64>,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Equality on everything except wall-clock time.
    pub fn same_iterates(&self, other: &Trace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.p == b.p
                    && a.residual_inf.to_bits() == b.residual_inf.to_bits()
                    && a.z_p.map(f64::to_bits) == b.z_p.map(f64::to_bits)
                    && a.err_inf.map(f64::to_bits) == b.err_inf.map(f64::to_bits)
            })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(io_err)?);
        }
        Ok(Self { records })
    }

    /// CSV with header `p,residual_inf,z_p,err_inf,wall_ns`; missing values are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.records {
            wtr.serialize(r).map_err(io_err)?;
        }
        if self.records.is_empty() {
            wtr.write_record(["p", "residual_inf", "z_p", "err_inf", "wall_ns"])
                .map_err(io_err)?;
        }
        wtr.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<TraceRecord>, _>>()
            .map_err(io_err)?;
        Ok(Self { records })
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Internal(format!("trace i/o: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            records: vec![
                TraceRecord { p: 0, residual_inf: 1.5, z_p: Some(2.0), err_inf: Some(2.0), wall_ns: 10 },
                TraceRecord { p: 3, residual_inf: 0.25, z_p: None, err_inf: None, wall_ns: 42 },
            ],
        }
    }

    #[test]
    fn jsonl_schema() {
        let mut buf = Vec::new();
        sample().write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"p":0,"residual_inf":1.5,"z_p":2.0,"err_inf":2.0,"wall_ns":10}"#);
        assert!(text.lines().nth(1).unwrap().contains(r#""z_p":null"#));
        assert_eq!(Trace::read_jsonl(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "p,residual_inf,z_p,err_inf,wall_ns");
        assert_eq!(lines.next().unwrap(), "0,1.5,2.0,2.0,10");
        assert_eq!(lines.next().unwrap(), "3,0.25,,,42");
        assert_eq!(Trace::read_csv(&buf[..]).unwrap(), sample());
    }
}
