//! Numeric CSV tables. Floats are written in their shortest round-trip form,
//! so identical runs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

fn cell(x: f64) -> String {
    format!("{x:?}")
}

/// Streaming table writer with a fixed header.
pub struct TableWriter<W: Write> {
    inner: csv::Writer<W>,
    width: usize,
}

impl<W: Write> TableWriter<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        inner.write_record(header).map_err(std::io::Error::from)?;
        Ok(TableWriter { inner, width: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.width);
        self.inner.write_record(values.iter().map(|&x| cell(x))).map_err(std::io::Error::from)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
    }
}

impl TableWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        TableWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

/// Writes a whole table to `path`.
pub fn write_table<R: AsRef<[f64]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = TableWriter::create(path, header)?;
    for r in rows {
        w.row(r.as_ref())?;
    }
    w.finish()?.flush()?;
    Ok(())
}

/// Renders a table as a string (used for terminal output).
pub fn table_string<R: AsRef<[f64]>>(header: &[&str], rows: &[R]) -> Result<String> {
    let mut w = TableWriter::new(Vec::new(), header)?;
    for r in rows {
        w.row(r.as_ref())?;
    }
    Ok(String::from_utf8(w.finish()?).expect("csv output is ASCII"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_shortest_round_trip() {
        let s = table_string(&["t", "E"], &[[0.0, 0.1], [1e-300, -2.5]]).unwrap();
        assert_eq!(s, "t,E\n0.0,0.1\n1e-300,-2.5\n");
    }

    #[test]
    fn file_output_matches_string() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![vec![1.0, 2.0, 3.0]];
        write_table(&p, &["a", "b", "c"], &rows).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), table_string(&["a", "b", "c"], &rows).unwrap());
    }
}
