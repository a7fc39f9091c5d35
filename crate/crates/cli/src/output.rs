//! CSV time-series files.

use pantilt_core::simworld::CSV_COLUMNS;
use pantilt_core::LogRow;
use std::io::{Read, Write};

/// Writes the header and one record per row. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(out: W, rows: &[LogRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {headers:?}"),
        )));
    }
    r.deserialize().collect()
}
