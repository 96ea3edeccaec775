//! Shared CSV reader/writer configuration: comma delimiter, LF records,
//! quoting only where a field needs it.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub(crate) fn writer(path: &Path) -> io::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path)?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .has_headers(false)
        .from_writer(BufWriter::new(file)))
}

pub(crate) fn finish<W: Write>(mut w: csv::Writer<W>) -> io::Result<()> {
    w.flush()?;
    w.into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?
        .flush()
}

/// Reader over `path` that treats every line (header included) as a record,
/// optionally skipping `#` comment lines.
pub(crate) fn reader(path: &Path, comments: bool) -> io::Result<csv::Reader<File>> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(comments.then_some(b'#'))
        .from_reader(file))
}

pub(crate) fn csv_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}")),
    }
}

/// 1-based line number of a record, falling back to the record counter.
pub(crate) fn line_of(record: &csv::StringRecord, fallback: usize) -> u64 {
    record
        .position()
        .map(|p| p.line())
        .unwrap_or(fallback as u64)
}
