//! Vector file I/O: the packed binary format and headerless CSV, with
//! extension-based dispatch.
//!
//! A packed binary file is a sequence of records, each a `u32` little-endian
//! dimension followed by that many `f32` little-endian components. Every
//! record must carry the same dimension and no partial record may trail the
//! file. Row ids are implicit: the i-th record becomes row id `i`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::matrix::FeatureMatrix;
use crate::{Error, Result};

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a half-written file.
pub(crate) fn atomic_write(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads as many bytes as available into `buf`, returning how many were
/// filled; short only at end of input.
fn read_fill(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// Reads a packed binary vector file.
pub fn read_packed(mut r: impl Read) -> Result<FeatureMatrix> {
    let mut offset: u64 = 0;
    let mut dim: Option<usize> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;

    loop {
        let header_at = offset;
        let mut header = [0u8; 4];
        let got = read_fill(&mut r, &mut header)?;
        if got == 0 {
            break;
        }
        if got < 4 {
            return Err(Error::Format {
                context: "vector file",
                offset: header_at,
                detail: format!("truncated dimension header ({got} of 4 bytes)"),
            });
        }
        offset += 4;
        let d = u32::from_le_bytes(header) as usize;
        if d == 0 {
            return Err(Error::Format {
                context: "vector file",
                offset: header_at,
                detail: "record claims dimension 0".into(),
            });
        }
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format {
                    context: "vector file",
                    offset: header_at,
                    detail: format!("record dimension {d} conflicts with {expected}"),
                });
            }
            Some(_) => {}
        }

        let body_at = offset;
        let mut body = vec![0u8; d * 4];
        let got = read_fill(&mut r, &mut body)?;
        if got < body.len() {
            return Err(Error::Format {
                context: "vector file",
                offset: body_at,
                detail: format!(
                    "record of dimension {d} truncated (expected {} component bytes, found {got})",
                    body.len()
                ),
            });
        }
        offset += body.len() as u64;
        for (i, chunk) in body.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::Format {
                    context: "vector file",
                    offset: body_at + 4 * i as u64,
                    detail: format!("non-finite component {v}"),
                });
            }
            values.push(v as f64);
        }
        rows += 1;
    }

    let dim = dim.ok_or(Error::EmptyData)?;
    let ids = (0..rows as u64).collect();
    FeatureMatrix::new(dim, values, ids)
}

/// Writes `m` in the packed binary format, demoting components to `f32`.
pub fn write_packed(mut w: impl Write, m: &FeatureMatrix) -> Result<()> {
    for row in m.rows() {
        w.write_u32::<LittleEndian>(m.dim() as u32)?;
        for &v in row {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

/// Reads a headerless CSV of float rows; every line must have the same
/// number of fields. Offsets in errors are 1-based line numbers.
pub fn read_csv_vectors(r: impl Read) -> Result<FeatureMatrix> {
    let reader = BufReader::new(r);
    let mut dim: Option<usize> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match dim {
            None => dim = Some(fields.len()),
            Some(expected) if expected != fields.len() => {
                return Err(Error::Format {
                    context: "csv vector file",
                    offset: lineno,
                    detail: format!("expected {expected} fields, got {}", fields.len()),
                });
            }
            Some(_) => {}
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                context: "csv vector file",
                offset: lineno,
                detail: format!("bad component {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    context: "csv vector file",
                    offset: lineno,
                    detail: format!("non-finite component {v}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let dim = dim.ok_or(Error::EmptyData)?;
    let ids = (0..rows as u64).collect();
    FeatureMatrix::new(dim, values, ids)
}

/// Writes `m` as headerless CSV with LF line endings.
pub fn write_csv_vectors(mut w: impl Write, m: &FeatureMatrix) -> Result<()> {
    for row in m.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                write!(w, ",")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads vectors from `path`: CSV when the extension is `.csv`, packed
/// binary otherwise.
pub fn read_vectors_path(path: &Path) -> Result<FeatureMatrix> {
    let file = File::open(path)?;
    if is_csv(path) {
        read_csv_vectors(file)
    } else {
        read_packed(BufReader::new(file))
    }
}

/// Writes vectors to `path` atomically, picking the format by extension as
/// [`read_vectors_path`] does.
pub fn write_vectors_path(path: &Path, m: &FeatureMatrix) -> Result<()> {
    atomic_write(path, |w| {
        if is_csv(path) {
            write_csv_vectors(w, m)
        } else {
            write_packed(w, m)
        }
    })
}
