//! Gram matrix serialisation.
//!
//! Binary layout, all little-endian:
//!
//! | field        | type                  |
//! |--------------|-----------------------|
//! | magic        | 8 bytes `HCNKGRAM`    |
//! | version      | u32 (= 1)             |
//! | rows, cols   | u64, u64              |
//! | arch         | u32 length + UTF-8    |
//! | space        | u32 length + UTF-8    |
//! | entries      | rows*cols f64, row-major |

use std::io::{Read, Write};

use super::GramMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HCNKGRAM";
const VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Parse(format!("header string is not UTF-8: {e}")))
}

pub fn write_gram_binary<W: Write>(g: &GramMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.rows() as u64).to_le_bytes())?;
    w.write_all(&(g.cols() as u64).to_le_bytes())?;
    write_str(&mut w, &g.arch)?;
    write_str(&mut w, &g.space)?;
    let mut buf = Vec::with_capacity(8 * g.cols());
    for i in 0..g.rows() {
        buf.clear();
        for v in g.row(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gram_binary<R: Read>(mut r: R) -> Result<GramMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a gram file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported gram format version {version}")));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let arch = read_str(&mut r)?;
    let space = read_str(&mut r)?;
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    GramMatrix::from_rows(rows, cols, data, arch, space)
}

/// Plain CSV, one matrix row per line, preceded by a `# arch=..,space=..` comment line.
pub fn write_gram_csv<W: Write>(g: &GramMatrix, mut w: W) -> Result<()> {
    writeln!(w, "# arch={} space={}", g.arch, g.space)?;
    let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..g.rows() {
        cw.write_record(g.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    cw.flush()?;
    Ok(())
}

pub fn read_gram_csv<R: Read>(r: R) -> Result<GramMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(r);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse(format!(
                "row {} has {} entries, expected {}",
                line + 1,
                rec.len(),
                cols.unwrap()
            )));
        }
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?);
        }
        rows += 1;
    }
    GramMatrix::from_rows(rows, cols.unwrap_or(0), data, String::new(), String::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GramMatrix {
        let data = vec![1.0, 0.25, -1.0 / 3.0, 0.25, 2.0, 1e-300, -1.0 / 3.0, 1e-300, 7.5];
        GramMatrix::from_rows(3, 3, data, "ntk:2x2".into(), "multisphere2".into()).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let g = sample();
        let mut buf = Vec::new();
        write_gram_binary(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 16 + 4 + 7 + 4 + 12 + 72);
        assert_eq!(read_gram_binary(&buf[..]).unwrap(), g);
        buf[0] = b'X';
        assert!(read_gram_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = sample();
        let mut buf = Vec::new();
        write_gram_csv(&g, &mut buf).unwrap();
        let back = read_gram_csv(&buf[..]).unwrap();
        assert_eq!(back.as_slice(), g.as_slice());
        assert!(read_gram_csv(&b"1,2\n3\n"[..]).is_err());
    }
}
