//! Plain-text datasets: one sample per row, label in the last column.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{arg, Error, Result};
use crate::geometry::{InputBatch, InputSpace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DataFormat {
    #[default]
    Csv,
    Tsv,
}

impl DataFormat {
    fn delimiter(self) -> u8 {
        match self {
            DataFormat::Csv => b',',
            DataFormat::Tsv => b'\t',
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "tsv" => Ok(DataFormat::Tsv),
            other => Err(Error::Parse(format!("unknown data format `{other}`; use csv or tsv"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: InputBatch,
    pub labels: Vec<f64>,
}

/// Parses rows of `d` features followed by a label. With `patch = Some(s)` every
/// `s`-patch is projected onto the unit sphere and the batch is tagged as a
/// multisphere; otherwise the features are kept as read.
pub fn read_dataset<R: Read>(r: R, format: DataFormat, patch: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(format.delimiter())
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(r);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut d = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let values = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if values.len() < 2 {
            return Err(Error::Parse(format!("row {row}: need at least one feature and a label")));
        }
        let width = *d.get_or_insert(values.len() - 1);
        if values.len() - 1 != width {
            return Err(Error::Parse(format!("row {row}: {} features, expected {width}", values.len() - 1)));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("row {row}: non-finite value {v}")));
        }
        features.extend_from_slice(&values[..width]);
        labels.push(values[width]);
    }
    let d = d.ok_or_else(|| Error::Parse("dataset has no rows".into()))?;
    let space = match patch {
        Some(s) => {
            if s < 2 || d % s != 0 {
                return arg(format!("patch size {s} does not divide the dimension {d}"));
            }
            for (j, p) in features.chunks_mut(s).enumerate() {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::Domain(format!(
                        "row {}: patch {} is zero and cannot be normalised",
                        j / (d / s) + 1,
                        j % (d / s)
                    )));
                }
                p.iter_mut().for_each(|v| *v /= norm);
            }
            InputSpace::Multisphere { s }
        }
        None => InputSpace::External,
    };
    Ok(Dataset { inputs: InputBatch::from_rows(features, d, space, 0)?, labels })
}

pub fn ingest_dataset(path: &Path, format: DataFormat, patch: Option<usize>) -> Result<Dataset> {
    read_dataset(File::open(path)?, format, patch)
}

/// Writes rows in shortest round-trip form, so reading back is lossless.
pub fn write_dataset<W: Write>(w: W, data: &Dataset, format: DataFormat) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).delimiter(format.delimiter()).from_writer(w);
    for (row, y) in data.inputs.rows().zip(&data.labels) {
        wtr.write_record(row.iter().chain(std::iter::once(y)).map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_inputs;
    use crate::Architecture;
    use proptest::prelude::*;

    #[test]
    fn three_rows_normalised() {
        let text = "3,4,0,2,1.5\n1,0,0,-1,2\n# comment\n0.6,0.8,5,0,-1\n";
        let ds = read_dataset(text.as_bytes(), DataFormat::Csv, Some(2)).unwrap();
        assert_eq!((ds.inputs.len(), ds.inputs.dim()), (3, 4));
        assert_eq!(ds.labels, vec![1.5, 2.0, -1.0]);
        assert_eq!(ds.inputs.row(0), &[0.6, 0.8, 0.0, 1.0]);
        assert_eq!(ds.inputs.space, InputSpace::Multisphere { s: 2 });
        let raw = read_dataset(text.as_bytes(), DataFormat::Csv, None).unwrap();
        assert_eq!(raw.inputs.row(0), &[3.0, 4.0, 0.0, 2.0]);
    }

    #[test]
    fn errors_name_the_row() {
        let e = read_dataset("1,2,3\n1,x,3\n".as_bytes(), DataFormat::Csv, None).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        let e = read_dataset("1,2,3\n1,2\n".as_bytes(), DataFormat::Csv, None).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(read_dataset("1,2,3,4\n".as_bytes(), DataFormat::Csv, Some(2)).is_err());
        assert!(read_dataset("".as_bytes(), DataFormat::Csv, None).is_err());
        assert!(read_dataset("0,0,1\n".as_bytes(), DataFormat::Csv, Some(2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_is_lossless(seed in any::<u64>(), n in 1usize..20, tsv in any::<bool>()) {
            let a = Architecture::ntk(&[2, 2], 1).unwrap();
            let inputs = sample_inputs(InputSpace::Gaussian, &a, n, seed).unwrap();
            let labels: Vec<f64> = inputs.rows().map(|r| r[0] * 1e-7 + r[1].exp()).collect();
            let ds = Dataset { inputs: InputBatch::from_rows(inputs.as_slice().to_vec(), 4, InputSpace::External, 0).unwrap(), labels };
            let format = if tsv { DataFormat::Tsv } else { DataFormat::Csv };
            let mut buf = Vec::new();
            write_dataset(&mut buf, &ds, format).unwrap();
            prop_assert_eq!(read_dataset(&buf[..], format, None).unwrap(), ds);
        }
    }
}
