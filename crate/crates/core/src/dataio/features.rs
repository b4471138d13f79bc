//! `SDCF` feature files and the CSV fallback.
//!
//! Layout: `"SDCF"`, version `u32 = 1`, `n: u32`, `d: u32`, `flags: u32`,
//! then `n·d` `f32` values row-major. With `flags & 1` labels follow: `n`
//! `u32` class ids, or `n` `u64` bitmasks when `flags & 2` is also set.

use std::path::Path;

use super::bytes::{dim_u32, put_u32, read_file, write_file, ByteReader};
use super::{FeatureMatrix, Labels, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"SDCF";

const FLAG_LABELS: u32 = 1;
const FLAG_MULTI: u32 = 2;

#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureReadOptions {
    /// For CSV input: treat the last column as an integer class label.
    pub csv_label_column: bool,
}

pub fn encode_features<T: Scalar>(fm: &FeatureMatrix<T>) -> Result<Vec<u8>> {
    let (n, d) = fm.x.shape();
    let mut flags = 0;
    match &fm.labels {
        Some(Labels::Single(_)) => flags |= FLAG_LABELS,
        Some(Labels::Multi(_)) => flags |= FLAG_LABELS | FLAG_MULTI,
        None => {}
    }
    let mut out = Vec::with_capacity(20 + n * d * 4 + n * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim_u32(n, "n")?);
    put_u32(&mut out, dim_u32(d, "d")?);
    put_u32(&mut out, flags);
    for &v in fm.x.as_slice() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    match &fm.labels {
        Some(Labels::Single(l)) => l.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Some(Labels::Multi(l)) => l.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        None => {}
    }
    Ok(out)
}

pub fn decode_features<T: Scalar>(buf: &[u8]) -> Result<FeatureMatrix<T>> {
    let mut r = ByteReader::new(buf);
    r.magic(FEATURE_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let n = r.u32("n")? as usize;
    let d = r.u32("d")? as usize;
    let flags_at = r.offset();
    let flags = r.u32("flags")?;
    if flags & !(FLAG_LABELS | FLAG_MULTI) != 0 || flags == FLAG_MULTI {
        return Err(Error::Format {
            offset: flags_at,
            msg: format!("invalid flags {flags:#x}"),
        });
    }
    let count = n
        .checked_mul(d)
        .ok_or_else(|| r.fail("n·d overflows"))?;
    let values = r.f32s(count, "feature payload")?;
    let labels = if flags & FLAG_LABELS == 0 {
        None
    } else if flags & FLAG_MULTI != 0 {
        Some(Labels::Multi(r.u64s(n, "multi-label bitmasks")?))
    } else {
        Some(Labels::Single(r.u32s(n, "labels")?))
    };
    r.finish()?;
    let x = Matrix::from_vec(n, d, values.into_iter().map(|v| T::lit(v as f64)).collect())?;
    FeatureMatrix::new(x, labels)
}

pub fn write_features<T: Scalar>(path: impl AsRef<Path>, fm: &FeatureMatrix<T>) -> Result<()> {
    write_file(path.as_ref(), &encode_features(fm)?)
}

/// Reads features; `.csv` files go through the CSV reader, anything else is `SDCF`.
pub fn read_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<T>> {
    read_features_with(path, FeatureReadOptions::default())
}

pub fn read_features_with<T: Scalar>(
    path: impl AsRef<Path>,
    opts: FeatureReadOptions,
) -> Result<FeatureMatrix<T>> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_features_csv(path, opts.csv_label_column)
    } else {
        decode_features(&read_file(path)?)
    }
}

/// Headerless numeric CSV. Values are rounded through `f32` so a CSV and its
/// `SDCF` twin load identically.
pub fn read_features_csv<T: Scalar>(
    path: impl AsRef<Path>,
    label_column: bool,
) -> Result<FeatureMatrix<T>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(format!("line {}: {e}", line + 1)))?;
        let fields: Vec<&str> = rec.iter().collect();
        let n_feat = fields.len() - usize::from(label_column);
        if n_feat == 0 {
            return Err(Error::Csv(format!("line {}: no feature columns", line + 1)));
        }
        match width {
            None => width = Some(n_feat),
            Some(w) if w != n_feat => {
                return Err(Error::Csv(format!(
                    "line {}: {n_feat} feature columns, expected {w}",
                    line + 1
                )))
            }
            _ => {}
        }
        for (col, f) in fields[..n_feat].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::Csv(format!("line {}, column {}: not a number: {f:?}", line + 1, col + 1))
            })?;
            data.push(T::lit(v as f32 as f64));
        }
        if label_column {
            let f = fields[n_feat];
            labels.push(f.parse::<u32>().map_err(|_| {
                Error::Csv(format!("line {}: label {f:?} is not a nonnegative integer", line + 1))
            })?);
        }
    }
    let d = width.unwrap_or(0);
    let n = data.len().checked_div(d).unwrap_or(0);
    let x = Matrix::from_vec(n, d, data)?;
    FeatureMatrix::new(x, label_column.then_some(Labels::Single(labels)))
}

pub fn write_features_csv<T: Scalar>(path: impl AsRef<Path>, fm: &FeatureMatrix<T>) -> Result<()> {
    let path = path.as_ref();
    let single = match &fm.labels {
        Some(Labels::Single(l)) => Some(l),
        Some(Labels::Multi(_)) => {
            return Err(Error::Csv("multi-label sets cannot be written as CSV".into()))
        }
        None => None,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    for (i, row) in fm.x.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| (v.as_f64() as f32).to_string()).collect();
        if let Some(l) = single {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureMatrix<f64> {
        let x = Matrix::from_rows(&[[0.5, -1.25, 3.0], [1e-3, 0.0, -7.5]]).unwrap();
        FeatureMatrix::new(x, Some(Labels::Single(vec![3, 9]))).unwrap()
    }

    #[test]
    fn roundtrip_binary() {
        let fm = sample();
        let bytes = encode_features(&fm).unwrap();
        assert_eq!(&bytes[..4], b"SDCF");
        assert_eq!(bytes.len(), 20 + 2 * 3 * 4 + 2 * 4);
        let back: FeatureMatrix<f64> = decode_features(&bytes).unwrap();
        assert_eq!(back.labels, fm.labels);
        for (a, b) in back.x.as_slice().iter().zip(fm.x.as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }

        let multi = FeatureMatrix::new(fm.x.clone(), Some(Labels::Multi(vec![0b101, 1 << 63]))).unwrap();
        let back: FeatureMatrix<f64> = decode_features(&encode_features(&multi).unwrap()).unwrap();
        assert_eq!(back.labels, multi.labels);
    }

    #[test]
    fn truncation_reports_lengths() {
        let bytes = encode_features(&FeatureMatrix::unlabeled(sample().x)).unwrap();
        let err = decode_features::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::Format { offset, msg } => {
                assert_eq!(offset, 20);
                assert!(msg.contains("expected 24 bytes, found 21"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_trailing_and_bad_header() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes.push(0);
        assert!(matches!(decode_features::<f64>(&bytes), Err(Error::Format { .. })));
        let mut bad = encode_features(&sample()).unwrap();
        bad[0] = b'X';
        assert!(matches!(decode_features::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
        let mut ver = encode_features(&sample()).unwrap();
        ver[4] = 2;
        assert!(matches!(decode_features::<f64>(&ver), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn csv_matches_binary_twin() {
        let dir = tempfile::tempdir().unwrap();
        let fm = sample();
        let csv_path = dir.path().join("f.csv");
        let bin_path = dir.path().join("f.sdcf");
        write_features_csv(&csv_path, &fm).unwrap();
        write_features(&bin_path, &fm).unwrap();
        let opts = FeatureReadOptions { csv_label_column: true };
        let a: FeatureMatrix<f64> = read_features_with(&csv_path, opts).unwrap();
        let b: FeatureMatrix<f64> = read_features(&bin_path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_features_csv::<f64>(&p, false), Err(Error::Csv(_))));
        std::fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(read_features_csv::<f64>(&p, false), Err(Error::Csv(_))));
    }

    proptest! {
        #[test]
        fn fuzzed_input_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
            let _ = decode_features::<f64>(&bytes);
        }

        #[test]
        fn fuzzed_header_never_panics(n in any::<u32>(), d in any::<u32>(), flags in any::<u32>(), tail in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut bytes = b"SDCF".to_vec();
            for v in [1, n, d, flags] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.extend_from_slice(&tail);
            let _ = decode_features::<f64>(&bytes);
        }

        #[test]
        fn binary_roundtrip(n in 0usize..6, d in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_fn(n, d, |_, _| (rng.random::<f32>() * 100.0 - 50.0) as f64);
            let labels = Labels::Single((0..n).map(|_| rng.random()).collect());
            let fm = FeatureMatrix::new(x, Some(labels)).unwrap();
            let bytes = encode_features(&fm).unwrap();
            let back: FeatureMatrix<f64> = decode_features(&bytes).unwrap();
            prop_assert_eq!(&back, &fm);
            prop_assert_eq!(encode_features(&back).unwrap(), bytes);
        }
    }
}
