use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{CsrMatrix, Dataset};
use crate::error::{Error, Result};

/// Parses `<label> <idx>:<val> ...` lines with 1-based, strictly increasing indices.
///
/// Labels greater than zero map to `+1`, everything else (`-1`, `0`) to `-1`.
/// Blank lines and `#` comments are ignored. The feature dimension is the largest
/// index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut labels = Vec::new();
    let mut n_cols = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::MalformedLine {
            line_no,
            reason: format!("bad label `{label_tok}`"),
        })?;
        if !label.is_finite() {
            return Err(Error::MalformedLine {
                line_no,
                reason: format!("bad label `{label_tok}`"),
            });
        }
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for tok in tokens {
            let (a, b) = tok.split_once(':').ok_or_else(|| Error::MalformedLine {
                line_no,
                reason: format!("expected idx:val, got `{tok}`"),
            })?;
            let j: usize = a.parse().map_err(|_| Error::MalformedLine {
                line_no,
                reason: format!("bad index `{a}`"),
            })?;
            if j == 0 {
                return Err(Error::MalformedLine {
                    line_no,
                    reason: "indices are 1-based".into(),
                });
            }
            let v: f64 = b.parse().map_err(|_| Error::MalformedLine {
                line_no,
                reason: format!("bad value `{b}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedLine {
                    line_no,
                    reason: format!("non-finite value `{b}`"),
                });
            }
            if idx.last().is_some_and(|&prev| j - 1 <= prev) {
                return Err(Error::NonMonotonicIndex { line_no });
            }
            idx.push(j - 1);
            val.push(v);
        }
        n_cols = n_cols.max(idx.last().map_or(0, |&j| j + 1));
        rows.push((idx, val));
        labels.push(if label > 0.0 { 1 } else { -1 });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut features = CsrMatrix::empty(n_cols);
    for (idx, val) in &rows {
        features.push_row(idx, val);
    }
    Dataset::new(name, features, labels)
}

/// Loads a LIBSVM file, transparently decompressing `*.gz`.
pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm(BufReader::new(GzDecoder::new(file)), &name)
    } else {
        parse_libsvm(BufReader::new(file), &name)
    }
}

/// Writes `+1`/`-1` labels and 1-based `idx:val` pairs; zero entries are omitted.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for i in 0..ds.n_samples() {
        let label = if ds.labels[i] > 0 { "+1" } else { "-1" };
        write!(out, "{label}")?;
        let (idx, val) = ds.features.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_libsvm(s.as_bytes(), "t")
    }

    #[test]
    fn parses_sparse_line() {
        let ds = parse("+1 1:0.5 3:2\n").unwrap();
        assert_eq!(ds.labels, vec![1]);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.features.to_dense().row(0), &[0.5, 0.0, 2.0]);
    }

    #[test]
    fn rejects_decreasing_indices() {
        assert_eq!(parse("1 3:1 2:1\n"), Err(Error::NonMonotonicIndex { line_no: 1 }));
    }

    #[test]
    fn rejects_repeated_index() {
        assert_eq!(parse("1 2:1 2:1\n"), Err(Error::NonMonotonicIndex { line_no: 1 }));
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert_eq!(parse(""), Err(Error::EmptyDataset));
        assert_eq!(parse("\n# only a comment\n"), Err(Error::EmptyDataset));
    }

    #[test]
    fn malformed_tokens_report_line() {
        assert!(matches!(parse("1 1:1\n-1 x:2\n"), Err(Error::MalformedLine { line_no: 2, .. })));
        assert!(matches!(parse("abc 1:1\n"), Err(Error::MalformedLine { line_no: 1, .. })));
        assert!(matches!(parse("1 0:1\n"), Err(Error::MalformedLine { line_no: 1, .. })));
        assert!(matches!(parse("1 1-1\n"), Err(Error::MalformedLine { line_no: 1, .. })));
    }

    #[test]
    fn zero_one_labels_are_remapped() {
        let ds = parse("0 1:1\n1 1:2\n").unwrap();
        assert_eq!(ds.labels, vec![-1, 1]);
    }

    #[test]
    fn gzip_input_is_accepted() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = tempdir();
        let path = dir.join("d.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        enc.write_all(b"-1 2:1.5\n+1 1:1\n").unwrap();
        enc.finish().unwrap();
        let ds = load_libsvm(&path).unwrap();
        assert_eq!(ds.labels, vec![-1, 1]);
        assert_eq!(ds.n_features(), 2);
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("shine-libsvm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(
            rows in proptest::collection::vec(
                (any::<bool>(), proptest::collection::btree_map(0usize..40, -1e6f64..1e6, 1..8)),
                1..20,
            )
        ) {
            let n_cols = rows.iter().flat_map(|(_, m)| m.keys()).max().unwrap() + 1;
            let mut features = CsrMatrix::empty(n_cols);
            let mut labels = Vec::new();
            for (pos, m) in &rows {
                let (idx, val): (Vec<usize>, Vec<f64>) =
                    m.iter().filter(|(_, v)| **v != 0.0).map(|(&k, &v)| (k, v)).unzip();
                features.push_row(&idx, &val);
                labels.push(if *pos { 1 } else { -1 });
            }
            let ds = Dataset::new("t", features, labels).unwrap();
            let mut buf = Vec::new();
            write_libsvm(&ds, &mut buf).unwrap();
            let back = parse_libsvm(buf.as_slice(), "t").unwrap();
            prop_assert_eq!(&back.labels, &ds.labels);
            for i in 0..ds.n_samples() {
                prop_assert_eq!(back.features.row(i), ds.features.row(i));
            }
        }
    }
}
