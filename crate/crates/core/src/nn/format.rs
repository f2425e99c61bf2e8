//! `paxnn/1` parameter text format:
//!
//! ```text
//! format=paxnn/1
//! block <name> <rows> <cols>
//! <cols values>      (one line per row, 17 significant digits)
//! ```

use ndarray::Array2;

use crate::error::{Error, LineError, Result};

pub const HEADER: &str = "format=paxnn/1";

pub fn write_blocks(blocks: &[(String, &Array2<f64>)]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (name, data) in blocks {
        out.push_str(&format!("block {name} {} {}\n", data.nrows(), data.ncols()));
        for row in data.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn read_blocks(text: &str) -> Result<Vec<(String, Array2<f64>)>> {
    let fail = |line: usize, message: String| Error::Parse {
        path: "<paxnn>".into(),
        lines: vec![LineError { line, message }],
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(fail(n, format!("expected `{HEADER}`, found `{other}`"))),
        None => return Err(fail(1, "empty parameter file".into())),
    }
    let mut blocks = Vec::new();
    while let Some((n, line)) = lines.next() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let (name, rows, cols) = match parts.as_slice() {
            ["block", name, rows, cols] => (
                name.to_string(),
                rows.parse::<usize>()
                    .map_err(|_| fail(n, format!("bad row count `{rows}`")))?,
                cols.parse::<usize>()
                    .map_err(|_| fail(n, format!("bad column count `{cols}`")))?,
            ),
            _ => return Err(fail(n, format!("expected block header, found `{line}`"))),
        };
        let mut values = Vec::with_capacity(rows * cols);
        // A block with zero columns has no value lines.
        if cols > 0 {
            for _ in 0..rows {
                let (rn, row) = lines
                    .next()
                    .ok_or_else(|| fail(n, format!("block {name} truncated")))?;
                let before = values.len();
                for tok in row.split_whitespace() {
                    values.push(
                        tok.parse::<f64>()
                            .map_err(|_| fail(rn, format!("bad value `{tok}`")))?,
                    );
                }
                if values.len() - before != cols {
                    return Err(fail(rn, format!("expected {cols} values in block {name}")));
                }
            }
        }
        let data = Array2::from_shape_vec((rows, cols), values).expect("counted values");
        blocks.push((name, data));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(
            rows in 1usize..4, cols in 1usize..5,
            seed in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 20),
        ) {
            let data = Array2::from_shape_fn((rows, cols), |(r, c)| seed[r * cols + c]);
            let text = write_blocks(&[("w".into(), &data)]);
            let back = read_blocks(&text).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0].0, "w");
            for (a, b) in back[0].1.iter().zip(data.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        assert!(read_blocks("format=other\n").is_err());
        assert!(read_blocks("format=paxnn/1\nblock w 2 2\n1 2\n").is_err());
        assert!(read_blocks("format=paxnn/1\nblock w 1 2\n1 2 3\n").is_err());
        let empty = read_blocks("format=paxnn/1\nblock e 3 0\n").unwrap();
        assert_eq!(empty[0].1.dim(), (3, 0));
    }
}
