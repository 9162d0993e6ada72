//! File formats: TSV edge lists, MatrixMarket coordinate matrices, plain
//! PGM (P2) images, and CSV append helpers for stats output.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::scalar::{real, Real};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
}

fn malformed(file: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Sparse matrix in coordinate form; `entries` are `(row, col, value)`.
#[derive(Debug, Clone)]
pub struct CooMatrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, F)>,
}

impl<F: Real> CooMatrix<F> {
    pub fn dense(&self) -> Vec<Vec<F>> {
        let mut m = vec![vec![F::zero(); self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            m[r][c] = m[r][c] + v;
        }
        m
    }
}

/// TSV edge list: `src<TAB>dst<TAB>weight`, one edge per line, `#`
/// comments allowed. Vertex ids are implied dense.
pub fn read_tsv_edges(path: &Path) -> Result<Vec<(u32, u32, f64)>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let src: u32 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| malformed(path, lineno + 1, "expected source vertex id"))?;
        let dst: u32 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| malformed(path, lineno + 1, "expected target vertex id"))?;
        let weight: f64 = match parts.next() {
            Some(t) => t
                .parse()
                .map_err(|_| malformed(path, lineno + 1, "bad weight"))?,
            None => 1.0,
        };
        edges.push((src, dst, weight));
    }
    Ok(edges)
}

pub fn write_tsv<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<(), FormatError> {
    let mut out = String::new();
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// MatrixMarket coordinate format, `real` field, `general` or `symmetric`
/// symmetry. Symmetric input is mirrored across the diagonal.
pub fn read_matrix_market(path: &Path) -> Result<CooMatrix<f64>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?;
    let header_tokens: Vec<&str> = header.split_whitespace().collect();
    if header_tokens.len() < 4
        || !header_tokens[0].starts_with("%%MatrixMarket")
        || header_tokens[1] != "matrix"
        || header_tokens[2] != "coordinate"
    {
        return Err(malformed(path, 1, "expected `%%MatrixMarket matrix coordinate ...`"));
    }
    let symmetric = header_tokens.last() == Some(&"symmetric");

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    let mut stored = 0usize;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match dims {
            None => {
                if tokens.len() != 3 {
                    return Err(malformed(path, lineno + 1, "expected `rows cols nnz`"));
                }
                let parse = |t: &str| -> Result<usize, FormatError> {
                    t.parse()
                        .map_err(|_| malformed(path, lineno + 1, "bad size header"))
                };
                dims = Some((parse(tokens[0])?, parse(tokens[1])?, parse(tokens[2])?));
            }
            Some((rows, cols, _)) => {
                if tokens.len() < 3 {
                    return Err(malformed(path, lineno + 1, "expected `row col value`"));
                }
                let r: usize = tokens[0]
                    .parse()
                    .map_err(|_| malformed(path, lineno + 1, "bad row index"))?;
                let c: usize = tokens[1]
                    .parse()
                    .map_err(|_| malformed(path, lineno + 1, "bad col index"))?;
                let v: f64 = tokens[2]
                    .parse()
                    .map_err(|_| malformed(path, lineno + 1, "bad value"))?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(malformed(path, lineno + 1, "index out of bounds"));
                }
                stored += 1;
                entries.push((r - 1, c - 1, v));
                if symmetric && r != c {
                    entries.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = dims.ok_or_else(|| malformed(path, 1, "missing size header"))?;
    if stored != nnz {
        return Err(malformed(
            path,
            1,
            format!("entry count {stored} does not match header nnz {nnz}"),
        ));
    }
    Ok(CooMatrix {
        rows,
        cols,
        entries,
    })
}

pub fn write_matrix_market<F: Real>(path: &Path, m: &CooMatrix<F>) -> Result<(), FormatError> {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", m.rows, m.cols, m.entries.len()));
    for &(r, c, v) in &m.entries {
        out.push_str(&format!("{} {} {}\n", r + 1, c + 1, v));
    }
    fs::write(path, out)?;
    Ok(())
}

/// One value per line, `#` comments allowed.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Tolerate `id<TAB>value` rows as well as bare values.
        let token = line.split_whitespace().last().unwrap();
        values.push(
            token
                .parse()
                .map_err(|_| malformed(path, lineno + 1, "bad number"))?,
        );
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major pixels.
    pub pixels: Vec<u16>,
}

impl PgmImage {
    /// Pixels rescaled to label units `[0, k-1]`.
    pub fn to_label_units<F: Real>(&self, k: usize) -> Vec<F> {
        let scale = (k as f64 - 1.0) / f64::from(self.maxval.max(1));
        self.pixels
            .iter()
            .map(|&p| real::<F>(f64::from(p) * scale))
            .collect()
    }
}

/// Plain (ASCII, P2) PGM reader.
pub fn read_pgm(path: &Path) -> Result<PgmImage, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>());
    let magic = tokens
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?;
    if magic != "P2" {
        return Err(malformed(path, 1, format!("expected P2 magic, got `{magic}`")));
    }
    let mut next_usize = |what: &str| -> Result<usize, FormatError> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| malformed(path, 0, format!("missing or bad {what}")))
    };
    let width = next_usize("width")?;
    let height = next_usize("height")?;
    let maxval = next_usize("maxval")? as u16;
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let p = next_usize("pixel")? as u16;
        if p > maxval {
            return Err(malformed(path, 0, "pixel exceeds maxval"));
        }
        pixels.push(p);
    }
    Ok(PgmImage {
        width,
        height,
        maxval,
        pixels,
    })
}

pub fn write_pgm(path: &Path, image: &PgmImage) -> Result<(), FormatError> {
    assert_eq!(image.pixels.len(), image.width * image.height);
    let mut out = format!("P2\n{} {}\n{}\n", image.width, image.height, image.maxval);
    for row in image.pixels.chunks(image.width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Appends `row` to a CSV file, writing `header` first when the file does
/// not exist yet.
pub fn append_csv_row(path: &Path, header: &str, row: &str) -> Result<(), FormatError> {
    let existed = path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if !existed {
        writeln!(file, "{header}")?;
    }
    writeln!(file, "{row}")?;
    Ok(())
}
