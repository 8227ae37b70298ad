use std::fmt::Write as _;
use std::path::Path;

use crate::binio::{self, Cursor};
use crate::ctc::CtcTarget;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &str = "DFSMN-SAN-FEATS 1";

/// Feature container: magic line, then per sequence a `rows cols` line and a
/// row-major little-endian f32 payload. Values are rounded to f32 on write.
pub fn write_features(path: &Path, features: &[Matrix]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC.as_bytes());
    out.push(b'\n');
    for x in features {
        out.extend_from_slice(format!("{} {}\n", x.rows(), x.cols()).as_bytes());
        binio::push_f32s(&mut out, x.data());
    }
    binio::write_file(path, &out)
}

pub fn read_features(path: &Path) -> Result<Vec<Matrix>> {
    let bytes = binio::read_file(path)?;
    let mut cur = Cursor::new(path, &bytes);
    let magic = cur.line("magic")?;
    if magic != FEATURE_MAGIC {
        return Err(cur.error("magic", format!("expected `{FEATURE_MAGIC}`, found `{magic}`")));
    }
    let mut out = Vec::new();
    while !cur.at_end() {
        let field = format!("record[{}].header", out.len());
        let line = cur.line(&field)?;
        let dims = binio::parse_counts(&cur, line, &field, 2)?;
        let data = cur.f32s(dims[0] * dims[1], &format!("record[{}].payload", out.len()))?;
        out.push(Matrix::from_vec(dims[0], dims[1], data)?);
    }
    Ok(out)
}

/// One space-separated label sequence per line.
pub fn write_labels(path: &Path, targets: &[CtcTarget]) -> Result<()> {
    let mut text = String::new();
    for t in targets {
        let line: Vec<String> = t.labels().iter().map(usize::to_string).collect();
        writeln!(text, "{}", line.join(" ")).expect("write to String");
    }
    binio::write_file(path, text.as_bytes())
}

pub fn read_labels(path: &Path, alphabet_size: usize) -> Result<Vec<CtcTarget>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let labels = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| {
                        Error::format(path, format!("line[{}]", i + 1), format!("`{tok}` is not a label index"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            CtcTarget::new(labels, alphabet_size)
        })
        .collect()
}
