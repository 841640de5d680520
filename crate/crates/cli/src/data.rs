//! Dataset IO: tab-separated interaction logs and the CRNF binary matrix
//! container used for modality feature tables and model checkpoints.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use crane_core::DenseMatrix;

/// Interactions with string IDs mapped to dense indices in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Interactions {
    pub pairs: Vec<(u32, u32)>,
    /// Dense user index -> original user ID.
    pub user_ids: Vec<String>,
    /// Dense item index -> original item ID.
    pub item_ids: Vec<String>,
}

impl Interactions {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }
}

/// Parse a TSV interaction log: `user<TAB>item<TAB>rating[<TAB>timestamp]`
/// per line, LF or CRLF endings. IDs are arbitrary strings assigned dense
/// indices by first appearance. Malformed lines fail with their line number.
pub fn parse_interactions(text: &str) -> Result<Interactions> {
    let mut users: HashMap<String, u32> = HashMap::new();
    let mut items: HashMap<String, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            bail!(
                "line {}: expected 3 or 4 tab-separated fields, found {}",
                lineno + 1,
                fields.len()
            );
        }
        let (user, item, rating) = (fields[0], fields[1], fields[2]);
        if user.is_empty() || item.is_empty() {
            bail!("line {}: empty user or item ID", lineno + 1);
        }
        let r: f64 = rating
            .parse()
            .with_context(|| format!("line {}: bad rating '{rating}'", lineno + 1))?;
        if !r.is_finite() {
            bail!("line {}: non-finite rating", lineno + 1);
        }
        if let Some(ts) = fields.get(3) {
            let _: i64 = ts
                .parse()
                .with_context(|| format!("line {}: bad timestamp '{ts}'", lineno + 1))?;
        }
        let next_u = users.len() as u32;
        let u = *users.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            next_u
        });
        let next_i = items.len() as u32;
        let i = *items.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            next_i
        });
        pairs.push((u, i));
    }
    Ok(Interactions {
        pairs,
        user_ids,
        item_ids,
    })
}

/// Load and parse a TSV interaction log from disk.
pub fn load_interactions(path: &Path) -> Result<Interactions> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading interactions from {}", path.display()))?;
    parse_interactions(&text).with_context(|| format!("parsing {}", path.display()))
}

const CRNF_MAGIC: &[u8; 4] = b"CRNF";
const CRNF_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;
/// Fixed header: magic + version + n_rows + n_cols + dtype.
const CRNF_HEADER: usize = 4 + 4 + 8 + 8 + 1;

/// Element type stored in a CRNF file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnfDtype {
    F32,
    F64,
}

/// Encode a matrix as CRNF bytes: magic `CRNF`, version `u32` = 1, `n_rows`
/// and `n_cols` as `u64`, a dtype byte (0 = f32, 1 = f64), then the values
/// row-major in little-endian order.
pub fn encode_crnf(m: &DenseMatrix, dtype: CrnfDtype) -> Vec<u8> {
    let elem = match dtype {
        CrnfDtype::F32 => 4,
        CrnfDtype::F64 => 8,
    };
    let mut out = Vec::with_capacity(CRNF_HEADER + m.values().len() * elem);
    out.extend_from_slice(CRNF_MAGIC);
    out.extend_from_slice(&CRNF_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n_rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.n_cols() as u64).to_le_bytes());
    match dtype {
        CrnfDtype::F32 => {
            out.push(DTYPE_F32);
            for &v in m.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        CrnfDtype::F64 => {
            out.push(DTYPE_F64);
            for &v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Decode CRNF bytes; every header field is validated and named on error.
pub fn decode_crnf(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < CRNF_HEADER {
        bail!(
            "truncated header: need {CRNF_HEADER} bytes, found {}",
            bytes.len()
        );
    }
    if &bytes[0..4] != CRNF_MAGIC {
        bail!("bad magic: expected 'CRNF', found {:?}", &bytes[0..4]);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CRNF_VERSION {
        bail!("unsupported version {version}, expected {CRNF_VERSION}");
    }
    let n_rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n_cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let dtype = bytes[24];
    let elem = match dtype {
        DTYPE_F32 => 4usize,
        DTYPE_F64 => 8,
        _ => bail!("bad dtype byte {dtype}, expected 0 (f32) or 1 (f64)"),
    };
    let count = (n_rows as usize)
        .checked_mul(n_cols as usize)
        .context("n_rows * n_cols overflows")?;
    let expected = CRNF_HEADER + count * elem;
    if bytes.len() != expected {
        bail!(
            "payload length mismatch: {n_rows}x{n_cols} dtype {dtype} needs {expected} bytes, found {}",
            bytes.len()
        );
    }
    let mut values = Vec::with_capacity(count);
    let body = &bytes[CRNF_HEADER..];
    match dtype {
        DTYPE_F32 => {
            for c in body.chunks_exact(4) {
                values.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
            }
        }
        _ => {
            for c in body.chunks_exact(8) {
                values.push(f64::from_le_bytes(c.try_into().unwrap()));
            }
        }
    }
    DenseMatrix::from_vec(n_rows as usize, n_cols as usize, values)
        .map_err(|e| anyhow::anyhow!("{e}"))
}

/// Write a matrix to disk in CRNF form.
pub fn save_crnf(path: &Path, m: &DenseMatrix, dtype: CrnfDtype) -> Result<()> {
    fs::write(path, encode_crnf(m, dtype))
        .with_context(|| format!("writing {}", path.display()))
}

/// Read a CRNF matrix from disk.
pub fn load_crnf(path: &Path) -> Result<DenseMatrix> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_crnf(&bytes).with_context(|| format!("decoding {}", path.display()))
}
