//! Model checkpoints (bit-exact little-endian binary) and permutation files
//! (JSON array-of-arrays).

use crate::error::{CliError, Result};
use llfc::linalg::Matrix;
use llfc::nn::ModelParams;
use llfc::permutation::LayerPermutation;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"LLFC";
const VERSION: u32 = 1;

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let l = params.layers();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(l as u32).to_le_bytes());
    buf.extend_from_slice(&(params.weights[0].cols() as u32).to_le_bytes());
    for w in &params.weights {
        buf.extend_from_slice(&(w.rows() as u32).to_le_bytes());
    }
    for layer in 0..l {
        for v in params.weights[layer].data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &params.biases[layer] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::report::atomic_write(path, &buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(format_err(
                self.path,
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let buf = std::fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err(path, 0, "bad magic, expected \"LLFC\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(
            path,
            4,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let l = r.u32("layer count")? as usize;
    if l == 0 || l > 1024 {
        return Err(format_err(path, 8, format!("implausible layer count {l}")));
    }
    let mut dims = Vec::with_capacity(l + 1);
    dims.push(r.u32("input dim")? as usize);
    for i in 0..l {
        dims.push(r.u32(&format!("dim {}", i + 1))? as usize);
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(format_err(path, 12, "zero layer width"));
    }
    let mut weights = Vec::with_capacity(l);
    let mut biases = Vec::with_capacity(l);
    for layer in 0..l {
        let (rows, cols) = (dims[layer + 1], dims[layer]);
        let offset = r.pos as u64;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64("weight")?);
        }
        let w = Matrix::new(rows, cols, data)
            .map_err(|e| format_err(path, offset, e.to_string()))?;
        let mut b = Vec::with_capacity(rows);
        for _ in 0..rows {
            b.push(r.f64("bias")?);
        }
        weights.push(w);
        biases.push(b);
    }
    if r.pos != buf.len() {
        return Err(format_err(
            path,
            r.pos as u64,
            format!("{} trailing bytes", buf.len() - r.pos),
        ));
    }
    Ok(ModelParams { weights, biases })
}

pub fn save_permutation(pi: &LayerPermutation, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    serde_json::to_writer(&mut buf, &pi.perms)
        .map_err(|e| CliError::Config(e.to_string()))?;
    buf.write_all(b"\n")?;
    crate::report::atomic_write(path, &buf)
}

#[allow(dead_code)] // part of the file-format API, exercised by tests
pub fn load_permutation(path: &Path) -> Result<LayerPermutation> {
    let raw = std::fs::read(path)?;
    let perms: Vec<Vec<usize>> = serde_json::from_slice(&raw)
        .map_err(|e| format_err(path, e.column() as u64, e.to_string()))?;
    LayerPermutation::new(perms).map_err(|e| format_err(path, 0, e.to_string()))
}
