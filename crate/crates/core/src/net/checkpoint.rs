//! Binary checkpoint format.
//!
//! ```text
//! msgsem-checkpoint
//! version 1
//! config <n>            followed by n bytes of TOML and a newline
//! tensors <count>
//! <name> <rows> <cols> <offset>    one line per tensor, offset in bytes
//! data <n>                         followed by n bytes of little-endian f64
//! ```

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams, NetError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "msgsem-checkpoint";

fn corrupt(msg: impl Into<String>) -> NetError {
    NetError::Corrupt(msg.into())
}

pub(crate) fn encode(params: &ModelParams, config: &ModelConfig) -> Vec<u8> {
    let config_text = toml::to_string(config).expect("config serializes");
    let mut out = format!(
        "{MAGIC}\nversion {CHECKPOINT_VERSION}\nconfig {}\n{config_text}\ntensors {}\n",
        config_text.len(),
        params.tensors().len()
    );
    let mut offset = 0;
    for (name, t) in params.tensors() {
        out.push_str(&format!("{name} {} {} {offset}\n", t.rows, t.cols));
        offset += t.data.len() * 8;
    }
    out.push_str(&format!("data {offset}\n"));
    let mut bytes = out.into_bytes();
    for (_, t) in params.tensors() {
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("truncated header"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8"))
    }

    fn keyed(&mut self, key: &str) -> Result<usize> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| corrupt(format!("expected `{key} <n>`, found {line:?}")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<(ModelParams, ModelConfig)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.line()? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.keyed("version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(NetError::Version {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config_len = r.keyed("config")?;
    let config_text = std::str::from_utf8(r.take(config_len)?).map_err(|_| corrupt("config is not UTF-8"))?;
    let config: ModelConfig = toml::from_str(config_text).map_err(|e| corrupt(format!("bad config: {e}")))?;
    config.validate().map_err(|e| corrupt(e.to_string()))?;
    if r.take(1)? != b"\n" {
        return Err(corrupt("missing newline after config"));
    }
    let mut params = ModelParams::zeros(&config);
    let count = r.keyed("tensors")?;
    if count != params.tensors().len() {
        return Err(corrupt(format!("expected {} tensors, found {count}", params.tensors().len())));
    }
    let mut layout = Vec::with_capacity(count);
    let mut expected_offset = 0;
    for (name, t) in params.tensors() {
        let line = r.line()?;
        let fields: Vec<&str> = line.split(' ').collect();
        let parsed = match fields.as_slice() {
            [n, rows, cols, off] if *n == name => rows
                .parse::<usize>()
                .ok()
                .zip(cols.parse::<usize>().ok())
                .zip(off.parse::<usize>().ok()),
            _ => None,
        };
        let ((rows, cols), off) = parsed.ok_or_else(|| corrupt(format!("bad tensor entry {line:?}")))?;
        if rows != t.rows || cols != t.cols || off != expected_offset {
            return Err(corrupt(format!("tensor {name} has unexpected shape or offset")));
        }
        layout.push(off);
        expected_offset += rows * cols * 8;
    }
    let data_len = r.keyed("data")?;
    if data_len != expected_offset {
        return Err(corrupt("data length does not match tensor shapes"));
    }
    let data = r.take(data_len)?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    for ((_, t), off) in params.tensors_mut().into_iter().zip(layout) {
        let raw = &data[off..off + t.data.len() * 8];
        for (v, chunk) in t.data.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok((params, config))
}

pub fn save_checkpoint(params: &ModelParams, config: &ModelConfig, path: &Path) -> Result<()> {
    if params.hidden_dim != config.hidden_dim
        || params.feature_dim != config.feature_dim
        || params.decoder_hidden != config.decoder_hidden
    {
        return Err(NetError::Dimension("parameters do not match config".into()));
    }
    fs::write(path, encode(params, config))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelConfig)> {
    decode(&fs::read(path)?)
}
