//! Bit-exact network checkpoints.
//!
//! A checkpoint is a header line followed by one entry per named parameter
//! vector. Each entry is a single-line JSON manifest
//! `{"role", "spec", "flat_len"}` immediately followed by `flat_len`
//! little-endian `f64` values. JSON lines never contain raw newlines, so the
//! framing is unambiguous; the payload is raw bits, so round-trips are exact
//! for every value including NaN payloads.
//!
//! The reader treats input as untrusted: line lengths, entry counts, and
//! payload lengths are capped, and every malformed input path returns an
//! error instead of panicking (see the `checkpoint_load` fuzz target).

use super::mlp::MlpSpec;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

/// Format marker checked on load.
pub const CHECKPOINT_FORMAT: &str = "qdac-checkpoint-v1";

/// Hard caps applied while reading untrusted input.
const MAX_LINE_BYTES: usize = 1 << 22; // 4 MiB of JSON per line
const MAX_ENTRIES: usize = 256;
const MAX_FLAT_LEN: usize = 1 << 23; // 8M f64 = 64 MiB per entry

/// One named flat parameter vector. `spec` is present for MLPs and `None`
/// for raw vectors such as the temperature scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub role: String,
    pub spec: Option<MlpSpec>,
    pub values: Vec<f64>,
}

impl CheckpointEntry {
    pub fn mlp(role: &str, spec: MlpSpec, values: Vec<f64>) -> Self {
        CheckpointEntry {
            role: role.to_string(),
            spec: Some(spec),
            values,
        }
    }

    pub fn raw(role: &str, values: Vec<f64>) -> Self {
        CheckpointEntry {
            role: role.to_string(),
            spec: None,
            values,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint declares \"{got}\", expected \"{expected}\"")]
    FormatMismatch { expected: String, got: String },
    #[error("checkpoint exceeds size limits: {0}")]
    TooLarge(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    entry_count: usize,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct EntryManifest {
    role: String,
    spec: Option<MlpSpec>,
    flat_len: usize,
}

/// Serialize `entries` with an arbitrary JSON `meta` blob in the header.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    meta: &serde_json::Value,
    entries: &[CheckpointEntry],
) -> Result<(), CheckpointError> {
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        entry_count: entries.len(),
        meta: meta.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(to_io)?;
    w.write_all(b"\n")?;
    for entry in entries {
        if let Some(spec) = &entry.spec {
            if spec.param_count() != entry.values.len() {
                return Err(CheckpointError::Malformed(format!(
                    "entry \"{}\": {} values but spec wants {}",
                    entry.role,
                    entry.values.len(),
                    spec.param_count()
                )));
            }
        }
        let manifest = EntryManifest {
            role: entry.role.clone(),
            spec: entry.spec.clone(),
            flat_len: entry.values.len(),
        };
        serde_json::to_writer(&mut w, &manifest).map_err(to_io)?;
        w.write_all(b"\n")?;
        for v in &entry.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn to_io(e: serde_json::Error) -> CheckpointError {
    CheckpointError::Io(io::Error::other(e))
}

/// Read a line with a hard length cap; `Ok(None)` at clean EOF.
fn read_capped_line<R: BufRead>(r: &mut R) -> Result<Option<String>, CheckpointError> {
    let mut buf = Vec::new();
    loop {
        let chunk = r.fill_buf()?;
        if chunk.is_empty() {
            if buf.is_empty() {
                return Ok(None);
            }
            break; // EOF terminates the final line
        }
        match chunk.iter().position(|&b| b == b'\n') {
            Some(pos) => {
                buf.extend_from_slice(&chunk[..pos]);
                r.consume(pos + 1);
                break;
            }
            None => {
                buf.extend_from_slice(chunk);
                let n = chunk.len();
                r.consume(n);
            }
        }
        if buf.len() > MAX_LINE_BYTES {
            return Err(CheckpointError::TooLarge(format!(
                "manifest line exceeds {MAX_LINE_BYTES} bytes"
            )));
        }
    }
    if buf.len() > MAX_LINE_BYTES {
        return Err(CheckpointError::TooLarge(format!(
            "manifest line exceeds {MAX_LINE_BYTES} bytes"
        )));
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| CheckpointError::Malformed("manifest line is not UTF-8".into()))
}

/// Deserialize a checkpoint, returning the header's `meta` blob and the
/// entries in file order.
pub fn read_checkpoint<R: BufRead>(
    mut r: R,
) -> Result<(serde_json::Value, Vec<CheckpointEntry>), CheckpointError> {
    let header_line = read_capped_line(&mut r)?
        .ok_or_else(|| CheckpointError::Malformed("empty checkpoint".into()))?;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::FormatMismatch {
            expected: CHECKPOINT_FORMAT.to_string(),
            got: header.format,
        });
    }
    if header.entry_count > MAX_ENTRIES {
        return Err(CheckpointError::TooLarge(format!(
            "{} entries exceeds the {MAX_ENTRIES}-entry cap",
            header.entry_count
        )));
    }

    let mut entries = Vec::with_capacity(header.entry_count);
    for k in 0..header.entry_count {
        let line = read_capped_line(&mut r)?.ok_or_else(|| {
            CheckpointError::Malformed(format!(
                "eof before manifest of entry {k} of {}",
                header.entry_count
            ))
        })?;
        let manifest: EntryManifest = serde_json::from_str(&line)
            .map_err(|e| CheckpointError::Malformed(format!("entry {k} manifest: {e}")))?;
        if manifest.flat_len > MAX_FLAT_LEN {
            return Err(CheckpointError::TooLarge(format!(
                "entry \"{}\" declares {} values (cap {MAX_FLAT_LEN})",
                manifest.role, manifest.flat_len
            )));
        }
        if let Some(spec) = &manifest.spec {
            // Re-validate the deserialized spec before trusting param_count.
            MlpSpec::new(
                spec.layer_sizes.clone(),
                spec.hidden_activation,
                spec.output_activation,
            )
            .map_err(|e| CheckpointError::Malformed(format!("entry \"{}\": {e}", manifest.role)))?;
            if spec.param_count() != manifest.flat_len {
                return Err(CheckpointError::Malformed(format!(
                    "entry \"{}\": flat_len {} but spec wants {}",
                    manifest.role,
                    manifest.flat_len,
                    spec.param_count()
                )));
            }
        }
        let mut values = vec![0.0f64; manifest.flat_len];
        let mut bytes = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut bytes).map_err(|e| {
                if e.kind() == io::ErrorKind::UnexpectedEof {
                    CheckpointError::Malformed(format!(
                        "entry \"{}\": payload truncated",
                        manifest.role
                    ))
                } else {
                    CheckpointError::Io(e)
                }
            })?;
            *v = f64::from_le_bytes(bytes);
        }
        entries.push(CheckpointEntry {
            role: manifest.role,
            spec: manifest.spec,
            values,
        });
    }
    Ok((header.meta, entries))
}
