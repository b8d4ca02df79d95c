//! Model snapshots: a versioned JSON document wrapping any learner.
//!
//! Integers round-trip exactly and reals are written with shortest
//! round-trip formatting, so a reloaded model is bit-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::AnyLearner;

pub const SNAPSHOT_FORMAT: &str = "openworld-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<L> {
    format: String,
    version: u32,
    learner: L,
}

pub fn to_json(learner: &AnyLearner) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: SNAPSHOT_FORMAT.to_string(),
        version: SNAPSHOT_VERSION,
        learner,
    })?)
}

pub fn from_json(text: &str) -> Result<AnyLearner> {
    let env: Envelope<AnyLearner> = serde_json::from_str(text)?;
    if env.format != SNAPSHOT_FORMAT || env.version != SNAPSHOT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported snapshot {} v{}",
            env.format, env.version
        )));
    }
    Ok(env.learner)
}

pub fn save_snapshot(learner: &AnyLearner, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(learner)?;
    File::create(path)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(text.as_bytes())?;
            w.flush()
        })
        .map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<AnyLearner> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<AnyLearner> = serde_json::from_reader(BufReader::new(file))?;
    if env.format != SNAPSHOT_FORMAT || env.version != SNAPSHOT_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported snapshot {} v{}",
            path.display(),
            env.format,
            env.version
        )));
    }
    Ok(env.learner)
}
