//! Run-state snapshots as JSON.

use std::path::Path;

use densecap_core::optimizer::{RunState, STATE_VERSION};

use crate::data_io::{to_json_bytes, write_atomic};
use crate::error::{Error, Result};

pub fn save_state(path: &Path, state: &RunState) -> Result<()> {
    write_atomic(path, &to_json_bytes(state))
}

/// Loads a snapshot. Anything that is not a state of the current version,
/// including a corrupt file, is refused with a version error.
pub fn load_state(path: &Path) -> Result<RunState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let refuse = |found| Error::StateVersion {
        path: path.into(),
        expected: STATE_VERSION,
        found,
    };
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|_| refuse(None))?;
    let version = value.get("version").and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == u64::from(STATE_VERSION) => serde_json::from_value(value).map_err(|_| refuse(Some(STATE_VERSION))),
        Some(v) => Err(refuse(u32::try_from(v).ok())),
        None => Err(refuse(None)),
    }
}
