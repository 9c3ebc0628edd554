use std::io::Read;
use std::path::Path;

use super::TrainState;
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"DSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes the full training state behind a magic and version header.
pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bincode::serialize_into(&mut bytes, state).map_err(|e| Error::Checkpoint(format!("encode state: {e}")))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = bytes.as_slice();
    let mut magic = [0u8; 4];
    let mut version = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .and_then(|_| cursor.read_exact(&mut version))
        .map_err(|_| Error::Checkpoint(format!("{} is truncated", path.display())))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a training checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(version);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let state: TrainState =
        bincode::deserialize(cursor).map_err(|e| Error::Checkpoint(format!("decode {}: {e}", path.display())))?;
    for slot in state.slots() {
        slot.params.check_shapes(&slot.spec)?;
        if !slot.params.is_finite() {
            return Err(Error::Checkpoint(format!("{} parameters are not finite", slot.spec.name)));
        }
    }
    Ok(state)
}
