//! Configuration, persistence, run orchestration and the bridge protocol.

pub mod bench;
pub mod config;
pub mod fieldfile;
pub mod protocol;
pub mod records;
pub mod run;
pub mod theory;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write via a temporary sibling and rename, so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
