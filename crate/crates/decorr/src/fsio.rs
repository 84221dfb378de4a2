//! Whole-file writes that are either complete or absent.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use crate::error::{Result, RunError};

/// Write to a sibling temporary file, flush it to disk, then rename it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| RunError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(RunError::io(path, e));
    }
    Ok(())
}
