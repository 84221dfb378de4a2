//! CIFAR-10 binary batches on disk.

use std::fs;
use std::path::{Path, PathBuf};

use decorr_core::data::{encode_cifar10_records, normalize_channels, parse_cifar10_records, CifarRecord, Dataset};

use crate::error::{Result, RunError};
use crate::fsio::write_atomic;

/// Read every record from `paths` in order, scale pixels to `[0, 1]` and
/// standardize each colour channel over the loaded set.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    Ok(normalize_channels(&read_records(paths)?)?)
}

pub fn read_records<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<CifarRecord>> {
    let mut records = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(|e| RunError::io(p, e))?;
        let parsed = parse_cifar10_records(&bytes).map_err(|source| RunError::Format {
            path: PathBuf::from(p),
            source,
        })?;
        records.extend(parsed);
    }
    if records.is_empty() {
        return Err(RunError::Config("no CIFAR-10 records found".into()));
    }
    Ok(records)
}

/// Write records in the binary batch format.
pub fn write_records(path: &Path, records: &[CifarRecord]) -> Result<()> {
    write_atomic(path, &encode_cifar10_records(records)?)
}
