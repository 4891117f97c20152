//! Atomic artifact writes: content goes to a sibling temp path, then is renamed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::windowing::{read_dataset, write_dataset_csv, Dataset, DatasetMeta};

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Writes `bytes` to `path`; readers see either the old file or the full new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let tmp = temp_sibling(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

/// Populates a temp directory through `fill`, then renames it over `dir`.
/// An existing `dir` is replaced.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    ensure_parent(dir)?;
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

/// The JSON sidecar that accompanies a CSV artifact.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes the dataset CSV and its metadata sidecar.
pub fn save_dataset(csv: &Path, ds: &Dataset) -> Result<()> {
    let mut body = Vec::new();
    write_dataset_csv(&mut body, ds)?;
    write_atomic(csv, &body)?;
    write_json_atomic(&sidecar_path(csv), &ds.meta)
}

pub fn read_meta(csv: &Path) -> Result<DatasetMeta> {
    let side = sidecar_path(csv);
    serde_json::from_str(&read_text(&side)?).map_err(|e| Error::schema(side.display().to_string(), e.to_string()))
}

/// Reads a dataset CSV and validates it against its sidecar.
pub fn load_dataset(csv: &Path) -> Result<Dataset> {
    let meta = read_meta(csv)?;
    let file = fs::File::open(csv).map_err(|e| Error::io(csv, e))?;
    read_dataset(std::io::BufReader::new(file), meta)
}
