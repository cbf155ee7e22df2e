//! Plugin bundles: a directory or a plain `.tar` archive holding
//!
//! ```text
//! manifest.toml      plugin manifest
//! algorithm/         the plugin's code and assets
//! requirements.txt   optional dependency list (informational)
//! ```
//!
//! The manifest's entry command must resolve to a program, either inside
//! the bundle or on `PATH`.

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use crate::manifest::{ManifestError, PluginManifest, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle `{0}` does not exist")]
    NotFound(PathBuf),
    #[error("bundle has no {MANIFEST_FILE}")]
    MissingManifest,
    #[error("entry program `{0}` is neither in the bundle nor on PATH")]
    MissingEntry(String),
    #[error("cannot unpack bundle archive: {0}")]
    Archive(io::Error),
    #[error("i/o error on `{path}`: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and validates the manifest of an installed or source bundle.
pub fn read_manifest(root: &Path) -> Result<Result<PluginManifest, ManifestError>, BundleError> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(BundleError::MissingManifest);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(PluginManifest::parse(&text))
}

/// Copies (directory) or unpacks (archive) `source` into `dest` and returns
/// the bundle root, which is `dest` itself or its single top-level
/// directory when the archive wraps everything in one.
pub fn install(source: &Path, dest: &Path) -> Result<PathBuf, BundleError> {
    if !source.exists() {
        return Err(BundleError::NotFound(source.to_path_buf()));
    }
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    if source.is_dir() {
        copy_tree(source, dest)?;
    } else {
        let file = fs::File::open(source).map_err(io_err(source))?;
        tar::Archive::new(file).unpack(dest).map_err(BundleError::Archive)?;
    }
    if dest.join(MANIFEST_FILE).is_file() {
        return Ok(dest.to_path_buf());
    }
    let entries: Vec<PathBuf> = fs::read_dir(dest)
        .map_err(io_err(dest))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    match entries.as_slice() {
        [only] if only.is_dir() && only.join(MANIFEST_FILE).is_file() => Ok(only.clone()),
        _ => Err(BundleError::MissingManifest),
    }
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), BundleError> {
    for entry in WalkDir::new(from).min_depth(1) {
        let entry = entry.map_err(|e| BundleError::Io {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        let rel = entry.path().strip_prefix(from).expect("walk stays below its root");
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).map_err(io_err(&target))?;
        } else {
            fs::copy(entry.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}

/// Resolves the entry program: absolute paths as given, paths with a
/// separator relative to the bundle, bare names in the bundle then on `PATH`.
pub fn resolve_program(bundle_root: &Path, program: &str) -> Option<PathBuf> {
    let p = Path::new(program);
    if p.is_absolute() {
        return p.is_file().then(|| p.to_path_buf());
    }
    let local = bundle_root.join(p);
    if local.is_file() {
        return Some(local);
    }
    if program.contains('/') {
        return None;
    }
    env::var_os("PATH").and_then(|paths| {
        env::split_paths(&paths)
            .map(|dir| dir.join(program))
            .find(|candidate| candidate.is_file())
    })
}
