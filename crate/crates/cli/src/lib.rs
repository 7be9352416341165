//! Command-line front end and HTTP environment service for graphwright.

pub mod commands;
pub mod service;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use graphwright::SchemaRegistry;

pub const SCHEMA_DIR_ENV: &str = "GRAPHWRIGHT_SCHEMA_DIR";
pub const DEFAULT_SCHEMA: &str = "mini-sd";

/// Exit codes shared by every command.
pub mod exit {
    pub const OK: i32 = 0;
    pub const REJECTED: i32 = 1;
    pub const USAGE: i32 = 2;
}

fn schema_dir() -> Option<PathBuf> {
    std::env::var_os(SCHEMA_DIR_ENV).map(PathBuf::from)
}

/// Resolves a registry argument: an existing file path, then
/// `<GRAPHWRIGHT_SCHEMA_DIR>/<name>.json`, then a bundled registry name.
pub fn resolve_registry(spec: &str) -> anyhow::Result<SchemaRegistry> {
    let path = Path::new(spec);
    if path.is_file() {
        return SchemaRegistry::load(path).with_context(|| format!("loading registry {}", path.display()));
    }
    if let Some(dir) = schema_dir() {
        let candidate = dir.join(format!("{spec}.json"));
        if candidate.is_file() {
            return SchemaRegistry::load(&candidate)
                .with_context(|| format!("loading registry {}", candidate.display()));
        }
    }
    if SchemaRegistry::bundled_names().contains(&spec) {
        return Ok(SchemaRegistry::bundled(spec)?);
    }
    bail!("no registry named `{spec}` (not a file, not in ${SCHEMA_DIR_ENV}, not bundled)")
}

/// Every registry the service can serve: the bundled ones plus each
/// `*.json` in the schema directory, keyed by schema id.
pub fn load_all_registries() -> anyhow::Result<Vec<SchemaRegistry>> {
    let mut out: Vec<SchemaRegistry> = SchemaRegistry::bundled_names()
        .iter()
        .map(|n| SchemaRegistry::bundled(n))
        .collect::<Result<_, _>>()?;
    if let Some(dir) = schema_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let r = SchemaRegistry::load(&p).with_context(|| format!("loading registry {}", p.display()))?;
            out.retain(|x| x.schema_id() != r.schema_id());
            out.push(r);
        }
    }
    Ok(out)
}
