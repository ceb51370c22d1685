//! Field dumps: a raw little-endian f64 file plus a JSON sidecar (`<path>.json`).
//!
//! Sidecar layout: `{"dims": [..], "fields": [{"name", "components", "offset"}], "meta": {..}}`
//! where `offset` is in bytes and each field stores `components` values per node,
//! nodes in row-major order with the first axis fastest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldEntry {
    pub name: String,
    pub components: usize,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: Vec<usize>,
    pub fields: Vec<FieldEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct FieldDump {
    pub dims: Vec<usize>,
    pub fields: BTreeMap<String, (usize, Vec<f64>)>,
    pub meta: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_fields(
    path: &Path,
    dims: &[usize],
    fields: &[(&str, usize, &[f64])],
    meta: serde_json::Value,
) -> Result<()> {
    let nodes: usize = dims.iter().product();
    let mut entries = Vec::new();
    let mut out = BufWriter::new(fs::File::create(path)?);
    let mut offset = 0u64;
    for &(name, comps, data) in fields {
        if data.len() != nodes * comps {
            return invalid(format!(
                "field '{name}' has {} values, expected {} × {comps}",
                data.len(),
                nodes
            ));
        }
        for v in data {
            out.write_all(&v.to_le_bytes())?;
        }
        entries.push(FieldEntry {
            name: name.to_string(),
            components: comps,
            offset,
        });
        offset += 8 * data.len() as u64;
    }
    out.flush()?;
    let side = Sidecar {
        dims: dims.to_vec(),
        fields: entries,
        meta,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<FieldDump> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let nodes: usize = side.dims.iter().product();
    let mut fields = BTreeMap::new();
    for e in &side.fields {
        let start = e.offset as usize;
        let end = start + 8 * nodes * e.components;
        if end > bytes.len() {
            return invalid(format!("field '{}' runs past the end of {}", e.name, path.display()));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        fields.insert(e.name.clone(), (e.components, data));
    }
    Ok(FieldDump {
        dims: side.dims,
        fields,
        meta: side.meta,
    })
}

impl FieldDump {
    pub fn get(&self, name: &str, components: usize) -> Result<&[f64]> {
        match self.fields.get(name) {
            Some((c, d)) if *c == components => Ok(d),
            Some((c, _)) => invalid(format!("field '{name}' has {c} components, expected {components}")),
            None => invalid(format!("dump has no field '{name}'")),
        }
    }
}
