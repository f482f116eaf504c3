//! Flat binary field dumps with a JSON sidecar header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::NodeField;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sidecar header describing a dumped field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub name: String,
    pub resolutions: Vec<usize>,
    pub lengths: Vec<f64>,
    pub components: usize,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub sha256: String,
}

/// Little-endian f64 bytes, node-major.
pub fn field_bytes<T: Scalar>(field: &NodeField<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the serialized field; used by reports to reference fields.
pub fn field_hash<T: Scalar>(field: &NodeField<T>) -> String {
    content_hash(&field_bytes(field))
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`, returning the header.
pub fn write_field<T: Scalar>(
    dir: &Path,
    name: &str,
    field: &NodeField<T>,
    resolutions: &[usize],
    lengths: &[T],
) -> Result<FieldHeader> {
    fs::create_dir_all(dir)?;
    let bytes = field_bytes(field);
    let header = FieldHeader {
        name: name.to_string(),
        resolutions: resolutions.to_vec(),
        lengths: lengths.iter().map(|l| l.as_f64()).collect(),
        components: field.ncomp(),
        dtype: "f64".into(),
        byte_order: "little".into(),
        layout: "row-major nodes, components contiguous per node".into(),
        sha256: content_hash(&bytes),
    };
    fs::write(dir.join(format!("{name}.bin")), &bytes)?;
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join(format!("{name}.json")), json)?;
    Ok(header)
}

/// Reads a dump back, checking the stored hash.
pub fn read_field(dir: &Path, name: &str) -> Result<(FieldHeader, NodeField<f64>)> {
    let header_path: PathBuf = dir.join(format!("{name}.json"));
    let header: FieldHeader = serde_json::from_slice(&fs::read(header_path)?)
        .map_err(|e| Error::Io(e.to_string()))?;
    let bytes = fs::read(dir.join(format!("{name}.bin")))?;
    if content_hash(&bytes) != header.sha256 {
        return Err(Error::Io(format!("content hash mismatch for field {name}")));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Io(format!("field {name} is not a whole number of f64 values")));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let field = NodeField::from_vec(header.components, data)?;
    Ok((header, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let field = NodeField::from_vec(2, vec![1.0, -2.5, 3.25, 1e-300]).unwrap();
        let header = write_field(dir.path(), "phi", &field, &[2], &[1.0]).unwrap();
        let (back_header, back) = read_field(dir.path(), "phi").unwrap();
        assert_eq!(header, back_header);
        assert_eq!(back, field);
        assert_eq!(header.sha256, field_hash(&field));
    }

    #[test]
    fn tampered_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let field = NodeField::from_vec(1, vec![1.0, 2.0]).unwrap();
        write_field(dir.path(), "f", &field, &[2], &[1.0]).unwrap();
        fs::write(dir.path().join("f.bin"), 7.0f64.to_le_bytes().repeat(2)).unwrap();
        assert!(matches!(read_field(dir.path(), "f"), Err(Error::Io(_))));
    }
}
