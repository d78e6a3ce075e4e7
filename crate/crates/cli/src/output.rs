use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_PREFIX: &str = "lindblad-riemann";

/// Writes through a temporary sibling file and renames it into place, so a
/// reader never sees a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Floats print as the shortest string that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A CSV table with a leading `# schema: ...` comment line.
pub struct Table {
    schema: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, version: u32, header: &[&'static str]) -> Self {
        Self {
            schema: format!("{SCHEMA_PREFIX}/{name}/v{version}"),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("# schema: {}\n", self.schema).into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
        drop(w);
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        atomic_write(path, &self.to_bytes())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_schema_line_and_header() {
        let mut t = Table::new("demo", 1, &["a", "b"]);
        t.push(vec!["1".into(), num(0.1)]);
        let text = String::from_utf8(t.to_bytes()).unwrap();
        assert_eq!(text, "# schema: lindblad-riemann/demo/v1\na,b\n1,0.1\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1e-300, -3.25e17, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/file.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
