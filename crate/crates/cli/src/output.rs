//! Staged output: every file is rendered in memory first, then written.
//! If any write fails the files already written are removed.

use std::path::{Path, PathBuf};

use crate::error::{io_err, Result};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_all(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        for (name, content) in self.files {
            let path = dir.join(&name);
            if let Err(e) = std::fs::write(&path, content) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                let _ = std::fs::remove_file(&path);
                return Err(io_err(&path)(e));
            }
            written.push(path);
        }
        Ok(written)
    }
}

/// Renders rows with a header into CSV text.
pub fn csv_text<I, R>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}
