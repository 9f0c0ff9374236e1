use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::args::Format;
use crate::error::CliError;

/// Where results go: files in `dir`, or stdout.
pub struct Sink {
    pub dir: Option<PathBuf>,
    pub format: Format,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>, format: Format) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)
                .map_err(|e| CliError::usage(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self {
            dir,
            format,
            written: Vec::new(),
        })
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<Box<dyn Write>, CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                self.written.push(name.to_string());
                Ok(Box::new(io::BufWriter::new(fs::File::create(path)?)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// A CSV table. Without an output directory only `primary` tables are
    /// printed, so stdout carries a single parseable table.
    pub fn csv(
        &mut self,
        name: &str,
        primary: bool,
        write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        if self.dir.is_none() && !primary {
            return Ok(());
        }
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Side files that only make sense on disk.
    pub fn file_only(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut w = self.open(name)?;
        w.write_all(bytes)?;
        w.flush()?;
        Ok(())
    }
}

pub fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}
