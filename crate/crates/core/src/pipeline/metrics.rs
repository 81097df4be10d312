use std::fmt::Display;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{io_err, PipelineError};

/// `event=<name> k1=v1 k2=v2 …`
pub fn format_record(event: &str, fields: &[(&str, &dyn Display)]) -> String {
    let mut line = format!("event={event}");
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    line
}

/// Appends structured records to a file and optionally echoes them.
#[derive(Debug)]
pub struct MetricsLog {
    path: PathBuf,
    file: File,
    echo: bool,
}

impl MetricsLog {
    pub fn create(path: &Path, echo: bool) -> Result<Self, PipelineError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            echo,
        })
    }

    pub fn record(&mut self, event: &str, fields: &[(&str, &dyn Display)]) -> Result<(), PipelineError> {
        let line = format_record(event, fields);
        if self.echo {
            println!("{line}");
        }
        writeln!(self.file, "{line}").map_err(|e| io_err(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format() {
        assert_eq!(
            format_record("epoch", &[("epoch", &3), ("loss", &0.25)]),
            "event=epoch epoch=3 loss=0.25"
        );
        assert_eq!(format_record("done", &[]), "event=done");
    }
}
