use std::path::Path;

use super::run::ResultSet;
use crate::error::{Error, Result};

/// Header of the exported table.
pub fn csv_header(result: &ResultSet) -> Result<Vec<String>> {
    let layout = result
        .trajectory
        .layout
        .as_ref()
        .ok_or_else(|| Error::invalid("trajectory has no state layout"))?;
    let agents = layout.num_agents();
    let m = result.inputs.first().map_or(0, |u| u.len() / agents.max(1));
    let mut header = vec!["t".to_string()];
    header.extend(layout.column_names());
    for i in 1..=agents {
        for j in 1..=m {
            header.push(format!("u{i}_{j}"));
        }
    }
    header.push("sync_error".into());
    Ok(header)
}

/// Writes one row per sample: time, full state, inputs, sync error.
///
/// Numbers use Rust's shortest round-trip formatting, so values read back
/// bit-for-bit and never depend on locale.
pub fn export_csv(result: &ResultSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        };
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io_err)?;
    w.write_record(csv_header(result)?).map_err(io_err)?;
    let traj = &result.trajectory;
    let mut row = Vec::new();
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.times[k].to_string());
        row.extend(traj.states[k].iter().map(f64::to_string));
        row.extend(result.inputs[k].iter().map(f64::to_string));
        row.push(result.sync_error[k].to_string());
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
