//! Output files: CSV tables, JSON summaries, plotting helper.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never sees a half-written result.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::dynamics::DynamicsTrace;

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed 12-significant-digit rendering used in every CSV.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    // temp files are created private; results should read like ordinary files
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| fmt_float(*x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Parses a table written by [`CsvTable`]; returns the header and the rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .with_context(|| format!("{} is empty", path.display()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}", path.display(), i + 2))?;
        if row.len() != header.len() {
            bail!(
                "{} line {}: {} cells, header has {}",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            );
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub const TRACE_COLUMNS: [&str; 6] = ["t", "n_sp", "flux_s", "flux_as", "cum_s", "cum_as"];

pub fn trace_table(trace: &DynamicsTrace) -> CsvTable {
    let mut table = CsvTable::new(&TRACE_COLUMNS);
    for i in 0..trace.len() {
        table.rows.push(vec![
            trace.grid[i],
            trace.n_sp[i],
            trace.flux_s[i],
            trace.flux_as[i],
            trace.cum_s[i],
            trace.cum_as[i],
        ]);
    }
    table
}

pub fn read_trace(path: &Path) -> Result<DynamicsTrace> {
    let (header, rows) = read_csv(path)?;
    if header != TRACE_COLUMNS {
        bail!("{}: expected columns {}", path.display(), TRACE_COLUMNS.join(","));
    }
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    Ok(DynamicsTrace {
        grid: col(0),
        n_sp: col(1),
        flux_s: col(2),
        flux_as: col(3),
        cum_s: col(4),
        cum_as: col(5),
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Generic matplotlib script plotting every column of `csv` against the
/// first; written next to the data, never run by the crate.
pub fn plot_script(csv_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "import csv, sys");
    let _ = writeln!(s, "import matplotlib.pyplot as plt");
    let _ = writeln!(s);
    let _ = writeln!(s, "path = sys.argv[1] if len(sys.argv) > 1 else {csv_name:?}");
    let _ = writeln!(s, "with open(path) as f:");
    let _ = writeln!(s, "    rows = list(csv.reader(f))");
    let _ = writeln!(s, "header, data = rows[0], [[float(x) for x in r] for r in rows[1:]]");
    let _ = writeln!(s, "x = [r[0] for r in data]");
    let _ = writeln!(s, "for k, name in enumerate(header[1:], start=1):");
    let _ = writeln!(s, "    plt.plot(x, [r[k] for r in data], label=name)");
    let _ = writeln!(s, "plt.xlabel(header[0])");
    let _ = writeln!(s, "plt.legend()");
    let _ = writeln!(s, "plt.savefig(path.rsplit('.', 1)[0] + '.png', dpi=150)");
    s
}

pub fn write_plot_script(dir: &Path, csv_name: &str) -> Result<PathBuf> {
    let stem = csv_name.rsplit_once('.').map_or(csv_name, |(s, _)| s);
    let path = dir.join(format!("plot_{stem}.py"));
    write_atomic(&path, plot_script(csv_name).as_bytes())?;
    Ok(path)
}
