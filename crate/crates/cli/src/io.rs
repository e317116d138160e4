use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use biharm_core::{RadialField, RadialGrid};
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::CliError;

/// Compact JSON with every float written as 17 significant digits and
/// non-finite values as `null`.
struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    value.serialize(&mut ser).map_err(|e| CliError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.write_all(contents).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn field_csv(u: &RadialField) -> String {
    let mut s = String::from("r,u\n");
    for (r, v) in u.grid().nodes().iter().zip(u.values()) {
        writeln!(s, "{r:.16e},{v:.16e}").unwrap();
    }
    s
}

pub fn save_field(path: &Path, u: &RadialField) -> Result<(), CliError> {
    write_atomic(path, field_csv(u).as_bytes())
}

/// Reads a `r,u` table written by [`save_field`]. The nodes must be the
/// uniform mesh `[0, r_max]` of a grid in the given dimension.
pub fn load_field(path: &Path, dimension: usize) -> Result<RadialField, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_field_csv(&text, dimension)
}

pub fn parse_field_csv(text: &str, dimension: usize) -> Result<RadialField, CliError> {
    let bad = |line: usize, what: &str| CliError::Config(format!("field csv line {line}: {what}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("r,u") {
        return Err(bad(1, "expected header r,u"));
    }
    let (mut rs, mut us) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (r, u) = line.split_once(',').ok_or_else(|| bad(i + 2, "expected two columns"))?;
        rs.push(r.trim().parse::<f64>().map_err(|_| bad(i + 2, "bad r"))?);
        us.push(u.trim().parse::<f64>().map_err(|_| bad(i + 2, "bad u"))?);
    }
    let r_max = *rs.last().ok_or_else(|| bad(2, "no rows"))?;
    let grid: Arc<RadialGrid> = biharm_core::build_grid(r_max, rs.len(), dimension)?;
    for (i, (a, b)) in rs.iter().zip(grid.nodes()).enumerate() {
        if (a - b).abs() > 1e-12 * r_max {
            return Err(bad(i + 2, "nodes are not a uniform mesh starting at 0"));
        }
    }
    Ok(RadialField::new(grid, us)?)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
