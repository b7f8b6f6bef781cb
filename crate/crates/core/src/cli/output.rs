//! Artifact writers. Files are written to a temporary sibling and renamed
//! into place; floats use the shortest round-trip decimal form.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::control::ControlSignal;
use crate::error::Result;
use crate::sim::Trajectory;

/// Shortest round-trip decimal; `INF` / `-INF` for infinities.
pub fn fmt_real(x: f64) -> String {
    if x == f64::INFINITY {
        "INF".into()
    } else if x == f64::NEG_INFINITY {
        "-INF".into()
    } else if x == 0.0 {
        // Normalizes -0.
        "0.0".into()
    } else {
        format!("{x:?}")
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header `t,<cell>,...`; one row per step start and a final zero row at the end time.
pub fn control_csv(signal: &ControlSignal) -> String {
    let mut out = String::from("t");
    for c in signal.cells() {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (t, row) in signal.times().iter().zip(signal.values()) {
        out.push_str(&fmt_real(*t));
        for v in row {
            out.push(',');
            out.push_str(&fmt_real(*v));
        }
        out.push('\n');
    }
    out.push_str(&fmt_real(signal.end()));
    for _ in signal.cells() {
        out.push_str(",0.0");
    }
    out.push('\n');
    out
}

/// Columns `trajectory,t,l2,sup`.
pub fn norms_csv(named: &[(&str, &Trajectory)]) -> String {
    let mut out = String::from("trajectory,t,l2,sup\n");
    for (name, tr) in named {
        for ((t, l2), sup) in tr.times.iter().zip(&tr.l2).zip(&tr.sup) {
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                fmt_real(*t),
                fmt_real(*l2),
                fmt_real(*sup)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ControlRegion, Grid1D};

    #[test]
    fn float_format() {
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(1.0), "1.0");
        assert_eq!(fmt_real(-0.0), "0.0");
        assert_eq!(fmt_real(1e-20), "1e-20");
        assert_eq!(fmt_real(f64::INFINITY), "INF");
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn control_csv_layout() {
        let g = Grid1D::uniform(4, 1.0).unwrap();
        let r = ControlRegion::from_mask(vec![false, true, true, false], g.h()).unwrap();
        let s = ControlSignal::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![1.0, 2.0], vec![0.5, -1.0]],
            r,
            g.weights(),
        )
        .unwrap();
        assert_eq!(
            control_csv(&s),
            "t,1,2\n0.0,1.0,2.0\n0.5,0.5,-1.0\n1.0,0.0,0.0\n"
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
