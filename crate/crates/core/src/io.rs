//! CSV emission with bit-stable decimal formatting.

use crate::walks::{MassProfile, NPointPath};
use std::io::{BufRead, Write};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,x,mass` rows sorted by `(t, x)`, zero masses omitted.
pub fn emit_plotdata<W: Write>(history: &[MassProfile], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x,mass")?;
    let mut rows: Vec<(i64, i64, f64)> = history
        .iter()
        .flat_map(|p| p.iter().filter(|&(_, m)| m > 0.0).map(move |(x, m)| (p.time(), x, m)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (t, x, m) in rows {
        writeln!(out, "{t},{x},{}", fmt_real(m))?;
    }
    Ok(())
}

/// Parses the output of [`emit_plotdata`].
pub fn read_plotdata<R: BufRead>(input: R) -> std::io::Result<Vec<(i64, i64, f64)>> {
    let bad = |l: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad row `{l}`"));
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(&line));
        }
        let t = f[0].parse().map_err(|_| bad(&line))?;
        let x = f[1].parse().map_err(|_| bad(&line))?;
        let m = f[2].parse().map_err(|_| bad(&line))?;
        rows.push((t, x, m));
    }
    Ok(rows)
}

/// `t,x1..xn`.
pub fn write_npoint_csv<W: Write>(path: &NPointPath, mut out: W) -> std::io::Result<()> {
    let names: Vec<String> = (1..=path.n()).map(|i| format!("x{i}")).collect();
    writeln!(out, "t,{}", names.join(","))?;
    for k in 0..path.len() {
        let xs: Vec<String> = path.at(k).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{}", path.start_time() + k as i64, xs.join(","))?;
    }
    Ok(())
}
