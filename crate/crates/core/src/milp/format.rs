//! Line-based instance file format.
//!
//! ```text
//! # comment
//! MILP v1 <n> <m>
//! NAME <name>                    (optional)
//! FAMILY <family>                (optional)
//! SEED <seed>                    (optional)
//! OBJ c_0 .. c_{n-1}
//! BOUNDS l_0 u_0 .. l_{n-1} u_{n-1}   (-inf / inf allowed)
//! INT j_0 j_1 ..
//! ROW <i> <rhs> <k> col coef col coef ..    (one per constraint, i = 0..m-1)
//! WITNESS x_0 .. x_{n-1}         (optional)
//! ```
//!
//! Floats are written with their shortest round-trip representation, so a
//! write followed by a read reproduces the instance exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Family, MilpError, MilpInstance, Row};

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

pub fn instance_to_string(inst: &MilpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "MILP v1 {} {}", inst.n(), inst.m());
    let _ = writeln!(out, "NAME {}", inst.name());
    if let Some(f) = inst.family() {
        let _ = writeln!(out, "FAMILY {f}");
    }
    if let Some(s) = inst.seed() {
        let _ = writeln!(out, "SEED {s}");
    }
    let obj: Vec<String> = inst.objective().iter().map(|&v| fmt_f64(v)).collect();
    let _ = writeln!(out, "OBJ {}", obj.join(" "));
    let bounds: Vec<String> = inst
        .lower()
        .iter()
        .zip(inst.upper())
        .map(|(&l, &u)| format!("{} {}", fmt_f64(l), fmt_f64(u)))
        .collect();
    let _ = writeln!(out, "BOUNDS {}", bounds.join(" "));
    let ints: Vec<String> = inst.integers().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "INT {}", ints.join(" "));
    for (i, row) in inst.rows().iter().enumerate() {
        let _ = write!(out, "ROW {i} {} {}", fmt_f64(row.rhs), row.entries.len());
        for &(j, a) in &row.entries {
            let _ = write!(out, " {j} {}", fmt_f64(a));
        }
        out.push('\n');
    }
    if let Some(w) = inst.witness() {
        let vals: Vec<String> = w.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "WITNESS {}", vals.join(" "));
    }
    out
}

pub fn write_instance(inst: &MilpInstance, path: &Path) -> Result<(), MilpError> {
    fs::write(path, instance_to_string(inst)).map_err(|e| MilpError::Io(format!("{}: {e}", path.display())))
}

pub fn read_instance(path: &Path) -> Result<MilpInstance, MilpError> {
    let text = fs::read_to_string(path).map_err(|e| MilpError::Io(format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, MilpError> {
    match tok {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| MilpError::Parse {
            line,
            msg: format!("bad number {tok:?}"),
        }),
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, MilpError> {
    tok.parse::<usize>().map_err(|_| MilpError::Parse {
        line,
        msg: format!("bad index {tok:?}"),
    })
}

pub fn parse_instance(text: &str) -> Result<MilpInstance, MilpError> {
    let perr = |line: usize, msg: String| MilpError::Parse { line, msg };
    let mut header: Option<(usize, usize)> = None;
    let mut name = None;
    let mut family = None;
    let mut seed = None;
    let mut obj = None;
    let mut bounds: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut ints = None;
    let mut rows: Vec<Option<Row>> = Vec::new();
    let mut witness = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap_or_default();
        let rest: Vec<&str> = toks.collect();
        if header.is_none() && key != "MILP" {
            return Err(perr(line_no, "expected `MILP v1 n m` header".into()));
        }
        match key {
            "MILP" => {
                if header.is_some() {
                    return Err(perr(line_no, "duplicate header".into()));
                }
                if rest.len() != 3 || rest[0] != "v1" {
                    return Err(perr(line_no, "expected `MILP v1 n m`".into()));
                }
                let n = parse_usize(rest[1], line_no)?;
                let m = parse_usize(rest[2], line_no)?;
                header = Some((n, m));
                rows = vec![None; m];
            }
            "NAME" => name = Some(rest.join(" ")),
            "FAMILY" => {
                let f: Family = rest
                    .first()
                    .ok_or_else(|| perr(line_no, "missing family".into()))?
                    .parse()
                    .map_err(|e: MilpError| perr(line_no, e.to_string()))?;
                family = Some(f);
            }
            "SEED" => {
                let s = rest
                    .first()
                    .and_then(|t| t.parse::<u64>().ok())
                    .ok_or_else(|| perr(line_no, "bad seed".into()))?;
                seed = Some(s);
            }
            "OBJ" => {
                let v = rest.iter().map(|t| parse_f64(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                obj = Some(v);
            }
            "BOUNDS" => {
                let v = rest.iter().map(|t| parse_f64(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                if v.len() % 2 != 0 {
                    return Err(perr(line_no, "BOUNDS needs pairs".into()));
                }
                let (l, u) = v.chunks(2).map(|p| (p[0], p[1])).unzip();
                bounds = Some((l, u));
            }
            "INT" => {
                let v = rest.iter().map(|t| parse_usize(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                ints = Some(v);
            }
            "ROW" => {
                if rest.len() < 3 {
                    return Err(perr(line_no, "ROW needs `i rhs k`".into()));
                }
                let i = parse_usize(rest[0], line_no)?;
                let rhs = parse_f64(rest[1], line_no)?;
                let k = parse_usize(rest[2], line_no)?;
                if rest.len() != 3 + 2 * k {
                    return Err(perr(line_no, format!("ROW declares {k} entries but has {}", rest.len() - 3)));
                }
                let mut entries = Vec::with_capacity(k);
                for p in rest[3..].chunks(2) {
                    entries.push((parse_usize(p[0], line_no)?, parse_f64(p[1], line_no)?));
                }
                let slot = rows
                    .get_mut(i)
                    .ok_or_else(|| perr(line_no, format!("row index {i} out of range")))?;
                if slot.is_some() {
                    return Err(perr(line_no, format!("duplicate row {i}")));
                }
                if entries.is_empty() {
                    return Err(perr(line_no, format!("row {i} has no nonzeros")));
                }
                *slot = Some(Row { entries, rhs });
            }
            "WITNESS" => {
                let v = rest.iter().map(|t| parse_f64(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                witness = Some(v);
            }
            other => return Err(perr(line_no, format!("unknown keyword {other:?}"))),
        }
    }

    let (n, m) = header.ok_or_else(|| perr(0, "missing header".into()))?;
    let obj = obj.ok_or_else(|| perr(0, "missing OBJ line".into()))?;
    let (lower, upper) = bounds.ok_or_else(|| perr(0, "missing BOUNDS line".into()))?;
    if obj.len() != n || lower.len() != n {
        return Err(perr(0, format!("OBJ/BOUNDS length does not match n = {n}")));
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| perr(0, format!("missing ROW {i} (m = {m})"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut inst = MilpInstance::new(obj, lower, upper, ints.unwrap_or_default(), rows)?;
    if let Some(nm) = name {
        inst = inst.with_name(nm);
    }
    if let Some(f) = family {
        inst = inst.with_family(f);
    }
    if let Some(s) = seed {
        inst = inst.with_seed(s);
    }
    if let Some(w) = witness {
        inst = inst.with_witness(w)?;
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "# tiny\nMILP v1 2 1\nOBJ -1 -2\nBOUNDS 0 inf -inf 3.5\nINT 0\nROW 0 4 2 0 1 1 1.5\n";

    #[test]
    fn parses_infinite_bounds() {
        let inst = parse_instance(SMALL).unwrap();
        assert_eq!(inst.upper()[0], f64::INFINITY);
        assert_eq!(inst.lower()[1], f64::NEG_INFINITY);
        assert_eq!(inst.rows()[0].entries, vec![(0, 1.0), (1, 1.5)]);
    }

    #[test]
    fn inverted_bounds_rejected_with_diagnostic() {
        let text = SMALL.replace("BOUNDS 0 inf", "BOUNDS 5 1");
        let err = parse_instance(&text).unwrap_err();
        assert!(err.to_string().contains("l = 5"), "{err}");
    }

    #[test]
    fn empty_row_rejected() {
        let text = SMALL.replace("ROW 0 4 2 0 1 1 1.5", "ROW 0 4 0");
        let err = parse_instance(&text).unwrap_err();
        assert!(matches!(err, MilpError::Parse { line: 6, .. }), "{err}");
    }

    #[test]
    fn parse_error_reports_line_number() {
        let text = SMALL.replace("OBJ -1 -2", "OBJ -1 x");
        assert!(matches!(parse_instance(&text), Err(MilpError::Parse { line: 3, .. })));
    }

    #[test]
    fn missing_row_rejected() {
        let text = SMALL.replace("MILP v1 2 1", "MILP v1 2 2");
        assert!(parse_instance(&text).is_err());
    }
}
