//! Canonical `milp/1` text format.
//!
//! ```text
//! milp/1
//! name <rest of line>
//! provenance <rest of line>
//! size <n> <m>
//! objective
//! <c_j>                      n lines
//! bounds
//! <l_j> <u_j>                n lines, `inf` / `-inf` for missing bounds
//! integrality
//! <0|1>                      n lines
//! rows
//! <row> <col> <value>        one line per nonzero, sorted by (row, col)
//! rhs+sense
//! <b_i> <<=|=|>=>            m lines
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `write` after `read` reproduces the file byte for byte.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{Entry, MilpInstance, ModelError, Sense};

pub const HEADER: &str = "milp/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_f64(out: &mut String, v: f64) {
    // `{}` yields the shortest representation that parses back exactly
    // ("inf"/"-inf" for infinities).
    write!(out, "{v}").unwrap();
}

pub fn to_string(inst: &MilpInstance) -> String {
    let mut s = String::new();
    s.push_str(HEADER);
    s.push('\n');
    writeln!(s, "name {}", inst.name.replace('\n', " ")).unwrap();
    writeln!(s, "provenance {}", inst.provenance.replace('\n', " ")).unwrap();
    writeln!(s, "size {} {}", inst.num_vars(), inst.num_rows()).unwrap();
    s.push_str("objective\n");
    for &c in &inst.objective {
        fmt_f64(&mut s, c);
        s.push('\n');
    }
    s.push_str("bounds\n");
    for j in 0..inst.num_vars() {
        fmt_f64(&mut s, inst.lower[j]);
        s.push(' ');
        fmt_f64(&mut s, inst.upper[j]);
        s.push('\n');
    }
    s.push_str("integrality\n");
    for &b in &inst.integrality {
        s.push_str(if b { "1\n" } else { "0\n" });
    }
    s.push_str("rows\n");
    for e in &inst.entries {
        write!(s, "{} {} ", e.row, e.col).unwrap();
        fmt_f64(&mut s, e.value);
        s.push('\n');
    }
    s.push_str("rhs+sense\n");
    for i in 0..inst.num_rows() {
        fmt_f64(&mut s, inst.rhs[i]);
        writeln!(s, " {}", inst.senses[i]).unwrap();
    }
    s.push_str("end\n");
    s
}

pub fn write_instance(inst: &MilpInstance, path: impl AsRef<Path>) -> Result<(), IoError> {
    std::fs::write(path, to_string(inst))?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MilpInstance, IoError> {
    from_str(&std::fs::read_to_string(path)?)
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> IoError {
        IoError::Parse { line: line + 1, column, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), IoError> {
        match self.lines.get(self.pos) {
            Some(l) => {
                self.pos += 1;
                Ok((self.pos - 1, l))
            }
            None => Err(IoError::Schema(format!("unexpected end of file, expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), IoError> {
        let (ln, l) = self.next(kw)?;
        if l.trim_end() != kw {
            return Err(IoError::Schema(format!("line {}: expected section `{kw}`, found `{l}`", ln + 1)));
        }
        Ok(())
    }

    fn prefixed(&mut self, kw: &str) -> Result<(usize, &'a str), IoError> {
        let (ln, l) = self.next(kw)?;
        match l.strip_prefix(kw) {
            Some(rest) if rest.is_empty() => Ok((ln, rest)),
            Some(rest) if rest.starts_with(' ') => Ok((ln, &rest[1..])),
            _ => Err(IoError::Schema(format!("line {}: expected `{kw}`, found `{l}`", ln + 1))),
        }
    }

    /// Splits a line into whitespace separated tokens with 1-based columns.
    fn tokens(line: &str) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in line.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push((s + 1, &line[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push((s + 1, &line[s..]));
        }
        out
    }

    fn fields(&mut self, what: &str, count: usize) -> Result<(usize, Vec<(usize, &'a str)>), IoError> {
        let (ln, l) = self.next(what)?;
        let toks = Self::tokens(l);
        if toks.len() != count {
            let col = toks.get(count).map_or(l.len() + 1, |t| t.0);
            return Err(self.err(ln, col, format!("expected {count} field(s) for {what}, found {}", toks.len())));
        }
        Ok((ln, toks))
    }

    fn float(&self, ln: usize, tok: (usize, &str)) -> Result<f64, IoError> {
        match tok.1.parse::<f64>() {
            Ok(v) if !v.is_nan() => Ok(v),
            _ => Err(self.err(ln, tok.0, format!("invalid number `{}`", tok.1))),
        }
    }

    fn uint(&self, ln: usize, tok: (usize, &str)) -> Result<usize, IoError> {
        tok.1
            .parse::<usize>()
            .map_err(|_| self.err(ln, tok.0, format!("invalid index `{}`", tok.1)))
    }
}

pub fn from_str(text: &str) -> Result<MilpInstance, IoError> {
    let mut cur = Cursor { lines: text.lines().collect(), pos: 0 };
    let (ln, header) = cur.next("header")?;
    if header.trim_end() != HEADER {
        return Err(cur.err(ln, 1, format!("expected header `{HEADER}`")));
    }
    let name = cur.prefixed("name")?.1.to_string();
    let provenance = cur.prefixed("provenance")?.1.to_string();
    let (ln, size) = cur.prefixed("size")?;
    let toks = Cursor::tokens(size);
    if toks.len() != 2 {
        return Err(cur.err(ln, 1, "expected `size <n> <m>`"));
    }
    let n = cur.uint(ln, (toks[0].0 + 5, toks[0].1))?;
    let m = cur.uint(ln, (toks[1].0 + 5, toks[1].1))?;

    cur.keyword("objective")?;
    let mut objective = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, t) = cur.fields("objective coefficient", 1)?;
        objective.push(cur.float(ln, t[0])?);
    }
    cur.keyword("bounds")?;
    let (mut lower, mut upper) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (ln, t) = cur.fields("bounds", 2)?;
        lower.push(cur.float(ln, t[0])?);
        upper.push(cur.float(ln, t[1])?);
    }
    cur.keyword("integrality")?;
    let mut integrality = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, t) = cur.fields("integrality flag", 1)?;
        integrality.push(match t[0].1 {
            "0" => false,
            "1" => true,
            other => return Err(cur.err(ln, t[0].0, format!("integrality flag must be 0 or 1, found `{other}`"))),
        });
    }
    cur.keyword("rows")?;
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen = HashSet::new();
    loop {
        let (ln, l) = cur.next("rhs+sense")?;
        if l.trim_end() == "rhs+sense" {
            break;
        }
        let t = Cursor::tokens(l);
        if t.len() != 3 {
            return Err(cur.err(ln, 1, format!("expected `row col value`, found {} field(s)", t.len())));
        }
        let row = cur.uint(ln, t[0])?;
        let col = cur.uint(ln, t[1])?;
        let value = cur.float(ln, t[2])?;
        if row >= m || col >= n {
            return Err(cur.err(ln, t[0].0, format!("entry ({row}, {col}) outside {m}x{n} matrix")));
        }
        if !seen.insert((row, col)) {
            return Err(cur.err(ln, t[0].0, format!("duplicate entry ({row}, {col})")));
        }
        entries.push(Entry { row, col, value });
    }
    let (mut rhs, mut senses) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for _ in 0..m {
        let (ln, t) = cur.fields("rhs and sense", 2)?;
        rhs.push(cur.float(ln, t[0])?);
        senses.push(
            Sense::from_token(t[1].1)
                .ok_or_else(|| cur.err(ln, t[1].0, format!("unknown sense `{}`", t[1].1)))?,
        );
    }
    cur.keyword("end")?;
    let inst = MilpInstance::new(name, objective, entries, rhs, senses, lower, upper, integrality)?;
    Ok(inst.with_provenance(provenance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MilpInstance {
        MilpInstance::new(
            "t",
            vec![0.1, -2.5],
            vec![Entry { row: 0, col: 1, value: 0.5 }, Entry { row: 0, col: 0, value: 3.0 }],
            vec![7.25],
            vec![Sense::Ge],
            vec![0.0, f64::NEG_INFINITY],
            vec![1.0, f64::INFINITY],
            vec![true, false],
        )
        .unwrap()
        .with_provenance("unit test")
    }

    #[test]
    fn round_trip_is_exact() {
        let inst = sample();
        let text = to_string(&inst);
        let back = from_str(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(to_string(&back), text);
        assert!(text.contains("-inf inf"));
    }

    #[test]
    fn empty_constraint_set_is_accepted() {
        let inst = MilpInstance::new("e", vec![1.0], vec![], vec![], vec![], vec![0.0], vec![3.0], vec![true]).unwrap();
        assert_eq!(from_str(&to_string(&inst)).unwrap(), inst);
    }

    #[test]
    fn duplicate_triplet_is_a_parse_error() {
        let text = to_string(&sample()).replace("0 1 0.5", "0 0 0.5");
        match from_str(&text) {
            Err(IoError::Parse { line, column, .. }) => {
                assert_eq!(line, 16);
                assert_eq!(column, 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_column() {
        let text = to_string(&sample()).replace("7.25 >=", "7.2x5 >=");
        match from_str(&text) {
            Err(IoError::Parse { column, message, .. }) => {
                assert_eq!(column, 1);
                assert!(message.contains("7.2x5"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_section_is_a_schema_error() {
        let text = to_string(&sample()).replace("integrality\n", "");
        assert!(matches!(from_str(&text), Err(IoError::Schema(_))));
    }
}
