//! SDPA sparse format (`.dat-s`).
//!
//! Our standard form is the SDPA dual: `max F₀•Y` subject to `F_i•Y = c_i`,
//! `Y ⪰ 0`, with `F_i = A_i`, `c_i = b_i` and `F₀ = −C`. Free variables are
//! split as `θ = θ⁺ − θ⁻` into a trailing diagonal block of size `2f`, which
//! the writer announces with a `*sdecert free_vars=f` comment line.

use std::fmt::Write as _;

use super::{LinearFunctional, SdpProblem};

const MARKER: &str = "*sdecert free_vars=";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A problem together with the comment lines of its file.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpaDocument {
    pub comments: Vec<String>,
    pub problem: SdpProblem,
}

fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_sdpa(p: &SdpProblem) -> String {
    write_sdpa_document(&SdpaDocument { comments: Vec::new(), problem: p.clone() })
}

pub fn write_sdpa_document(doc: &SdpaDocument) -> String {
    let p = &doc.problem;
    let f = p.free_vars;
    let mut out = String::new();
    for c in &doc.comments {
        if c.starts_with('"') || c.starts_with('*') {
            out.push_str(c);
        } else {
            out.push_str("* ");
            out.push_str(c);
        }
        out.push('\n');
    }
    if f > 0 {
        let _ = writeln!(out, "{MARKER}{f}");
    }
    let nblocks = p.blocks.len() + usize::from(f > 0);
    let _ = writeln!(out, "{} = mDIM", p.constraints.len());
    let _ = writeln!(out, "{nblocks} = nBLOCK");
    let mut sizes: Vec<String> = p.blocks.iter().map(|s| s.to_string()).collect();
    if f > 0 {
        sizes.push(format!("-{}", 2 * f));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = p.constraints.iter().map(|c| fmt_f64(c.rhs)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));

    let free_block = p.blocks.len() + 1;
    let mut emit = |mat: usize, func: &LinearFunctional, sign: f64| {
        for (b, r, c, v) in func.entries() {
            let _ = writeln!(out, "{mat} {} {} {} {}", b + 1, r + 1, c + 1, fmt_f64(sign * v));
        }
        for (j, v) in func.free_entries() {
            let _ = writeln!(out, "{mat} {free_block} {} {} {}", j + 1, j + 1, fmt_f64(sign * v));
            let _ = writeln!(out, "{mat} {free_block} {} {} {}", f + j + 1, f + j + 1, fmt_f64(-sign * v));
        }
    };
    emit(0, &p.objective, -1.0);
    for (i, c) in p.constraints.iter().enumerate() {
        emit(i + 1, &c.functional, 1.0);
    }
    out
}

pub fn read_sdpa(text: &str) -> Result<SdpProblem, ParseError> {
    read_sdpa_document(text).map(|d| d.problem)
}

#[derive(Clone, Copy)]
enum BlockKind {
    Psd(usize),
    Diag { first: usize, len: usize },
    Free,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokens(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        let sep = ch.is_whitespace() || "{}(),".contains(ch);
        match (sep, start) {
            (true, Some(s)) => {
                out.push(Token { text: &line[s..i], line: line_no, column: line[..s].chars().count() + 1 });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &line[s..], line: line_no, column: line[..s].chars().count() + 1 });
    }
    out
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, column, message: message.into() }
}

fn parse_int(t: &Token<'_>, what: &str) -> Result<i64, ParseError> {
    t.text.parse::<i64>().map_err(|_| err(t.line, t.column, format!("expected integer {what}, found `{}`", t.text)))
}

fn parse_float(t: &Token<'_>) -> Result<f64, ParseError> {
    let v = t.text.parse::<f64>().map_err(|_| err(t.line, t.column, format!("expected number, found `{}`", t.text)))?;
    if !v.is_finite() {
        return Err(err(t.line, t.column, "non-finite value"));
    }
    Ok(v)
}

pub fn read_sdpa_document(text: &str) -> Result<SdpaDocument, ParseError> {
    let mut comments = Vec::new();
    let mut free_marker: Option<usize> = None;
    let mut data_lines: Vec<(usize, &str)> = Vec::new();
    let mut last_line = 1;
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        last_line = no;
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(MARKER) {
            let f = rest.trim().parse::<usize>().map_err(|_| err(no, MARKER.len() + 1, "bad free variable count"))?;
            free_marker = Some(f);
        } else if trimmed.starts_with('"') || trimmed.starts_with('*') {
            comments.push(line.to_string());
        } else if !trimmed.is_empty() {
            data_lines.push((no, line));
        }
    }

    let mut pos = 0;
    let mut header = |what: &str| -> Result<i64, ParseError> {
        let Some(&(no, line)) = data_lines.get(pos) else {
            return Err(err(last_line, 1, format!("missing {what}")));
        };
        pos += 1;
        let toks = tokens(no, line);
        let Some(first) = toks.first() else {
            return Err(err(no, 1, format!("missing {what}")));
        };
        parse_int(first, what)
    };
    let m = header("mDIM")?;
    let nblock = header("nBLOCK")?;
    if m < 0 {
        return Err(err(data_lines[0].0, 1, "mDIM must be nonnegative"));
    }
    if nblock < 1 {
        return Err(err(data_lines[1].0, 1, "nBLOCK must be positive"));
    }
    let (m, nblock) = (m as usize, nblock as usize);

    // block structure and the c vector may wrap across lines
    let mut header_toks: Vec<Token<'_>> = Vec::new();
    while header_toks.len() < nblock + m {
        let Some(&(no, line)) = data_lines.get(pos) else {
            let what = if header_toks.len() < nblock { "block structure" } else { "objective vector" };
            return Err(err(last_line, 1, format!("missing {what}")));
        };
        pos += 1;
        header_toks.extend(tokens(no, line));
    }
    if let Some(t) = header_toks.get(nblock + m) {
        return Err(err(t.line, t.column, "unexpected trailing value after objective vector"));
    }
    let c_toks = header_toks.split_off(nblock);
    let struct_toks = header_toks;

    let mut kinds = Vec::with_capacity(nblock);
    let mut blocks = Vec::new();
    let mut free_vars = 0;
    for (k, t) in struct_toks.iter().enumerate() {
        let s = parse_int(t, "block size")?;
        if s == 0 {
            return Err(err(t.line, t.column, "block size 0"));
        }
        if s < 0 && k + 1 == nblock && free_marker.is_some_and(|f| 2 * f as i64 == -s) {
            free_vars = free_marker.unwrap_or(0);
            kinds.push(BlockKind::Free);
        } else if s < 0 {
            let len = (-s) as usize;
            kinds.push(BlockKind::Diag { first: blocks.len(), len });
            blocks.extend(std::iter::repeat_n(1, len));
        } else {
            kinds.push(BlockKind::Psd(blocks.len()));
            blocks.push(s as usize);
        }
    }
    if free_marker.is_some_and(|f| f > 0) && free_vars == 0 {
        return Err(err(1, 1, "free variable marker without matching trailing diagonal block"));
    }

    let mut problem = SdpProblem::new(blocks, free_vars);
    for t in &c_toks {
        problem.add_constraint(LinearFunctional::new(), parse_float(t)?);
    }
    // θ⁻ entries, checked against θ⁺ at the end
    let mut minus: Vec<(usize, usize, f64, usize, usize)> = Vec::new();

    for &(no, line) in &data_lines[pos..] {
        let toks = tokens(no, line);
        if toks.len() < 5 {
            let col = toks.last().map(|t| t.column + t.text.len()).unwrap_or(1);
            return Err(err(no, col, "expected `matno blkno i j value`"));
        }
        let mat = parse_int(&toks[0], "matrix number")?;
        if mat < 0 || mat as usize > m {
            return Err(err(no, toks[0].column, format!("matrix number {mat} outside 0..={m}")));
        }
        let blk = parse_int(&toks[1], "block number")?;
        if blk < 1 || blk as usize > nblock {
            return Err(err(no, toks[1].column, format!("block number {blk} outside 1..={nblock}")));
        }
        let i = parse_int(&toks[2], "row")?;
        let j = parse_int(&toks[3], "column")?;
        let v = parse_float(&toks[4])?;
        let sign = if mat == 0 { -1.0 } else { 1.0 };
        let func =
            if mat == 0 { &mut problem.objective } else { &mut problem.constraints[mat as usize - 1].functional };
        let bad_index = |t: &Token<'_>| err(no, t.column, "index outside the block");
        match kinds[blk as usize - 1] {
            BlockKind::Psd(b) => {
                let s = problem.blocks[b] as i64;
                if i < 1 || i > s {
                    return Err(bad_index(&toks[2]));
                }
                if j < 1 || j > s {
                    return Err(bad_index(&toks[3]));
                }
                func.add_entry(b, i as usize - 1, j as usize - 1, sign * v);
            }
            BlockKind::Diag { first, len } => {
                if i != j {
                    return Err(err(no, toks[3].column, "diagonal block entry off the diagonal"));
                }
                if i < 1 || i as usize > len {
                    return Err(bad_index(&toks[2]));
                }
                func.add_entry(first + i as usize - 1, 0, 0, sign * v);
            }
            BlockKind::Free => {
                if i != j {
                    return Err(err(no, toks[3].column, "diagonal block entry off the diagonal"));
                }
                if i < 1 || i as usize > 2 * free_vars {
                    return Err(bad_index(&toks[2]));
                }
                let idx = i as usize - 1;
                if idx < free_vars {
                    func.add_free(idx, sign * v);
                } else {
                    minus.push((mat as usize, idx - free_vars, sign * v, no, toks[4].column));
                }
            }
        }
    }
    for (mat, j, v, line, column) in minus {
        let func = if mat == 0 { &problem.objective } else { &problem.constraints[mat - 1].functional };
        let plus = func.free_entries().find(|(k, _)| *k == j).map(|(_, w)| w).unwrap_or(0.0);
        if plus != -v {
            return Err(err(line, column, "split free variable entries are not opposite"));
        }
    }
    Ok(SdpaDocument { comments, problem })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2], 1);
        p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 1.0);
        p.add_constraint(LinearFunctional::new().with_entry(0, 1, 1, 1.0), 1.0);
        p.add_constraint(LinearFunctional::new().with_entry(0, 0, 1, 1.0).with_free(0, -1.0), 0.0);
        p.objective = LinearFunctional::new().with_free(0, 1.0);
        p
    }

    #[test]
    fn round_trip_with_free_block() {
        let p = toy();
        let text = write_sdpa(&p);
        assert_eq!(read_sdpa(&text).unwrap(), p);
    }

    #[test]
    fn comments_preserved() {
        let doc = SdpaDocument { comments: vec!["\"toy problem".into(), "* second".into()], problem: toy() };
        let text = write_sdpa_document(&doc);
        assert_eq!(read_sdpa_document(&text).unwrap(), doc);
    }

    #[test]
    fn awkward_values_round_trip() {
        let mut p = SdpProblem::new(vec![1], 0);
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5e-5, f64::MIN_POSITIVE] {
            p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, v), -v);
        }
        assert_eq!(read_sdpa(&write_sdpa(&p)).unwrap(), p);
    }

    #[test]
    fn malformed_header_line_one() {
        let e = read_sdpa("two = mDIM\n1\n1\n1\n").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
    }

    #[test]
    fn punctuation_and_diag_blocks() {
        let text = "\"external\n1 =mDIM\n2 =nBLOCK\n{1, -2}\n{3.0}\n1 1 1 1 1.0\n1 2 2 2 1.0\n0 2 1 1 -1\n";
        let p = read_sdpa(text).unwrap();
        assert_eq!(p.blocks, vec![1, 1, 1]);
        assert_eq!(p.constraints[0].rhs, 3.0);
        assert_eq!(p.objective.entries().collect::<Vec<_>>(), vec![(1, 0, 0, 1.0)]);
    }

    #[test]
    fn bad_entry_reports_position() {
        let text = "1\n1\n2\n1\n1 1 1 3 1.0\n";
        let e = read_sdpa(text).unwrap_err();
        assert_eq!((e.line, e.column), (5, 7));
    }
}
