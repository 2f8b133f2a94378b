//! The `qalist v1` text format for a complete [`CodeSpec`].
//!
//! ```text
//! qalist v1
//! p 3 prim_poly 0xb M 2 N 4 g_s 6 mode extended
//! [H]
//! 0: 0:3 2:0 3:5
//! ...                          one line per check, col:exp with value = alpha^exp
//! [generators]
//! 0: 1111111                   active mask per symbol, position 1 first
//! ...
//! [selectors]
//! 0 0: 1 2 4                   check, symbol: selected 1-based rows
//! [omega_e]
//! rows 11
//! o 0 1; 0 9 17                provenance tag; 0-based active columns
//! a 0 3 1 5; 2 4 16
//! r 3 -; 21 22 24
//! [end]
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::bitmatrix::BitMatrix;
use crate::channel::{CodeSpec, Mode};
use crate::error::{Error, Result};
use crate::gf::FieldContext;
use crate::representation::{EPRMatrix, GeneratorMatrix, GeneratorSet, NonBinaryMatrix, RowTag};

const MAGIC: &str = "qalist v1";

pub fn to_string(spec: &CodeSpec) -> String {
    let ctx = spec.h.ctx();
    let q1 = ctx.order();
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(
        s,
        "p {} prim_poly {:#x} M {} N {} g_s {} mode {}",
        ctx.p(),
        ctx.prim_poly(),
        spec.h.m(),
        spec.h.n(),
        spec.target_girth,
        spec.mode
    )
    .unwrap();
    s.push_str("[H]\n");
    for (i, row) in spec.h.rows().iter().enumerate() {
        write!(s, "{i}:").unwrap();
        for &(j, v) in row {
            write!(s, " {j}:{}", ctx.log(v).expect("nonzero entry")).unwrap();
        }
        s.push('\n');
    }
    s.push_str("[generators]\n");
    for (j, g) in spec.gens.generators().iter().enumerate() {
        let mask: String = g.mask().iter().map(|&a| if a { '1' } else { '0' }).collect();
        debug_assert_eq!(mask.len(), q1);
        writeln!(s, "{j}: {mask}").unwrap();
    }
    s.push_str("[selectors]\n");
    for (&(i, j), rows) in spec.gens.selectors() {
        write!(s, "{i} {j}:").unwrap();
        for r in rows {
            write!(s, " {r}").unwrap();
        }
        s.push('\n');
    }
    s.push_str("[omega_e]\n");
    let m = spec.omega_e.matrix();
    writeln!(s, "rows {}", m.n_rows()).unwrap();
    for (row, tag) in m.rows().iter().zip(spec.omega_e.provenance()) {
        match *tag {
            RowTag::OmegaRow { check, index } => write!(s, "o {check} {index};"),
            RowTag::RowAddition {
                check,
                index,
                source_check,
                source_index,
            } => write!(s, "a {check} {index} {source_check} {source_index};"),
            RowTag::ReplacementBlock { symbol, partner } => match partner {
                Some(t) => write!(s, "r {symbol} {t};"),
                None => write!(s, "r {symbol} -;"),
            },
        }
        .unwrap();
        for c in row {
            write!(s, " {c}").unwrap();
        }
        s.push('\n');
    }
    s.push_str("[end]\n");
    s
}

pub fn write(path: &Path, spec: &CodeSpec) -> Result<()> {
    std::fs::write(path, to_string(spec))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<CodeSpec> {
    parse(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    /// Next meaningful line with its 1-based number, or an error naming
    /// the section being read.
    fn next(&mut self, section: &str) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse {
            line: self.last + 1,
            msg: format!("file ends inside section {section}"),
        })
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        let (n, l) = self.next(header)?;
        if l != header {
            return Err(perr(n, format!("expected section {header}, found {l:?}")));
        }
        Ok(())
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, section: &str, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| perr(line, format!("section {section}: cannot read {tok:?} as a number")))
}

/// `index:` prefix check shared by the per-row sections.
fn strip_index<'a>(line: usize, section: &str, l: &'a str, want: &str) -> Result<&'a str> {
    let (head, rest) = l
        .split_once(':')
        .ok_or_else(|| perr(line, format!("section {section}: missing ':'")))?;
    if head.trim() != want {
        return Err(perr(line, format!("section {section}: expected entry {want}, found {}", head.trim())));
    }
    Ok(rest)
}

pub fn parse(text: &str) -> Result<CodeSpec> {
    let mut lines = Lines::new(text);
    let (n, l) = lines.next("header")?;
    if l != MAGIC {
        return Err(perr(n, format!("expected {MAGIC:?}, found {l:?}")));
    }
    let (hn, header) = lines.next("header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 12 {
        return Err(perr(hn, "header needs p, prim_poly, M, N, g_s and mode"));
    }
    let mut fields = BTreeMap::new();
    for kv in toks.chunks(2) {
        fields.insert(kv[0], kv[1]);
    }
    let field = |k: &str| fields.get(k).copied().ok_or_else(|| perr(hn, format!("header lacks {k}")));
    let p: u32 = num(hn, "header", field("p")?)?;
    let poly_s = field("prim_poly")?;
    let poly = u32::from_str_radix(poly_s.trim_start_matches("0x"), 16)
        .map_err(|_| perr(hn, format!("bad prim_poly {poly_s:?}")))?;
    let m: usize = num(hn, "header", field("M")?)?;
    let n_sym: usize = num(hn, "header", field("N")?)?;
    let g_s: usize = num(hn, "header", field("g_s")?)?;
    let mode: Mode = field("mode")?.parse().map_err(|_| perr(hn, "mode must be base or extended"))?;
    let ctx = Arc::new(FieldContext::with_poly(p, poly).map_err(|e| perr(hn, e.to_string()))?);
    let q1 = ctx.order();

    lines.expect_header("[H]")?;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let (ln, l) = lines.next("[H]")?;
        let rest = strip_index(ln, "[H]", l, &i.to_string())?;
        let mut row = Vec::new();
        for tok in rest.split_whitespace() {
            let (c, e) = tok
                .split_once(':')
                .ok_or_else(|| perr(ln, format!("section [H]: entry {tok:?} is not col:exp")))?;
            let c: u32 = num(ln, "[H]", c)?;
            let e: usize = num(ln, "[H]", e)?;
            if e >= q1 {
                return Err(perr(ln, format!("section [H]: exponent {e} out of range")));
            }
            row.push((c, ctx.exp(e)));
        }
        rows.push(row);
    }
    let h = NonBinaryMatrix::new(ctx.clone(), n_sym, rows).map_err(|e| perr(lines.last, format!("section [H]: {e}")))?;

    lines.expect_header("[generators]")?;
    let mut gens = Vec::with_capacity(n_sym);
    for j in 0..n_sym {
        let (ln, l) = lines.next("[generators]")?;
        let rest = strip_index(ln, "[generators]", l, &j.to_string())?.trim();
        if rest.len() != q1 || !rest.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(perr(ln, format!("section [generators]: mask must be {q1} binary digits")));
        }
        let mask = rest.bytes().map(|b| b == b'1').collect();
        gens.push(GeneratorMatrix::from_mask(j, p as usize, mask).map_err(|e| perr(ln, e.to_string()))?);
    }

    lines.expect_header("[selectors]")?;
    let mut selectors = BTreeMap::new();
    let (mut ln, mut l) = lines.next("[selectors]")?;
    while l != "[omega_e]" {
        let (head, rest) = l
            .split_once(':')
            .ok_or_else(|| perr(ln, "section [selectors]: missing ':'"))?;
        let ij: Vec<&str> = head.split_whitespace().collect();
        if ij.len() != 2 {
            return Err(perr(ln, "section [selectors]: expected 'check symbol:'"));
        }
        let key = (num(ln, "[selectors]", ij[0])?, num(ln, "[selectors]", ij[1])?);
        let vals = rest
            .split_whitespace()
            .map(|t| num(ln, "[selectors]", t))
            .collect::<Result<Vec<u32>>>()?;
        selectors.insert(key, vals);
        (ln, l) = lines.next("[selectors]")?;
    }
    let gens = GeneratorSet::new(p as usize, gens, selectors).map_err(|e| perr(ln, e.to_string()))?;

    let (ln, l) = lines.next("[omega_e]")?;
    let n_rows: usize = match l.strip_prefix("rows ") {
        Some(v) => num(ln, "[omega_e]", v.trim())?,
        None => return Err(perr(ln, "section [omega_e]: expected 'rows <count>'")),
    };
    let mut erows = Vec::with_capacity(n_rows);
    let mut tags = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let (ln, l) = lines.next("[omega_e]")?;
        let (tag, cols) = l
            .split_once(';')
            .ok_or_else(|| perr(ln, "section [omega_e]: missing ';' after the row tag"))?;
        let t: Vec<&str> = tag.split_whitespace().collect();
        let bad = || perr(ln, format!("section [omega_e]: malformed tag {tag:?}"));
        let tag = match t.as_slice() {
            ["o", c, i] => RowTag::OmegaRow {
                check: num(ln, "[omega_e]", c)?,
                index: num(ln, "[omega_e]", i)?,
            },
            ["a", c, i, sc, si] => RowTag::RowAddition {
                check: num(ln, "[omega_e]", c)?,
                index: num(ln, "[omega_e]", i)?,
                source_check: num(ln, "[omega_e]", sc)?,
                source_index: num(ln, "[omega_e]", si)?,
            },
            ["r", s, "-"] => RowTag::ReplacementBlock {
                symbol: num(ln, "[omega_e]", s)?,
                partner: None,
            },
            ["r", s, t] => RowTag::ReplacementBlock {
                symbol: num(ln, "[omega_e]", s)?,
                partner: Some(num(ln, "[omega_e]", t)?),
            },
            _ => return Err(bad()),
        };
        let cols = cols
            .split_whitespace()
            .map(|c| num(ln, "[omega_e]", c))
            .collect::<Result<Vec<u32>>>()?;
        erows.push(cols);
        tags.push(tag);
    }
    let (ln, l) = lines.next("[end]")?;
    if l != "[end]" {
        return Err(perr(ln, format!("expected [end], found {l:?}")));
    }
    let matrix = BitMatrix::from_rows(n_sym * q1, erows).map_err(|e| perr(ln, format!("section [omega_e]: {e}")))?;
    let omega_e = EPRMatrix::new(p as usize, n_sym, matrix, gens.column_mask(), tags)
        .map_err(|e| perr(ln, format!("section [omega_e]: {e}")))?;
    CodeSpec::new(h, omega_e, gens, g_s, mode).map_err(|e| perr(ln, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::binary_image;

    fn fixture() -> CodeSpec {
        let ctx = Arc::new(FieldContext::new(3).unwrap());
        let mother = crate::fixtures::gallager12();
        let rows = (0..mother.n_rows())
            .map(|i| mother.row(i).iter().map(|&j| (j, 1 + (i as u32 + 2 * j) % 7)).collect())
            .collect();
        CodeSpec::plain(NonBinaryMatrix::new(ctx, 12, rows).unwrap(), Mode::Base).unwrap()
    }

    #[test]
    fn round_trip() {
        let spec = fixture();
        let text = to_string(&spec);
        let back = parse(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn truncation_names_section() {
        let text = to_string(&fixture());
        let at = text.lines().position(|l| l == "[omega_e]").unwrap() + 4;
        let cut: String = text.lines().take(at).map(|l| format!("{l}\n")).collect();
        match parse(&cut) {
            Err(Error::Parse { line, msg }) => {
                assert!(msg.contains("[omega_e]"), "{msg}");
                assert_eq!(line, at + 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_line() {
        let text = to_string(&fixture()).replacen("0: 0:", "0: x:", 1);
        match parse(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("[H]"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hand_written_gf4() {
        // H = [alpha, 1] over GF(4), full Omega
        let text = "qalist v1\np 2 prim_poly 0x7 M 1 N 2 g_s 0 mode base\n[H]\n0: 0:1 1:0\n\
                    [generators]\n0: 111\n1: 111\n[selectors]\n0 0: 1 2 3\n0 1: 1 2 3\n\
                    [omega_e]\nrows 0\n[end]\n";
        let spec = parse(text).unwrap();
        let img = binary_image(&spec.h);
        assert_eq!(img.matrix().to_dense(), vec![vec![0, 1, 1, 0], vec![1, 1, 0, 1]]);
    }
}
