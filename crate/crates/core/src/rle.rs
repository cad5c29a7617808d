//! Line-oriented text container shared by the world and map dump formats.
//!
//! A file is a magic line, `KEY value...` header lines, then `RLE <runs>`
//! followed by one `<symbol> <count>` line per run in x-fastest cell order,
//! terminated by `END`.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unexpected end of file: {0}")]
    Truncated(String),
}

pub fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Encode a symbol sequence as runs.
pub fn encode_runs<I: IntoIterator<Item = char>>(cells: I) -> Vec<(char, u64)> {
    let mut runs: Vec<(char, u64)> = Vec::new();
    for c in cells {
        match runs.last_mut() {
            Some((s, n)) if *s == c => *n += 1,
            _ => runs.push((c, 1)),
        }
    }
    runs
}

pub fn write_runs(out: &mut String, runs: &[(char, u64)]) {
    let _ = writeln!(out, "RLE {}", runs.len());
    for (s, n) in runs {
        let _ = writeln!(out, "{s} {n}");
    }
    out.push_str("END\n");
}

/// Cursor over the lines of a text container, tracking 1-based line numbers.
pub struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    pub last: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    pub fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(FormatError::Truncated(format!("expected {what}"))),
        }
    }

    /// Read a `KEY v1 v2 ...` line and return the values.
    pub fn keyed(&mut self, key: &str, count: usize) -> Result<(usize, Vec<&'a str>), FormatError> {
        let (n, line) = self.next_line(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(parse_err(n, format!("expected `{key}`")));
        }
        let vals: Vec<&str> = parts.collect();
        if vals.len() != count {
            return Err(parse_err(
                n,
                format!("`{key}` expects {count} values, found {}", vals.len()),
            ));
        }
        Ok((n, vals))
    }

    /// Read the run section and expand it, checking the total cell count.
    pub fn runs(&mut self, alphabet: &[char], total: usize) -> Result<Vec<char>, FormatError> {
        let (n, vals) = self.keyed("RLE", 1)?;
        let count: usize = parse_num(n, vals[0])?;
        let mut cells = Vec::with_capacity(total);
        for _ in 0..count {
            let (n, line) = self.next_line("run")?;
            let mut parts = line.split_whitespace();
            let sym = parts
                .next()
                .and_then(|s| {
                    let mut ch = s.chars();
                    let c = ch.next()?;
                    ch.next().is_none().then_some(c)
                })
                .ok_or_else(|| parse_err(n, "missing run symbol"))?;
            if !alphabet.contains(&sym) {
                return Err(parse_err(n, format!("unknown run symbol `{sym}`")));
            }
            let len: usize = parse_num(n, parts.next().unwrap_or(""))?;
            if parts.next().is_some() {
                return Err(parse_err(n, "trailing data after run"));
            }
            if len == 0 || cells.len() + len > total {
                return Err(parse_err(n, "run length overflows grid"));
            }
            cells.extend(std::iter::repeat_n(sym, len));
        }
        if cells.len() != total {
            return Err(FormatError::Truncated(format!(
                "runs cover {} of {} cells",
                cells.len(),
                total
            )));
        }
        let (n, line) = self.next_line("END")?;
        if line.trim_end() != "END" {
            return Err(parse_err(n, "expected END"));
        }
        Ok(cells)
    }
}

pub fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, FormatError> {
    s.parse()
        .map_err(|_| parse_err(line, format!("invalid number `{s}`")))
}
