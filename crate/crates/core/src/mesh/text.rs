//! Whitespace tokens with line numbers, shared by the text readers.

use super::MeshError;

pub(crate) struct Tokens<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    line: usize,
    col: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    /// Splits `text` into lines, dropping `#` comments and blank lines.
    /// The first `skip` physical lines are left out entirely.
    pub fn new(text: &'a str, skip: usize) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .skip(skip)
            .filter_map(|(i, l)| {
                let body = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = body.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Tokens { lines, line: 0, col: 0, last_line: 0 }
    }

    pub fn error(&self, message: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.last_line, message: message.into() }
    }

    pub fn at_end(&self) -> bool {
        self.line >= self.lines.len()
    }

    /// Line number of the next token, or of the last line at the end.
    pub fn line_no(&self) -> usize {
        self.lines.get(self.line).map_or(self.last_line, |l| l.0)
    }

    pub fn next(&mut self, what: &str) -> Result<&'a str, MeshError> {
        let Some((no, toks)) = self.lines.get(self.line) else {
            return Err(self.error(format!("unexpected end of file, expected {what}")));
        };
        let t = toks[self.col];
        self.last_line = *no;
        self.col += 1;
        if self.col == toks.len() {
            self.line += 1;
            self.col = 0;
        }
        Ok(t)
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.line).map(|(_, t)| t[self.col])
    }

    /// The remaining tokens of the current line.
    pub fn rest_of_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshError> {
        let Some((no, toks)) = self.lines.get(self.line) else {
            return Err(self.error(format!("unexpected end of file, expected {what}")));
        };
        let out = toks[self.col..].to_vec();
        self.last_line = *no;
        self.line += 1;
        self.col = 0;
        Ok((*no, out))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize, MeshError> {
        let t = self.next(what)?;
        t.parse().map_err(|_| self.error(format!("expected {what}, found `{t}`")))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64, MeshError> {
        let t = self.next(what)?;
        parse_f64(t).ok_or_else(|| self.error(format!("expected {what}, found `{t}`")))
    }

    pub fn expect(&mut self, keyword: &str) -> Result<(), MeshError> {
        let t = self.next(keyword)?;
        if t.eq_ignore_ascii_case(keyword) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{keyword}`, found `{t}`")))
        }
    }
}

pub(crate) fn parse_f64(t: &str) -> Option<f64> {
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}
