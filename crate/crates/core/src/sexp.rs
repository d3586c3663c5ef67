//! Minimal s-expression reader with source positions.
//!
//! Used for the native problem format, SyGuS files, witness files and the
//! solver's replies. `|quoted|` symbols lose their bars; `"strings"` are kept
//! as a separate atom kind so that `(error "...")` replies can be reported.

use std::fmt;

use thiserror::Error;

/// Line/column of a token, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SexpKind {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub pos: Pos,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{pos}: {msg}")]
pub struct SexpError {
    pub pos: Pos,
    pub msg: String,
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Atom(s) => Some(s),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// Head symbol of a non-empty list whose first element is an atom.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(Sexp::atom)
    }

    pub fn is_atom(&self, s: &str) -> bool {
        self.atom() == Some(s)
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SexpKind::Atom(s) => f.write_str(s),
            SexpKind::Str(s) => write!(f, "\"{}\"", s),
            SexpKind::List(items) => {
                f.write_str("(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{}", it)?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn err<T>(&self, pos: Pos, msg: impl Into<String>) -> Result<T, SexpError> {
        Err(SexpError {
            pos,
            msg: msg.into(),
        })
    }

    fn read(&mut self) -> Result<Option<Sexp>, SexpError> {
        self.skip_ws();
        let pos = self.pos;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => return self.err(pos, "unclosed parenthesis"),
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => {
                            // read() only returns None at end of input, handled above
                            items.extend(self.read()?);
                        }
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::List(items),
                    pos,
                }))
            }
            ')' => self.err(pos, "unexpected `)`"),
            '|' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return self.err(pos, "unterminated quoted symbol"),
                        Some('|') => break,
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Atom(s),
                    pos,
                }))
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return self.err(pos, "unterminated string"),
                        Some('"') => {
                            // SMT-LIB escapes a quote by doubling it
                            if self.chars.peek() == Some(&'"') {
                                self.bump();
                                s.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Str(s),
                    pos,
                }))
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '|' || c == '"'
                    {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Atom(s),
                    pos,
                }))
            }
        }
    }
}

/// Parses every top-level s-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut r = Reader::new(text);
    let mut out = Vec::new();
    while let Some(s) = r.read()? {
        out.push(s);
    }
    Ok(out)
}

/// Parses exactly one s-expression.
pub fn parse_one(text: &str) -> Result<Sexp, SexpError> {
    let mut all = parse_all(text)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        0 => Err(SexpError {
            pos: Pos { line: 1, col: 1 },
            msg: "empty input".into(),
        }),
        _ => Err(SexpError {
            pos: all[1].pos,
            msg: "trailing input after s-expression".into(),
        }),
    }
}

/// True when `text` contains at least one complete top-level s-expression
/// and no unclosed list. Used to frame multi-line solver replies.
pub(crate) fn is_balanced(text: &str) -> bool {
    let mut depth = 0i64;
    let mut in_bar = false;
    let mut in_str = false;
    let mut in_comment = false;
    let mut seen = false;
    for c in text.chars() {
        if in_comment {
            in_comment = c != '\n';
            continue;
        }
        if in_bar {
            in_bar = c != '|';
            continue;
        }
        if in_str {
            in_str = c != '"';
            continue;
        }
        match c {
            ';' => in_comment = true,
            '|' => {
                in_bar = true;
                seen = true
            }
            '"' => {
                in_str = true;
                seen = true
            }
            '(' => {
                depth += 1;
                seen = true
            }
            ')' => depth -= 1,
            c if !c.is_whitespace() => seen = true,
            _ => {}
        }
    }
    seen && depth <= 0 && !in_bar && !in_str
}

/// Renders a symbol, quoting it with bars when it is not a simple SMT-LIB symbol.
pub fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name)
    }
}
