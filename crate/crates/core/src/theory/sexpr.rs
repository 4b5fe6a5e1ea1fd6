//! Minimal S-expression reader for formula and value-expression strings.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom { text: String, offset: usize },
    List { items: Vec<SExpr>, offset: usize },
}

impl SExpr {
    pub fn offset(&self) -> usize {
        match self {
            SExpr::Atom { offset, .. } | SExpr::List { offset, .. } => *offset,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom { text, .. } => f.write_str(text),
            SExpr::List { items, .. } => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadError {
    pub offset: usize,
    pub message: String,
}

pub fn read(text: &str) -> Result<SExpr, ReadError> {
    let mut reader = Reader { text, pos: 0 };
    reader.skip_ws();
    let expr = reader.expr()?;
    reader.skip_ws();
    if reader.pos < text.len() {
        return Err(ReadError {
            offset: reader.pos,
            message: "trailing input after expression".into(),
        });
    }
    Ok(expr)
}

struct Reader<'a> {
    text: &'a str,
    pos: usize,
}

impl Reader<'_> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else if c == ';' {
                // comment to end of line
                while let Some(c) = self.peek() {
                    self.pos += c.len_utf8();
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expr(&mut self) -> Result<SExpr, ReadError> {
        let start = self.pos;
        match self.peek() {
            None => Err(ReadError {
                offset: start,
                message: "unexpected end of input".into(),
            }),
            Some('(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => {
                            return Err(ReadError {
                                offset: start,
                                message: "unbalanced '('".into(),
                            })
                        }
                        Some(')') => {
                            self.pos += 1;
                            return Ok(SExpr::List { items, offset: start });
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(')') => Err(ReadError {
                offset: start,
                message: "unexpected ')'".into(),
            }),
            Some(_) => {
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
                Ok(SExpr::Atom {
                    text: self.text[start..self.pos].to_string(),
                    offset: start,
                })
            }
        }
    }
}
