use thiserror::Error;

use super::{LogicalForm, Result};
use crate::scene::AttributeSchema;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Word(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Tok::Word(&text[start..i])));
            }
        }
    }
    out
}

struct Parser<'a, 's> {
    tokens: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
    schema: &'s AttributeSchema,
}

impl<'a> Parser<'a, '_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            offset,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        let t = self.tokens.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn expect_close(&mut self) -> std::result::Result<(), ParseError> {
        match self.next() {
            Some((_, Tok::Close)) => Ok(()),
            Some((off, _)) => Err(self.err(off, "expected ')'")),
            None => Err(self.err(self.end, "unbalanced parentheses: missing ')'")),
        }
    }

    fn form(&mut self) -> std::result::Result<LogicalForm, ParseError> {
        match self.next() {
            Some((_, Tok::Open)) => {}
            Some((off, Tok::Close)) => return Err(self.err(off, "unexpected ')'")),
            Some((off, Tok::Word(w))) => return Err(self.err(off, format!("expected '(' before {w:?}"))),
            None => return Err(self.err(self.end, "unexpected end of input")),
        }
        let (head_off, head) = match self.next() {
            Some((off, Tok::Word(w))) => (off, w),
            Some((off, _)) => return Err(self.err(off, "expected an operator or attribute name")),
            None => return Err(self.err(self.end, "unbalanced parentheses: missing ')'")),
        };
        let form = match head {
            "not" => LogicalForm::not(self.form()?),
            "and" | "or" => {
                let l = self.form()?;
                let r = self.form()?;
                if head == "and" {
                    LogicalForm::and(l, r)
                } else {
                    LogicalForm::or(l, r)
                }
            }
            attr => {
                let Some(a) = self.schema.attribute_index(attr) else {
                    let what = if matches!(self.tokens.get(self.pos), Some((_, Tok::Open))) {
                        "unknown operator"
                    } else {
                        "unknown attribute"
                    };
                    return Err(self.err(head_off, format!("{what} {attr:?}")));
                };
                let (val_off, value) = match self.next() {
                    Some((off, Tok::Word(w))) => (off, w),
                    Some((off, _)) => return Err(self.err(off, "expected a value name")),
                    None => return Err(self.err(self.end, "unbalanced parentheses: missing ')'")),
                };
                if self.schema.value_index(a, value).is_none() {
                    return Err(self.err(
                        val_off,
                        format!("unknown value {value:?} for attribute {attr:?}"),
                    ));
                }
                LogicalForm::atom(attr, value)
            }
        };
        self.expect_close()?;
        Ok(form)
    }
}

/// Parses the s-expression syntax produced by [`super::print`].
pub fn parse(text: &str, schema: &AttributeSchema) -> Result<LogicalForm> {
    let mut p = Parser {
        tokens: tokenize(text),
        pos: 0,
        end: text.len(),
        schema,
    };
    let form = p.form()?;
    if let Some(&(off, _)) = p.tokens.get(p.pos) {
        return Err(p.err(off, "trailing tokens").into());
    }
    Ok(form)
}
