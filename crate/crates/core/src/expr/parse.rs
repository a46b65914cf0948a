use std::fmt;

use thiserror::Error;

use super::{Expr, Func};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken { found: String, expected: &'static str },
    UnexpectedEnd { expected: &'static str },
    UnknownIdentifier(String),
    InvalidNumber(String),
    InvalidExponent(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found:?}")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "expected {expected}, found end of input")
            }
            ParseErrorKind::UnknownIdentifier(id) => write!(f, "unknown identifier {id:?}"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number {s:?}"),
            ParseErrorKind::InvalidExponent(s) => {
                write!(f, "exponent must be a non-negative integer literal, found {s:?}")
            }
        }
    }
}

/// Syntax error with its byte offset and 1-based line/column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at line {line}, column {column} (offset {offset}): {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    text: String,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, (ParseErrorKind, usize)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            i += 1;
            out.push(Token {
                tok,
                text: src[start..i].to_string(),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            let mut integer = true;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                integer = false;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                integer = false;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| (ParseErrorKind::InvalidNumber(text.to_string()), start))?;
            if !value.is_finite() {
                return Err((ParseErrorKind::InvalidNumber(text.to_string()), start));
            }
            out.push(Token {
                tok: Tok::Num { value, integer },
                text: text.to_string(),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &src[start..i];
            out.push(Token {
                tok: Tok::Ident(text.to_string()),
                text: text.to_string(),
                offset: start,
            });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('\u{fffd}');
        return Err((ParseErrorKind::UnexpectedChar(ch), start));
    }
    out.push(Token {
        tok: Tok::End,
        text: String::new(),
        offset: src.len(),
    });
    Ok(out)
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    let first = digits.bytes().next()?;
    if !(b'1'..=b'9').contains(&first) || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, (ParseErrorKind, usize)>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &'static str) -> (ParseErrorKind, usize) {
        let t = self.peek();
        let kind = match t.tok {
            Tok::End => ParseErrorKind::UnexpectedEnd { expected },
            _ => ParseErrorKind::UnexpectedToken {
                found: t.text.clone(),
                expected,
            },
        };
        (kind, t.offset)
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> PResult<()> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        while self.peek().tok == Tok::Star {
            self.bump();
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let negate = if self.peek().tok == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let mut e = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let t = self.bump();
            let n = match t.tok {
                Tok::Num { integer: true, .. } => t
                    .text
                    .parse::<u32>()
                    .map_err(|_| (ParseErrorKind::InvalidExponent(t.text.clone()), t.offset))?,
                Tok::End => {
                    return Err((
                        ParseErrorKind::UnexpectedEnd {
                            expected: "integer exponent",
                        },
                        t.offset,
                    ))
                }
                _ => return Err((ParseErrorKind::InvalidExponent(t.text.clone()), t.offset)),
            };
            e = Expr::Pow(Box::new(e), n);
        }
        Ok(if negate { Expr::Neg(Box::new(e)) } else { e })
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num { value, .. } => {
                self.bump();
                Ok(Expr::Const(*value))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(i) = variable_index(name) {
                    return Ok(Expr::Var(i));
                }
                let func = Func::from_name(name)
                    .ok_or_else(|| (ParseErrorKind::UnknownIdentifier(name.clone()), t.offset))?;
                self.expect(Tok::LParen, "'(' after function name")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.unexpected("number, variable, function or '('")),
        }
    }
}

fn locate(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub(super) fn parse(src: &str) -> Result<Expr, ParseError> {
    let result = tokenize(src).and_then(|tokens| {
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
        };
        let e = p.expr()?;
        if p.peek().tok != Tok::End {
            return Err(p.unexpected("operator or end of input"));
        }
        Ok(e)
    });
    result.map_err(|(kind, offset)| {
        let (line, column) = locate(src, offset);
        ParseError {
            kind,
            offset,
            line,
            column,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(src: &str) -> ParseError {
        parse(src).unwrap_err()
    }

    #[test]
    fn trailing_operator() {
        let e = err("x1 +");
        assert_eq!(e.offset, 4);
        assert_eq!((e.line, e.column), (1, 5));
        assert!(matches!(e.kind, ParseErrorKind::UnexpectedEnd { .. }));
    }

    #[test]
    fn multi_line_position() {
        let e = err("x1 +\n  * x2");
        assert_eq!((e.line, e.column), (2, 3));
        assert_eq!(e.offset, 7);
    }

    #[test]
    fn unknown_identifiers() {
        for src in ["y + 1", "log(x1)", "x0", "x01", "relu(x1)", "abs(x1)"] {
            assert!(
                matches!(err(src).kind, ParseErrorKind::UnknownIdentifier(_)),
                "{src}"
            );
        }
    }

    #[test]
    fn exponent_rules() {
        for src in ["x1^2.5", "x1^-1", "x1^x2", "x1^1e2", "x1^99999999999"] {
            assert!(
                matches!(err(src).kind, ParseErrorKind::InvalidExponent(_)),
                "{src}"
            );
        }
        assert!(parse("x1^0").is_ok());
        // the grammar admits a single exponent per factor
        assert!(parse("x1^2^3").is_err());
    }

    #[test]
    fn excluded_operators() {
        assert!(matches!(err("x1 / x2").kind, ParseErrorKind::UnexpectedChar('/')));
        assert!(parse("--x1").is_err());
        assert!(parse("exp x1").is_err());
        assert!(parse("(x1").is_err());
        assert!(parse("x1)").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse(".25").unwrap(), Expr::Const(0.25));
        assert_eq!(parse("2.").unwrap(), Expr::Const(2.0));
        assert!(matches!(err("1e").kind, ParseErrorKind::InvalidNumber(_)));
        assert!(matches!(err("1e999").kind, ParseErrorKind::InvalidNumber(_)));
    }

    #[test]
    fn variables_are_one_based() {
        assert_eq!(parse("x12").unwrap(), Expr::Var(11));
    }
}
