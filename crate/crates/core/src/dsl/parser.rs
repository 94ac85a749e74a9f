use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr, Func, Scope, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    BadNumber(String),
    UnexpectedToken { found: String, expected: String },
    UnexpectedEnd { expected: String },
    UnknownIdentifier(String),
    Arity { func: String, expected: usize, found: usize },
    NotInScope(String),
}

/// Parse failure with the byte offset into the source where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: ", self.offset)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number `{s}`"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found `{found}`")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "expected {expected}, found end of input")
            }
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ParseErrorKind::Arity {
                func,
                expected,
                found,
            } => write!(f, "`{func}` takes {expected} argument(s), got {found}"),
            ParseErrorKind::NotInScope(s) => write!(f, "variable `{s}` is not available here"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' | '−' => Some(Tok::Minus),
            '*' | '·' | '×' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push((tok, pos));
            chars.next();
        } else if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = pos;
            let mut prev = ' ';
            while let Some(&(p, ch)) = chars.peek() {
                let exp_sign = (ch == '+' || ch == '-') && (prev == 'e' || prev == 'E');
                if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                    end = p + ch.len_utf8();
                    prev = ch;
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[pos..end];
            let v: f64 = text.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::BadNumber(text.to_string()),
                offset: pos,
            })?;
            out.push((Tok::Num(v), pos));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = pos;
            while let Some(&(p, ch)) = chars.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' {
                    end = p + ch.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(src[pos..end].to_string()), pos));
        } else {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar(c),
                offset: pos,
            });
        }
    }
    Ok(out)
}

fn indexed(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse::<usize>().ok().map(|i| i - 1)
}

fn variable(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "y" => return Some(Var::Y),
        "znorm" => return Some(Var::ZNorm),
        "unorm" => return Some(Var::UNorm),
        _ => {}
    }
    indexed(name, 'z')
        .map(Var::Z)
        .or_else(|| indexed(name, 'u').map(Var::U))
        .or_else(|| indexed(name, 'w').map(Var::W))
        .or_else(|| indexed(name, 'n').map(Var::N))
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    scope: Option<&'s Scope>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        let kind = match self.peek() {
            Some(t) => ParseErrorKind::UnexpectedToken {
                found: t.describe(),
                expected: expected.into(),
            },
            None => ParseErrorKind::UnexpectedEnd {
                expected: expected.into(),
            },
        };
        Err(ParseError {
            kind,
            offset: self.offset(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`,` or `)`")?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            kind: ParseErrorKind::Arity {
                                func: name,
                                expected: func.arity(),
                                found: args.len(),
                            },
                            offset,
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                let Some(var) = variable(&name) else {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name),
                        offset,
                    });
                };
                if let Some(scope) = self.scope {
                    if !scope.admits(var) {
                        return Err(ParseError {
                            kind: ParseErrorKind::NotInScope(name),
                            offset,
                        });
                    }
                }
                Ok(Expr::Var(var))
            }
            _ => self.fail("a number, variable, function or `(`"),
        }
    }
}

fn run(src: &str, scope: Option<&Scope>) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
        scope,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

/// Parses without restricting which variables may appear.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    run(src, None)
}

/// Parses and rejects variables outside `scope`, reporting their offset.
pub fn parse_expr_in(src: &str, scope: &Scope) -> Result<Expr, ParseError> {
    run(src, Some(scope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Env;

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), -4.0);
        let e = parse_expr("8 / 2 / 2").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), 2.0);
        let e = parse_expr("2 + 3 * -4").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), -10.0);
        let e = parse_expr("--2").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), 2.0);
    }

    #[test]
    fn unicode_aliases() {
        let e = parse_expr("2·3 × 4 − 1").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), 23.0);
    }

    #[test]
    fn exponents() {
        let e = parse_expr("1e-3 + 2.5E2").unwrap();
        assert_eq!(e.eval(&Env::at_time(0.0)).unwrap(), 250.001);
    }

    #[test]
    fn unknown_identifier_offset() {
        let err = parse_expr("y + foo(1)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        let err = parse_expr("z0").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("z0".into()));
    }

    #[test]
    fn arity_is_checked() {
        let err = parse_expr("y + max(y)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(matches!(err.kind, ParseErrorKind::Arity { expected: 2, found: 1, .. }));
    }

    #[test]
    fn lexical_and_syntax_errors() {
        let err = parse_expr("y $ 2").unwrap_err();
        assert_eq!((err.kind, err.offset), (ParseErrorKind::UnexpectedChar('$'), 2));
        let err = parse_expr("(y + 1").unwrap_err();
        assert_eq!(err.offset, 6);
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEnd { .. }));
        let err = parse_expr("y y").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = parse_expr("1..2").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BadNumber(_)));
    }

    #[test]
    fn scope_offsets() {
        let err = parse_expr_in("t + y", &Scope::barrier(1)).unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::NotInScope("y".into()));
        let err = parse_expr_in("w2", &Scope::barrier(1)).unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(parse_expr_in("min(w1, 0) - 0.1", &Scope::barrier(1)).is_ok());
    }
}
