use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    /// Magnitude only; a leading `-` is a separate token.
    Int(u64),
    Float(f64),
    Str(String),
    Ident(String),
    /// `$name` inside textual predicates.
    Dollar(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Dot,
    Assign,
    ColonAssign,
    PlusAssign,
    MinusAssign,
    Arrow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Newline,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Int(i) => return write!(f, "{i}"),
            TokenKind::Float(x) => return write!(f, "{x:?}"),
            TokenKind::Str(s) => return write!(f, "{s:?}"),
            TokenKind::Ident(s) => return write!(f, "`{s}`"),
            TokenKind::Dollar(s) => return write!(f, "${s}"),
            TokenKind::LParen => "`(`",
            TokenKind::RParen => "`)`",
            TokenKind::LBracket => "`[`",
            TokenKind::RBracket => "`]`",
            TokenKind::LBrace => "`{`",
            TokenKind::RBrace => "`}`",
            TokenKind::Comma => "`,`",
            TokenKind::Colon => "`:`",
            TokenKind::Semi => "`;`",
            TokenKind::Dot => "`.`",
            TokenKind::Assign => "`=`",
            TokenKind::ColonAssign => "`:=`",
            TokenKind::PlusAssign => "`+=`",
            TokenKind::MinusAssign => "`-=`",
            TokenKind::Arrow => "`=>`",
            TokenKind::Eq => "`==`",
            TokenKind::Ne => "`!=`",
            TokenKind::Lt => "`<`",
            TokenKind::Le => "`<=`",
            TokenKind::Gt => "`>`",
            TokenKind::Ge => "`>=`",
            TokenKind::Plus => "`+`",
            TokenKind::Minus => "`-`",
            TokenKind::Star => "`*`",
            TokenKind::Slash => "`/`",
            TokenKind::Newline => "end of line",
            TokenKind::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

/// Splits `src` into tokens. Newlines inside brackets are dropped so that
/// calls may span lines; elsewhere they end statements.
pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |kind: TokenKind, width: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                kind,
                line: tl,
                column: tc,
            });
            *i += width;
            *col += width;
        };
        match c {
            '\n' => {
                if depth == 0 {
                    out.push(Token {
                        kind: TokenKind::Newline,
                        line,
                        column: col,
                    });
                }
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                    is_float = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        is_float = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let kind = if is_float {
                    TokenKind::Float(text.parse().map_err(|_| {
                        Error::parse(tl, tc, format!("malformed number {text}"))
                    })?)
                } else {
                    TokenKind::Int(text.parse().map_err(|_| {
                        Error::parse(tl, tc, format!("integer literal {text} is too large"))
                    })?)
                };
                out.push(Token {
                    kind,
                    line: tl,
                    column: tc,
                });
                col += i - start;
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(Error::parse(tl, tc, "unterminated string literal"))
                        }
                        Some(&ch) if ch == quote => break,
                        Some('\\') => {
                            let esc = chars.get(j + 1).copied();
                            s.push(match esc {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('\\') => '\\',
                                Some('"') => '"',
                                Some('\'') => '\'',
                                _ => {
                                    return Err(Error::parse(
                                        line,
                                        col + (j - i),
                                        "unknown escape sequence",
                                    ))
                                }
                            });
                            j += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                out.push(Token {
                    kind: TokenKind::Str(s),
                    line: tl,
                    column: tc,
                });
                col += j + 1 - i;
                i = j + 1;
            }
            c if c.is_alphabetic() || c == '_' || c == '$' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let kind = if let Some(name) = text.strip_prefix('$') {
                    if name.is_empty() {
                        return Err(Error::parse(tl, tc, "expected a parameter name after `$`"));
                    }
                    TokenKind::Dollar(name.to_string())
                } else {
                    TokenKind::Ident(text)
                };
                out.push(Token {
                    kind,
                    line: tl,
                    column: tc,
                });
                col += i - start;
            }
            _ => {
                let next = chars.get(i + 1).copied();
                let (kind, width) = match (c, next) {
                    ('=', Some('=')) => (TokenKind::Eq, 2),
                    ('=', Some('>')) => (TokenKind::Arrow, 2),
                    ('!', Some('=')) => (TokenKind::Ne, 2),
                    ('<', Some('=')) => (TokenKind::Le, 2),
                    ('>', Some('=')) => (TokenKind::Ge, 2),
                    (':', Some('=')) => (TokenKind::ColonAssign, 2),
                    ('+', Some('=')) => (TokenKind::PlusAssign, 2),
                    ('-', Some('=')) => (TokenKind::MinusAssign, 2),
                    ('=', _) => (TokenKind::Assign, 1),
                    ('<', _) => (TokenKind::Lt, 1),
                    ('>', _) => (TokenKind::Gt, 1),
                    (':', _) => (TokenKind::Colon, 1),
                    ('+', _) => (TokenKind::Plus, 1),
                    ('-', _) => (TokenKind::Minus, 1),
                    ('*', _) => (TokenKind::Star, 1),
                    ('/', _) => (TokenKind::Slash, 1),
                    (',', _) => (TokenKind::Comma, 1),
                    (';', _) => (TokenKind::Semi, 1),
                    ('.', _) => (TokenKind::Dot, 1),
                    ('(', _) => (TokenKind::LParen, 1),
                    (')', _) => (TokenKind::RParen, 1),
                    ('[', _) => (TokenKind::LBracket, 1),
                    (']', _) => (TokenKind::RBracket, 1),
                    ('{', _) => (TokenKind::LBrace, 1),
                    ('}', _) => (TokenKind::RBrace, 1),
                    _ => return Err(Error::parse(tl, tc, format!("unexpected character {c:?}"))),
                };
                match kind {
                    TokenKind::LParen | TokenKind::LBracket | TokenKind::LBrace => depth += 1,
                    TokenKind::RParen | TokenKind::RBracket | TokenKind::RBrace => {
                        depth = depth.saturating_sub(1)
                    }
                    _ => {}
                }
                push(kind, width, &mut i, &mut col);
            }
        }
    }
    out.push(Token {
        kind: TokenKind::Eof,
        line,
        column: col,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numbers_and_members() {
        assert_eq!(
            kinds("t.age 1.5 2e3 7"),
            vec![
                TokenKind::Ident("t".into()),
                TokenKind::Dot,
                TokenKind::Ident("age".into()),
                TokenKind::Float(1.5),
                TokenKind::Float(2000.0),
                TokenKind::Int(7),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn newlines_inside_brackets_are_dropped() {
        let k = kinds("f(a,\n b)\nx");
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Newline).count(), 1);
    }

    #[test]
    fn strings_and_comments() {
        assert_eq!(
            kinds("'a\\'b' \"c\" # note"),
            vec![
                TokenKind::Str("a'b".into()),
                TokenKind::Str("c".into()),
                TokenKind::Eof
            ]
        );
        assert!(tokenize("\"open").is_err());
    }

    #[test]
    fn positions() {
        let toks = tokenize("a\n  bb").unwrap();
        assert_eq!((toks[2].line, toks[2].column), (2, 3));
    }
}
