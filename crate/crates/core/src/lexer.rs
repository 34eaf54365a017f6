use crate::ast::Span;
use crate::crypto::Digest;
use crate::parser::ParseError;
use crate::value::unescape;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(u64),
    Str(Vec<u8>),
    Digest(Digest),
    // keywords
    Input,
    IntTy,
    StringTy,
    Let,
    If,
    Else,
    Accept,
    Reject,
    // builtins
    Contains,
    Length,
    Substring,
    HashEq,
    HashContains,
    // punctuation
    Semi,
    Colon,
    Comma,
    Assign,
    LParen,
    RParen,
    LBrace,
    RBrace,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Digest(_) => "digest literal".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Input => "input",
            Tok::IntTy => "int",
            Tok::StringTy => "string",
            Tok::Let => "let",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::Accept => "accept",
            Tok::Reject => "reject",
            Tok::Contains => "contains",
            Tok::Length => "length",
            Tok::Substring => "substring",
            Tok::HashEq => "hash_eq",
            Tok::HashContains => "hash_contains",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Assign => "=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            Tok::Ident(_) | Tok::Int(_) | Tok::Str(_) | Tok::Digest(_) | Tok::Eof => "",
        }
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "input" => Tok::Input,
        "int" => Tok::IntTy,
        "string" => Tok::StringTy,
        "let" => Tok::Let,
        "if" => Tok::If,
        "else" => Tok::Else,
        "accept" => Tok::Accept,
        "reject" => Tok::Reject,
        "contains" => Tok::Contains,
        "length" => Tok::Length,
        "substring" => Tok::Substring,
        "hash_eq" => Tok::HashEq,
        "hash_contains" => Tok::HashContains,
        _ => return None,
    })
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    Lexer {
        src: src.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    }
    .run()
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl Lexer<'_> {
    fn run(mut self) -> Result<Vec<(Tok, Span)>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let start = self.here();
            let Some(&c) = self.src.get(self.pos) else {
                out.push((Tok::Eof, start));
                return Ok(out);
            };
            let tok = match c {
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => self.word(start)?,
                b'0'..=b'9' => self.int(start)?,
                b'"' => Tok::Str(self.quoted(start)?),
                _ => self.punct(start)?,
            };
            let span = Span {
                len: self.pos - start.offset,
                ..start
            };
            out.push((tok, span));
        }
    }

    fn here(&self) -> Span {
        Span {
            line: self.line,
            column: self.col,
            offset: self.pos,
            len: 0,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if c & 0xc0 != 0x80 {
            // columns count characters, not UTF-8 continuation bytes
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b'/' && self.src.get(self.pos + 1) == Some(&b'/') {
                while self.src.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn error(&self, at: Span, message: impl Into<String>) -> ParseError {
        let len = self.pos.saturating_sub(at.offset).max(1);
        let len = len.min(self.src.len().saturating_sub(at.offset));
        ParseError::new(message, Span { len, ..at })
    }

    fn word(&mut self, start: Span) -> Result<Tok, ParseError> {
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.bump();
        }
        let word = std::str::from_utf8(&self.src[start.offset..self.pos]).expect("ascii word");
        if word == "digest" && self.src.get(self.pos) == Some(&b'"') {
            let body = self.quoted(start)?;
            let text = String::from_utf8(body)
                .map_err(|_| self.error(start, "digest literal is not valid text"))?;
            return text
                .parse::<Digest>()
                .map(Tok::Digest)
                .map_err(|e| self.error(start, e.to_string()));
        }
        if word == "digest" {
            return Err(self.error(start, "`digest` must be immediately followed by a quoted literal"));
        }
        Ok(keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string())))
    }

    fn int(&mut self, start: Span) -> Result<Tok, ParseError> {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.bump();
        }
        if self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_')
        {
            return Err(self.error(start, "identifiers cannot start with a digit"));
        }
        let text = std::str::from_utf8(&self.src[start.offset..self.pos]).expect("ascii digits");
        text.parse::<u64>()
            .map(Tok::Int)
            .map_err(|_| self.error(start, format!("integer literal {text} does not fit in 64 bits")))
    }

    /// Reads a double-quoted literal starting at the current `"`, returning the
    /// unescaped bytes.
    fn quoted(&mut self, start: Span) -> Result<Vec<u8>, ParseError> {
        self.bump();
        let body_start = self.pos;
        loop {
            match self.bump() {
                None => return Err(self.error(start, "unterminated string literal")),
                Some(b'"') => break,
                Some(b'\\') => {
                    if self.bump().is_none() {
                        return Err(self.error(start, "unterminated string literal"));
                    }
                }
                Some(b'\n') => return Err(self.error(start, "newline in string literal")),
                Some(_) => {}
            }
        }
        let raw = std::str::from_utf8(&self.src[body_start..self.pos - 1])
            .expect("slice of valid UTF-8 between ASCII quotes");
        unescape(raw).map_err(|e| self.error(start, e))
    }

    fn punct(&mut self, start: Span) -> Result<Tok, ParseError> {
        let c = self.bump().expect("caller checked");
        let next = self.src.get(self.pos).copied();
        let two = |lexer: &mut Self, tok| {
            lexer.bump();
            Ok(tok)
        };
        match (c, next) {
            (b'=', Some(b'=')) => two(self, Tok::EqEq),
            (b'!', Some(b'=')) => two(self, Tok::NotEq),
            (b'<', Some(b'=')) => two(self, Tok::Le),
            (b'>', Some(b'=')) => two(self, Tok::Ge),
            (b'&', Some(b'&')) => two(self, Tok::AndAnd),
            (b'|', Some(b'|')) => two(self, Tok::OrOr),
            (b'=', _) => Ok(Tok::Assign),
            (b'!', _) => Ok(Tok::Bang),
            (b'<', _) => Ok(Tok::Lt),
            (b'>', _) => Ok(Tok::Gt),
            (b';', _) => Ok(Tok::Semi),
            (b':', _) => Ok(Tok::Colon),
            (b',', _) => Ok(Tok::Comma),
            (b'(', _) => Ok(Tok::LParen),
            (b')', _) => Ok(Tok::RParen),
            (b'{', _) => Ok(Tok::LBrace),
            (b'}', _) => Ok(Tok::RBrace),
            _ => {
                // consume the rest of a multi-byte character so the span is whole
                while self.src.get(self.pos).is_some_and(|b| b & 0xc0 == 0x80) {
                    self.bump();
                }
                let shown = String::from_utf8_lossy(&self.src[start.offset..self.pos]).into_owned();
                Err(self.error(start, format!("unexpected character {shown:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|(t, _)| t).collect()
    }

    #[test]
    fn operators_and_keywords() {
        assert_eq!(
            toks("if (x <= 3 && !y) // comment\n{ reject; }"),
            vec![
                Tok::If,
                Tok::LParen,
                Tok::Ident("x".into()),
                Tok::Le,
                Tok::Int(3),
                Tok::AndAnd,
                Tok::Bang,
                Tok::Ident("y".into()),
                Tok::RParen,
                Tok::LBrace,
                Tok::Reject,
                Tok::Semi,
                Tok::RBrace,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn spans_track_lines() {
        let tokens = tokenize("input\n  x").unwrap();
        assert_eq!(tokens[1].1, Span { line: 2, column: 3, offset: 8, len: 1 });
    }

    #[test]
    fn string_escapes() {
        assert_eq!(toks(r#""a\x00\"\\""#)[0], Tok::Str(b"a\0\"\\".to_vec()));
    }

    #[test]
    fn lexical_errors() {
        for bad in [
            "\"open",
            "18446744073709551616",
            "1abc",
            "a & b",
            "é",
            "digest x",
            "digest\"md5:00\"",
            "\"\\q\"",
        ] {
            let err = tokenize(bad).unwrap_err();
            assert!(err.span.end() <= bad.len(), "{bad}: {err:?}");
        }
    }
}
