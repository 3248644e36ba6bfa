//! Tokenizer for MiniLang source text.

use std::fmt;

use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// Unsigned magnitude; the sign is applied by the parser so that
    /// `-9223372036854775808` can be written.
    Int(u64),
    Class,
    Var,
    Fn,
    Init,
    New,
    This,
    If,
    Else,
    While,
    Return,
    True,
    False,
    TyInt,
    TyBool,
    TyVoid,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    Dot,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
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

impl TokenKind {
    /// Source spelling, used for normalized token streams.
    pub fn text(&self) -> String {
        use TokenKind::*;
        let s = match self {
            Ident(name) => return name.clone(),
            Int(v) => return v.to_string(),
            Class => "class",
            Var => "var",
            Fn => "fn",
            Init => "init",
            New => "new",
            This => "this",
            If => "if",
            Else => "else",
            While => "while",
            Return => "return",
            True => "true",
            False => "false",
            TyInt => "int",
            TyBool => "bool",
            TyVoid => "void",
            LBrace => "{",
            RBrace => "}",
            LParen => "(",
            RParen => ")",
            Semi => ";",
            Colon => ":",
            Comma => ",",
            Dot => ".",
            Assign => "=",
            Plus => "+",
            Minus => "-",
            Star => "*",
            Slash => "/",
            Percent => "%",
            EqEq => "==",
            NotEq => "!=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            AndAnd => "&&",
            OrOr => "||",
            Bang => "!",
            Eof => "<eof>",
        };
        s.to_string()
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// A token with its 1-based line/column and byte range in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

fn keyword(word: &str) -> Option<TokenKind> {
    use TokenKind::*;
    Some(match word {
        "class" => Class,
        "var" => Var,
        "fn" => Fn,
        "init" => Init,
        "new" => New,
        "this" => This,
        "if" => If,
        "else" => Else,
        "while" => While,
        "return" => Return,
        "true" => True,
        "false" => False,
        "int" => TyInt,
        "bool" => TyBool,
        "void" => TyVoid,
        _ => return None,
    })
}

/// Tokenizes one file. Whitespace and `//` / `/* */` comments are dropped.
pub fn tokenize(file: &str, text: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;

    while i < bytes.len() {
        let c = bytes[i];
        let col = (i - line_start) as u32 + 1;
        match c {
            b'\n' => {
                line += 1;
                i += 1;
                line_start = i;
            }
            b' ' | b'\t' | b'\r' => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let (open_line, open_col) = (line, col);
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(Diagnostic::syntax(
                            file,
                            open_line,
                            open_col,
                            "unterminated block comment",
                        ));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                        line_start = i + 1;
                    }
                    i += 1;
                }
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let digits = &text[start..i];
                let value: u64 = digits.parse().map_err(|_| {
                    Diagnostic::syntax(file, line, col, format!("integer literal {digits} out of range"))
                })?;
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                    return Err(Diagnostic::syntax(file, line, col, "malformed number"));
                }
                tokens.push(Token { kind: TokenKind::Int(value), line, col, start, end: i });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let kind = keyword(word).unwrap_or_else(|| TokenKind::Ident(word.to_string()));
                tokens.push(Token { kind, line, col, start, end: i });
            }
            _ => {
                use TokenKind::*;
                let next = bytes.get(i + 1).copied();
                let (kind, width) = match (c, next) {
                    (b'=', Some(b'=')) => (EqEq, 2),
                    (b'!', Some(b'=')) => (NotEq, 2),
                    (b'<', Some(b'=')) => (Le, 2),
                    (b'>', Some(b'=')) => (Ge, 2),
                    (b'&', Some(b'&')) => (AndAnd, 2),
                    (b'|', Some(b'|')) => (OrOr, 2),
                    (b'{', _) => (LBrace, 1),
                    (b'}', _) => (RBrace, 1),
                    (b'(', _) => (LParen, 1),
                    (b')', _) => (RParen, 1),
                    (b';', _) => (Semi, 1),
                    (b':', _) => (Colon, 1),
                    (b',', _) => (Comma, 1),
                    (b'.', _) => (Dot, 1),
                    (b'=', _) => (Assign, 1),
                    (b'+', _) => (Plus, 1),
                    (b'-', _) => (Minus, 1),
                    (b'*', _) => (Star, 1),
                    (b'/', _) => (Slash, 1),
                    (b'%', _) => (Percent, 1),
                    (b'<', _) => (Lt, 1),
                    (b'>', _) => (Gt, 1),
                    (b'!', _) => (Bang, 1),
                    _ => {
                        let ch = text[i..].chars().next().unwrap_or('?');
                        return Err(Diagnostic::syntax(
                            file,
                            line,
                            col,
                            format!("unexpected character {ch:?}"),
                        ));
                    }
                };
                tokens.push(Token { kind, line, col, start: i, end: i + width });
                i += width;
            }
        }
    }
    let col = (bytes.len() - line_start) as u32 + 1;
    tokens.push(Token { kind: TokenKind::Eof, line, col, start: bytes.len(), end: bytes.len() });
    Ok(tokens)
}
