use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Identifier or keyword, lowercased.
    Word(String),
    Int(i64),
    Float(f64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Semicolon,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|&(i, _)| i).unwrap_or(self.src.len())
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let mut cur = Cursor { chars: src.char_indices().peekable(), src, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        let (line, col) = (cur.line, cur.col);
        let err = |msg: String| SqlError::Syntax { line, col, message: msg };
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, line, col });
            return Ok(out);
        };
        let tok = match c {
            '-' if cur.peek2() == Some('-') => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = cur.offset();
                while cur.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    cur.bump();
                }
                let end = cur.offset();
                Tok::Word(src[start..end].to_ascii_lowercase())
            }
            c if c.is_ascii_digit() || (c == '.' && cur.peek2().is_some_and(|d| d.is_ascii_digit())) => {
                lex_number(&mut cur).map_err(err)?
            }
            '\'' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(err("unterminated string literal".into())),
                        Some('\'') if cur.peek() == Some('\'') => {
                            cur.bump();
                            s.push('\'');
                        }
                        Some('\'') => break,
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            _ => {
                cur.bump();
                match c {
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '*' => Tok::Star,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '/' => Tok::Slash,
                    '%' => Tok::Percent,
                    ';' => Tok::Semicolon,
                    '=' => Tok::Eq,
                    '!' if cur.peek() == Some('=') => {
                        cur.bump();
                        Tok::NotEq
                    }
                    '<' => match cur.peek() {
                        Some('=') => {
                            cur.bump();
                            Tok::LtEq
                        }
                        Some('>') => {
                            cur.bump();
                            Tok::NotEq
                        }
                        _ => Tok::Lt,
                    },
                    '>' if cur.peek() == Some('=') => {
                        cur.bump();
                        Tok::GtEq
                    }
                    '>' => Tok::Gt,
                    other => return Err(err(format!("unexpected character {other:?}"))),
                }
            }
        };
        out.push(Token { tok, line, col });
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<Tok, String> {
    let start = cur.offset();
    let mut is_float = false;
    while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
        cur.bump();
    }
    if cur.peek() == Some('.') {
        is_float = true;
        cur.bump();
        while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            cur.bump();
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let exp_ok = match cur.peek2() {
            Some(d) if d.is_ascii_digit() => true,
            Some('+' | '-') => {
                let mut it = cur.chars.clone();
                it.next();
                it.next();
                it.next().is_some_and(|(_, d)| d.is_ascii_digit())
            }
            _ => false,
        };
        if exp_ok {
            is_float = true;
            cur.bump();
            if matches!(cur.peek(), Some('+' | '-')) {
                cur.bump();
            }
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
    let end = cur.offset();
    let text = &cur.src[start..end];
    if is_float {
        text.parse::<f64>().map(Tok::Float).map_err(|e| format!("bad number {text:?}: {e}"))
    } else {
        text.parse::<i64>().map(Tok::Int).map_err(|e| format!("bad integer {text:?}: {e}"))
    }
}
