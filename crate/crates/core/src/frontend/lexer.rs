use super::{Diagnostic, Pos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `$name`
    System(String),
    Number { width: Option<u32>, value: u64 },
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

// Longest first.
const PUNCTS: &[&str] = &[
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "[", "]", "{", "}", ";", ",", ":",
    ".", "@", "#", "=", "!", "~", "&", "|", "^", "+", "-", "*", "<", ">", "?", "/", "%",
];

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    }
    .run()
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, pos: Pos, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(pos, msg)
    }

    fn run(mut self) -> Result<Vec<Token>, Diagnostic> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let pos = self.pos();
            let Some(c) = self.peek(0) else {
                out.push(Token { tok: Tok::Eof, pos });
                return Ok(out);
            };
            let tok = if is_ident_start(c) {
                Tok::Ident(self.take_while(is_ident_char))
            } else if c == '\\' {
                self.bump();
                let name = self.take_while(|c| !c.is_whitespace());
                if name.is_empty() {
                    return Err(self.err(pos, "empty escaped identifier"));
                }
                Tok::Ident(name)
            } else if c == '$' {
                self.bump();
                let name = self.take_while(is_ident_char);
                if name.is_empty() {
                    return Err(self.err(pos, "expected system task name after '$'"));
                }
                Tok::System(format!("${name}"))
            } else if c.is_ascii_digit() || c == '\'' {
                self.number(pos)?
            } else if c == '"' {
                self.string(pos)?
            } else {
                let rest: String = self.chars[self.i..self.chars.len().min(self.i + 2)]
                    .iter()
                    .collect();
                let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                    return Err(self.err(pos, format!("unexpected character '{c}'")));
                };
                for _ in 0..p.len() {
                    self.bump();
                }
                Tok::Punct(p)
            };
            out.push(Token { tok, pos });
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            if !f(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn skip_trivia(&mut self) -> Result<(), Diagnostic> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(c), _) if c.is_whitespace() => {
                    self.bump();
                }
                (Some('/'), Some('/')) => {
                    while let Some(c) = self.peek(0) {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                (Some('/'), Some('*')) => {
                    let pos = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some('*'), Some('/')) => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(self.err(pos, "unterminated block comment")),
                        }
                    }
                }
                (Some('`'), _) => {
                    return Err(Diagnostic::unsupported(
                        self.pos(),
                        "compiler directives (`...)",
                    ))
                }
                _ => return Ok(()),
            }
        }
    }

    fn digits(&mut self, radix: u32) -> String {
        self.take_while(|c| c.is_digit(radix) || c == '_')
            .chars()
            .filter(|c| *c != '_')
            .collect()
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, Diagnostic> {
        let lead = self.digits(10);
        if self.peek(0) != Some('\'') {
            let value = lead
                .parse::<u64>()
                .map_err(|_| self.err(pos, "integer literal out of range"))?;
            return Ok(Tok::Number { width: None, value });
        }
        self.bump();
        let width = if lead.is_empty() {
            None
        } else {
            let w = lead
                .parse::<u32>()
                .map_err(|_| self.err(pos, "bad literal width"))?;
            if w == 0 || w > crate::value::MAX_WIDTH {
                return Err(Diagnostic::unsupported(pos, "literal widths above 64 bits"));
            }
            Some(w)
        };
        let radix = match self.bump().map(|c| c.to_ascii_lowercase()) {
            Some('d') => 10,
            Some('h') => 16,
            Some('b') => 2,
            Some('o') => 8,
            Some('s') => return Err(Diagnostic::unsupported(pos, "signed literals")),
            _ => return Err(self.err(pos, "expected base specifier after '")),
        };
        let body = self.digits(radix);
        if body.is_empty() {
            if matches!(self.peek(0), Some('x' | 'X' | 'z' | 'Z' | '?')) {
                return Err(Diagnostic::unsupported(pos, "four-state (x/z) literals"));
            }
            return Err(self.err(pos, "missing literal digits"));
        }
        let value = u64::from_str_radix(&body, radix)
            .map_err(|_| self.err(pos, "integer literal out of range"))?;
        let value = match width {
            Some(w) => value & crate::value::mask(w),
            None => value,
        };
        Ok(Tok::Number { width, value })
    }

    fn string(&mut self, pos: Pos) -> Result<Tok, Diagnostic> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('\\') => s.push('\\'),
                    Some('"') => s.push('"'),
                    _ => return Err(self.err(pos, "bad escape in string literal")),
                },
                Some('\n') | None => return Err(self.err(pos, "unterminated string literal")),
                Some(c) => s.push(c),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn literals() {
        assert_eq!(
            toks("8'hff 4'b1_010 12 'd7"),
            vec![
                Tok::Number {
                    width: Some(8),
                    value: 255
                },
                Tok::Number {
                    width: Some(4),
                    value: 10
                },
                Tok::Number {
                    width: None,
                    value: 12
                },
                Tok::Number {
                    width: None,
                    value: 7
                },
                Tok::Eof
            ]
        );
    }

    #[test]
    fn escaped_and_system_identifiers() {
        assert_eq!(
            toks("\\sm.r  $display __pos_a$b"),
            vec![
                Tok::Ident("sm.r".into()),
                Tok::System("$display".into()),
                Tok::Ident("__pos_a$b".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = lex("// c\n /* x\n */ a <= b").unwrap();
        assert_eq!(t[0].pos, Pos { line: 3, col: 5 });
        assert_eq!(t[1].tok, Tok::Punct("<="));
    }

    #[test]
    fn four_state_literal_is_unsupported() {
        let e = lex("4'bxx01").unwrap_err();
        assert!(e.message.contains("unsupported feature"));
    }
}
