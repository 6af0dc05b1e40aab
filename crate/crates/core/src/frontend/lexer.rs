use super::FrontendError;

#[derive(Clone, Debug, PartialEq)]
pub enum TokKind {
    Ident(String),
    Int(i64),
    Float(String),
    Punct(&'static str),
    /// Body of a `#pragma @Annotation` directive, continuation lines joined.
    Pragma(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokKind,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub offset: usize,
    pub end: usize,
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "::", "{", "}", "(", ")", "[", "]", ";", ",", ".", "<", ">",
    "+", "-", "*", "/", "%", "=", "!", "&", "|", "^", "~", "?", ":",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, FrontendError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let mut at_line_start = true;
    while i < bytes.len() {
        let c = bytes[i];
        let col = (i - line_start) as u32 + 1;
        match c {
            b'\n' => {
                line += 1;
                i += 1;
                line_start = i;
                at_line_start = true;
                continue;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start_line = line;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(FrontendError::Syntax {
                            line: start_line,
                            col,
                            message: "unterminated comment".into(),
                        });
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
                continue;
            }
            b'#' if at_line_start => {
                let start = i;
                let start_line = line;
                let mut directive = String::new();
                while i < bytes.len() && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                        directive.push(' ');
                        i += 2;
                        line += 1;
                        line_start = i;
                        continue;
                    }
                    directive.push(bytes[i] as char);
                    i += 1;
                }
                let words: Vec<&str> = directive[1..].split_whitespace().collect();
                match words.as_slice() {
                    ["pragma", w, ..] if w.starts_with("@Annotation") => out.push(Token {
                        kind: TokKind::Pragma(directive.trim().to_string()),
                        line: start_line,
                        col,
                        end_line: line,
                        offset: start,
                        end: i,
                    }),
                    ["pragma", ..] | ["include", ..] => {}
                    _ => {
                        return Err(FrontendError::Unsupported {
                            line: start_line,
                            construct: format!("preprocessor directive `{}`", directive.trim()),
                        })
                    }
                }
                continue;
            }
            _ => {}
        }
        at_line_start = false;
        let start = i;
        let kind = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokKind::Ident(text[start..i].to_string())
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut is_float = false;
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_digit() {
                    i += 1;
                } else if b == b'.' {
                    is_float = true;
                    i += 1;
                } else if (b == b'e' || b == b'E') && !text[start..i].starts_with("0x") {
                    is_float = true;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                } else if b.is_ascii_alphanumeric() {
                    i += 1;
                } else {
                    break;
                }
            }
            let lit = &text[start..i];
            if is_float {
                TokKind::Float(lit.to_string())
            } else {
                let digits = lit.trim_end_matches(['u', 'U', 'l', 'L']);
                let parsed = if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
                    i64::from_str_radix(hex, 16).ok()
                } else {
                    digits.parse().ok()
                };
                match parsed {
                    Some(v) => TokKind::Int(v),
                    None => {
                        return Err(FrontendError::Syntax {
                            line,
                            col,
                            message: format!("bad integer literal `{lit}`"),
                        })
                    }
                }
            }
        } else if let Some(p) = PUNCTS.iter().find(|p| text[i..].starts_with(**p)) {
            i += p.len();
            TokKind::Punct(p)
        } else {
            return Err(FrontendError::Syntax {
                line,
                col,
                message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
            });
        };
        out.push(Token {
            kind,
            line,
            col,
            end_line: line,
            offset: start,
            end: i,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pragma_with_continuation_is_one_token() {
        let toks = tokenize("  #pragma @Annotation \\\n   {lp_init:x,lp_cond:y}\nif (x) ;").unwrap();
        match &toks[0].kind {
            TokKind::Pragma(p) => assert!(p.contains("{lp_init:x,lp_cond:y}")),
            other => panic!("{other:?}"),
        }
        assert_eq!((toks[0].line, toks[0].end_line), (1, 2));
        assert_eq!(toks[1].line, 3);
    }

    #[test]
    fn comments_and_numbers() {
        let toks = tokenize("i += 2; /* a\nb */ x = 1.5e3; // tail").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(kinds[2], TokKind::Int(2));
        assert_eq!(kinds[6], TokKind::Float("1.5e3".into()));
        assert_eq!(toks[4].line, 2);
    }

    #[test]
    fn defines_are_rejected() {
        assert!(matches!(
            tokenize("#define N 10\n"),
            Err(FrontendError::Unsupported { line: 1, .. })
        ));
    }
}
