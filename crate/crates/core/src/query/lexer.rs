use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Var(String),
    Iri(String),
    PName(String, String),
    Slot(String),
    Str(String),
    LangTag(String),
    Number(String),
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

const SYMBOLS: &[&str] = &[
    "^^", "&&", "||", "!=", "<=", ">=", "{", "}", "(", ")", ".", ";", ",", "=", "*", "!", "<", ">", "/", "|", "^", "+",
    "-", "[", "]",
];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |pos: usize, message: &str| QueryError::Syntax { position: pos, message: message.to_string() };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c == '?' || c == '$' {
            i += 1;
            let name = take_while(&chars, &mut i, |c| c.is_alphanumeric() || c == '_');
            if name.is_empty() {
                return Err(syntax(start, "empty variable name"));
            }
            out.push(Token { tok: Tok::Var(name), pos: start });
            continue;
        }
        if c == '{' {
            if let Some(len) = slot_len(&chars[i..]) {
                let name: String = chars[i + 1..i + len - 1].iter().collect();
                i += len;
                out.push(Token { tok: Tok::Slot(name), pos: start });
                continue;
            }
        }
        if c == '<' {
            if let Some(len) = iri_len(&chars[i..]) {
                let iri: String = chars[i + 1..i + len - 1].iter().collect();
                i += len;
                out.push(Token { tok: Tok::Iri(iri), pos: start });
                continue;
            }
        }
        if c == '"' || c == '\'' {
            let value = read_string(&chars, &mut i).map_err(|m| syntax(start, m))?;
            out.push(Token { tok: Tok::Str(value), pos: start });
            continue;
        }
        if c == '@' {
            i += 1;
            let tag = take_while(&chars, &mut i, |c| c.is_ascii_alphanumeric() || c == '-');
            if tag.is_empty() {
                return Err(syntax(start, "empty language tag"));
            }
            out.push(Token { tok: Tok::LangTag(tag), pos: start });
            continue;
        }
        if c.is_ascii_digit() {
            let mut num = take_while(&chars, &mut i, |c| c.is_ascii_digit());
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                num.push('.');
                num.push_str(&take_while(&chars, &mut i, |c| c.is_ascii_digit()));
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                num.push(chars[i]);
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    num.push(chars[i]);
                    i += 1;
                }
                let exp = take_while(&chars, &mut i, |c| c.is_ascii_digit());
                if exp.is_empty() {
                    return Err(syntax(start, "malformed exponent"));
                }
                num.push_str(&exp);
            }
            out.push(Token { tok: Tok::Number(num), pos: start });
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == ':' {
            let mut word =
                take_while(&chars, &mut i, |c| c.is_alphanumeric() || c == '_' || c == '-' || c == ':' || c == '.');
            while word.ends_with('.') {
                word.pop();
                i -= 1;
            }
            let tok = match word.split_once(':') {
                Some((p, l)) => Tok::PName(p.to_string(), l.to_string()),
                None => Tok::Ident(word),
            };
            out.push(Token { tok, pos: start });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.chars().count();
                out.push(Token { tok: Tok::Sym(s), pos: start });
            }
            None => return Err(syntax(start, &format!("unexpected character '{c}'"))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: chars.len() });
    Ok(out)
}

fn take_while(chars: &[char], i: &mut usize, pred: impl Fn(char) -> bool) -> String {
    let start = *i;
    while *i < chars.len() && pred(chars[*i]) {
        *i += 1;
    }
    chars[start..*i].iter().collect()
}

/// Length of a `{name}` placeholder at the start of `chars`.
fn slot_len(chars: &[char]) -> Option<usize> {
    let first = *chars.get(1)?;
    if !(first.is_ascii_alphabetic() || first == '_') {
        return None;
    }
    let mut j = 2;
    while let Some(&c) = chars.get(j) {
        if c == '}' {
            return Some(j + 1);
        }
        if !(c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
        j += 1;
    }
    None
}

/// Length of an `<iri>` at the start of `chars`; `None` when `<` is an operator.
fn iri_len(chars: &[char]) -> Option<usize> {
    let mut j = 1;
    while let Some(&c) = chars.get(j) {
        match c {
            '>' => return Some(j + 1),
            '<' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' => return None,
            c if c.is_whitespace() => return None,
            _ => j += 1,
        }
    }
    None
}

fn read_string(chars: &[char], i: &mut usize) -> Result<String, &'static str> {
    let quote = chars[*i];
    let long = chars.get(*i + 1) == Some(&quote) && chars.get(*i + 2) == Some(&quote);
    *i += if long { 3 } else { 1 };
    let mut out = String::new();
    loop {
        let Some(&c) = chars.get(*i) else {
            return Err("unterminated string");
        };
        *i += 1;
        if c == quote {
            if !long {
                return Ok(out);
            }
            if chars.get(*i) == Some(&quote) && chars.get(*i + 1) == Some(&quote) {
                *i += 2;
                return Ok(out);
            }
            out.push(c);
        } else if c == '\\' {
            let e = chars.get(*i).copied().ok_or("unterminated escape")?;
            *i += 1;
            out.push(match e {
                't' => '\t',
                'n' => '\n',
                'r' => '\r',
                'b' => '\u{8}',
                'f' => '\u{c}',
                '"' => '"',
                '\'' => '\'',
                '\\' => '\\',
                _ => return Err("invalid escape"),
            });
        } else if (c == '\n' || c == '\r') && !long {
            return Err("line break in string");
        } else {
            out.push(c);
        }
    }
}
