//! Permissive tokenizer for extractable blob content.

/// Bytes inspected for a NUL when deciding whether content is binary.
pub const BINARY_SNIFF_BYTES: usize = 8 * 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Word(String),
    /// Contents of a double-quoted run, quotes removed.
    Quoted(String),
    /// `=` or `:`.
    Sep(char),
}

impl Token {
    pub fn text(&self) -> Option<&str> {
        match self {
            Token::Word(s) | Token::Quoted(s) => Some(s),
            Token::Sep(_) => None,
        }
    }
}

pub fn is_binary(blob: &[u8]) -> bool {
    blob[..blob.len().min(BINARY_SNIFF_BYTES)].contains(&0)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() && !matches!(c, '=' | ':' | '"' | '.' | '-' | '_' | '/' | '@' | '+' | '#' | '%' | '&')
}

fn push_word(out: &mut Vec<Token>, word: &mut String) {
    // sentence-final periods are not part of the token
    let trimmed = word.trim_end_matches('.');
    if !trimmed.is_empty() {
        out.push(Token::Word(trimmed.to_string()));
    }
    word.clear();
}

/// Tokenize `blob`, or `None` when it is binary.
pub fn tokenize(blob: &[u8]) -> Option<Vec<Token>> {
    if is_binary(blob) {
        return None;
    }
    let text = String::from_utf8_lossy(blob);
    let mut out = Vec::new();
    let mut word = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '"' {
            push_word(&mut out, &mut word);
            let mut q = String::new();
            for c in chars.by_ref() {
                if c == '"' {
                    break;
                }
                q.push(c);
            }
            out.push(Token::Quoted(q));
        } else if c == '=' || c == ':' {
            push_word(&mut out, &mut word);
            out.push(Token::Sep(c));
        } else if c.is_whitespace() || is_punct(c) || c == '\u{fffd}' {
            push_word(&mut out, &mut word);
        } else {
            word.push(c);
        }
    }
    push_word(&mut out, &mut word);
    Some(out)
}
