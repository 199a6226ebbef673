//! A small shell-ish tokenizer for install command lines.
//!
//! Quotes group words, `\`-newline continues a line, and command separators
//! (`&&`, `||`, `;`, `|`, newlines, backticks, `#` and `//` comment markers)
//! split the input into segments. A comment marker starts a new segment
//! rather than swallowing the rest of the line, so `# pip install x` inside a
//! code comment is still seen as a command.

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    /// Source byte offset (relative to the tokenized text) of every byte of
    /// `text`.
    offsets: Vec<usize>,
}

impl Token {
    /// Span (relative to the tokenized text) of `text[a..b]`.
    pub fn sub_span(&self, a: usize, b: usize) -> Span {
        if a >= b {
            let at = self.offsets.get(a).copied().unwrap_or_else(|| self.offsets.last().map_or(0, |o| o + 1));
            return Span::new(at, at);
        }
        Span::new(self.offsets[a], self.offsets[b - 1] + 1)
    }

    pub fn span(&self) -> Span {
        self.sub_span(0, self.text.len())
    }
}

pub(crate) fn segments(src: &str) -> Vec<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut segs: Vec<Vec<Token>> = vec![Vec::new()];
    let mut cur: Option<Token> = None;

    fn flush(cur: &mut Option<Token>, segs: &mut [Vec<Token>]) {
        if let Some(tok) = cur.take() {
            if !tok.text.is_empty() {
                segs.last_mut().expect("at least one segment").push(tok);
            }
        }
    }
    fn push_char(cur: &mut Option<Token>, src: &str, at: usize, ch: char) {
        let tok = cur.get_or_insert_with(|| Token { text: String::new(), offsets: Vec::new() });
        let len = ch.len_utf8();
        tok.text.push_str(&src[at..at + len]);
        tok.offsets.extend(at..at + len);
    }

    let mut i = 0;
    while i < bytes.len() {
        let ch = src[i..].chars().next().expect("char boundary");
        let len = ch.len_utf8();
        match ch {
            '\\' if matches!(bytes.get(i + 1), Some(b'\n')) => {
                flush(&mut cur, &mut segs);
                i += 2;
            }
            '\\' if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') => {
                flush(&mut cur, &mut segs);
                i += 3;
            }
            '"' | '\'' => {
                let quote = ch;
                let mut j = i + 1;
                let mut closed = false;
                while j < bytes.len() {
                    let c = src[j..].chars().next().expect("char boundary");
                    if c == quote {
                        closed = true;
                        break;
                    }
                    if c == '\n' {
                        break;
                    }
                    push_char(&mut cur, src, j, c);
                    j += c.len_utf8();
                }
                if cur.is_none() {
                    cur = Some(Token { text: String::new(), offsets: Vec::new() });
                }
                i = if closed { j + 1 } else { j };
            }
            c if c.is_whitespace() && c != '\n' => {
                flush(&mut cur, &mut segs);
                i += len;
            }
            '\n' | ';' | '`' | '(' | ')' => {
                flush(&mut cur, &mut segs);
                segs.push(Vec::new());
                i += len;
            }
            '&' | '|' => {
                flush(&mut cur, &mut segs);
                segs.push(Vec::new());
                i += if bytes.get(i + 1) == Some(&bytes[i]) { 2 } else { 1 };
            }
            '#' if cur.is_none() => {
                segs.push(Vec::new());
                i += len;
            }
            '/' if cur.is_none() && bytes.get(i + 1) == Some(&b'/') => {
                segs.push(Vec::new());
                i += 2;
            }
            _ => {
                push_char(&mut cur, src, i, ch);
                i += len;
            }
        }
    }
    flush(&mut cur, &mut segs);
    segs.retain(|s| !s.is_empty());
    segs
}
