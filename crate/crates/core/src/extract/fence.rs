use super::{CodeBlock, Span};

struct Line<'a> {
    start: usize,
    /// Byte offset just past the line content, before any `\n`.
    end: usize,
    text: &'a str,
}

fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in text.split_inclusive('\n') {
        let body = piece.strip_suffix('\n').unwrap_or(piece);
        let body = body.strip_suffix('\r').unwrap_or(body);
        out.push(Line { start, end: start + body.len(), text: body });
        start += piece.len();
    }
    out
}

/// Backtick count and info string of an opening fence line.
fn opening_fence(line: &str) -> Option<(usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ticks = rest.len() - rest.trim_start_matches('`').len();
    if ticks < 3 {
        return None;
    }
    let info = rest[ticks..].trim();
    if info.contains('`') {
        return None;
    }
    Some((ticks, info))
}

fn closes(line: &str, ticks: usize) -> bool {
    let trimmed = line.trim();
    let indent = line.len() - line.trim_start_matches(' ').len();
    indent <= 3 && trimmed.len() >= ticks && trimmed.bytes().all(|b| b == b'`')
}

fn make_block(response: &str, info: &str, body: &[Line<'_>]) -> Option<CodeBlock> {
    let (first, last) = (body.first()?, body.last()?);
    let span = Span::new(first.start, last.end);
    let text = span.slice(response);
    if text.trim().is_empty() {
        return None;
    }
    let language_hint = info
        .split_whitespace()
        .next()
        .map(|w| w.trim_start_matches('{').trim_start_matches('.').to_ascii_lowercase())
        .filter(|w| !w.is_empty());
    Some(CodeBlock { language_hint, text: text.to_owned(), span })
}

/// Splits a response into its fenced code blocks. A response without any
/// fence yields a single block covering the whole text; an unterminated fence
/// runs to the end of the response.
pub fn extract_code_blocks(response: &str) -> Vec<CodeBlock> {
    if response.trim().is_empty() {
        return Vec::new();
    }
    let lines = lines(response);
    let mut blocks = Vec::new();
    let mut saw_fence = false;
    let mut i = 0;
    while i < lines.len() {
        let Some((ticks, info)) = opening_fence(lines[i].text) else {
            i += 1;
            continue;
        };
        saw_fence = true;
        let body_start = i + 1;
        let mut j = body_start;
        while j < lines.len() && !closes(lines[j].text, ticks) {
            j += 1;
        }
        if let Some(block) = make_block(response, info, &lines[body_start..j]) {
            blocks.push(block);
        }
        i = j + 1;
    }
    if !saw_fence {
        return vec![CodeBlock {
            language_hint: None,
            text: response.to_owned(),
            span: Span::new(0, response.len()),
        }];
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fence_three_lines() {
        let r = "Here:\n```bash\nnpm install a\nnpm install b\nnpm install c\n```\nDone.";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].text, "npm install a\nnpm install b\nnpm install c");
        assert_eq!(blocks[0].language_hint.as_deref(), Some("bash"));
        assert_eq!(blocks[0].span.slice(r), blocks[0].text);
    }

    #[test]
    fn empty_input() {
        assert!(extract_code_blocks("").is_empty());
        assert!(extract_code_blocks("  \n").is_empty());
    }

    #[test]
    fn two_blocks_with_prose_between() {
        // offsets:   0         1         2         3         4         5
        //            0123456789012345678901234567890123456789012345678901234
        let r = "Intro\n```\nfirst\n```\nsome prose here\n```py\nsecond\n```\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].span, Span::new(10, 15));
        assert_eq!(blocks[0].text, "first");
        assert_eq!(blocks[1].span, Span::new(42, 48));
        assert_eq!(blocks[1].text, "second");
        assert!(blocks.iter().all(|b| !b.text.contains("prose")));
    }

    #[test]
    fn no_fence_means_whole_response() {
        let r = "just run pip install flask";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].span, Span::new(0, r.len()));
    }

    #[test]
    fn unterminated_and_longer_fences() {
        let r = "````md\n```\ninner\n```\n````\n```\ntail";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].text, "```\ninner\n```");
        assert_eq!(blocks[1].text, "tail");
    }

    #[test]
    fn empty_fence_is_skipped() {
        assert!(extract_code_blocks("```\n```\n").is_empty());
    }
}
