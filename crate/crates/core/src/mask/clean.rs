/// Emoji code points removed by [`clean`]: Misc Symbols & Pictographs,
/// Emoticons, Transport & Map, Supplemental Symbols & Pictographs, and the
/// variation selectors.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0xFE00..=0xFE0F)
}

fn replace_br(text: &str) -> String {
    let lower = text.to_ascii_lowercase();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while let Some(rel) = lower[i..].find("<br") {
        let start = i + rel;
        let after = &lower[start + 3..];
        let close = after
            .char_indices()
            .take_while(|&(_, c)| c == ' ' || c == '/')
            .last()
            .map_or(0, |(j, c)| j + c.len_utf8());
        if after[close..].starts_with('>') {
            out.push_str(&text[i..start]);
            out.push('\n');
            i = start + 3 + close + 1;
        } else {
            out.push_str(&text[i..start + 3]);
            i = start + 3;
        }
    }
    out.push_str(&text[i..]);
    out
}

/// Normalizes raw README text.
///
/// Emojis are dropped, `<br>` tags become line breaks, `\t` and `\r` become
/// spaces and runs of spaces collapse to one. Lines are trimmed on the right
/// and blank lines removed, so lines are separated by a single `\n`. Leading
/// indentation is kept (a leading tab counts as four spaces) because indented
/// code blocks are recognized by it.
pub fn clean(text: &str) -> String {
    let text: String = text.chars().filter(|&c| !is_emoji(c)).collect();
    let text = replace_br(&text);
    let mut lines = Vec::new();
    for raw in text.split('\n') {
        let mut indent = 0;
        let mut body_start = raw.len();
        for (i, c) in raw.char_indices() {
            match c {
                ' ' | '\r' => indent += 1,
                '\t' => indent += 4,
                _ => {
                    body_start = i;
                    break;
                }
            }
        }
        let mut line = " ".repeat(indent);
        let mut pending_space = false;
        for c in raw[body_start..].chars() {
            if c == ' ' || c == '\t' || c == '\r' {
                pending_space = true;
            } else {
                if pending_space {
                    line.push(' ');
                    pending_space = false;
                }
                line.push(c);
            }
        }
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    lines.join("\n")
}
