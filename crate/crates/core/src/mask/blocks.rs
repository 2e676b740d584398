//! Line-level segmentation into code blocks, tables and ordinary lines.

use super::MaskToken;

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Block<'a> {
    Token(MaskToken, String),
    Line(&'a str),
}

fn leading_spaces(line: &str) -> usize {
    line.bytes().take_while(|&b| b == b' ').count()
}

/// Fence character and run length when `line` opens a code fence.
fn fence_open(line: &str) -> Option<(char, usize)> {
    if leading_spaces(line) > 3 {
        return None;
    }
    let t = line.trim_start();
    let c = t.chars().next()?;
    if c != '`' && c != '~' {
        return None;
    }
    let n = t.chars().take_while(|&x| x == c).count();
    if n < 3 {
        return None;
    }
    // backtick fences may not carry backticks in their info string
    if c == '`' && t[n..].contains('`') {
        return None;
    }
    Some((c, n))
}

fn fence_closes(line: &str, c: char, n: usize) -> bool {
    if leading_spaces(line) > 3 {
        return false;
    }
    let t = line.trim();
    let run = t.chars().take_while(|&x| x == c).count();
    run >= n && t.chars().all(|x| x == c)
}

fn is_html_table_start(line: &str) -> bool {
    let t = line.trim_start().to_ascii_lowercase();
    t.strip_prefix("<table")
        .is_some_and(|rest| rest.starts_with('>') || rest.starts_with(char::is_whitespace))
}

fn is_delimiter_row(line: &str) -> bool {
    let t = line.trim();
    if !t.contains('|') || !t.contains('-') {
        return false;
    }
    let inner = t.strip_prefix('|').unwrap_or(t);
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    inner.split('|').all(|cell| {
        let cell = cell.trim();
        let cell = cell.strip_prefix(':').unwrap_or(cell);
        let cell = cell.strip_suffix(':').unwrap_or(cell);
        !cell.is_empty() && cell.chars().all(|c| c == '-')
    })
}

pub(crate) fn is_list_item(line: &str) -> bool {
    let t = line.trim_start();
    if let Some(rest) = t
        .strip_prefix('-')
        .or_else(|| t.strip_prefix('*'))
        .or_else(|| t.strip_prefix('+'))
    {
        return rest.starts_with(' ');
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 || digits > 9 {
        return false;
    }
    let rest = &t[digits..];
    (rest.starts_with(". ") || rest.starts_with(") ")) && rest.len() > 2
}

fn is_indented(line: &str) -> bool {
    leading_spaces(line) >= 4 && !line.trim().is_empty()
}

fn closes_html_table(line: &str) -> bool {
    line.to_ascii_lowercase().contains("</table>")
}

/// Splits lines into block tokens and ordinary lines, in document order.
///
/// A line holding a `</table>` without a matching opener is masked as a table
/// fragment, so masked output never contains a closing table tag.
pub(crate) fn segment<'a>(lines: &[&'a str]) -> Vec<Block<'a>> {
    let mut out = Vec::new();
    // whether the last non-indented block was a list item
    let mut in_list = false;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];

        if let Some((c, n)) = fence_open(line) {
            let close = (i + 1..lines.len()).find(|&j| fence_closes(lines[j], c, n));
            let end = match close {
                Some(j) => j,
                None => {
                    log::warn!("unterminated code fence at line {}; masking to end of document", i + 1);
                    lines.len() - 1
                }
            };
            out.push(Block::Token(MaskToken::CodeLarge, lines[i..=end].join("\n")));
            in_list = false;
            i = end + 1;
            continue;
        }

        if is_html_table_start(line) {
            let end = (i..lines.len()).find(|&j| closes_html_table(lines[j])).unwrap_or(i);
            out.push(Block::Token(MaskToken::Table, lines[i..=end].join("\n")));
            in_list = false;
            i = end + 1;
            continue;
        }

        if closes_html_table(line) {
            out.push(Block::Token(MaskToken::Table, line.to_string()));
            in_list = false;
            i += 1;
            continue;
        }

        if line.contains('|') && i + 1 < lines.len() && is_delimiter_row(lines[i + 1]) {
            let mut end = i + 1;
            while end + 1 < lines.len()
                && lines[end + 1].contains('|')
                && !lines[end + 1].trim().is_empty()
            {
                end += 1;
            }
            out.push(Block::Token(MaskToken::Table, lines[i..=end].join("\n")));
            in_list = false;
            i = end + 1;
            continue;
        }

        if is_indented(line) {
            if !in_list {
                let mut end = i;
                while end + 1 < lines.len() && is_indented(lines[end + 1]) {
                    end += 1;
                }
                out.push(Block::Token(MaskToken::CodeLarge, lines[i..=end].join("\n")));
                i = end + 1;
                continue;
            }
        } else {
            in_list = is_list_item(line);
        }

        out.push(Block::Line(line));
        i += 1;
    }
    out
}
