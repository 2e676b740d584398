//! Inline scanner: code spans, links, autolinks, bare URLs and file paths.

use super::{MaskToken, Piece};

/// Characters a backslash can escape. Kept narrow so an escape never hides a
/// URL scheme or a literal mask token from the scanner.
const ESCAPABLE: &[char] = &['\\', '`', '[', ']', '(', ')', '!'];

/// Trailing characters dropped from a bare URL.
const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"'];

const SCHEMES: [&str; 3] = ["http://", "https://", "ftp://"];

fn is_path_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '_' | '-' | '/' | '~' | '+' | '@')
}

struct Scanner<'a> {
    out: &'a mut Vec<Piece>,
    plain: String,
}

impl Scanner<'_> {
    fn flush(&mut self) {
        if !self.plain.is_empty() {
            self.out.push(Piece::Text(std::mem::take(&mut self.plain)));
        }
    }

    fn token(&mut self, token: MaskToken, original: &[char]) {
        self.flush();
        self.out.push(Piece::Token(token, original.iter().collect()));
    }

    fn text(&mut self, s: &[char]) {
        self.plain.extend(s);
    }
}

fn run_len(chars: &[char], i: usize, c: char) -> usize {
    chars[i..].iter().take_while(|&&x| x == c).count()
}

/// End (exclusive) of the code span opened by the backtick run at `i`.
fn code_span_end(chars: &[char], i: usize) -> Option<usize> {
    let n = run_len(chars, i, '`');
    let mut j = i + n;
    while j < chars.len() {
        if chars[j] == '`' {
            let m = run_len(chars, j, '`');
            if m == n {
                return Some(j + m);
            }
            j += m;
        } else {
            j += 1;
        }
    }
    None
}

/// Index of the `]` closing the bracket at `open`.
fn closing_bracket(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut j = open;
    while j < chars.len() {
        match chars[j] {
            '\\' if chars.get(j + 1).is_some_and(|c| ESCAPABLE.contains(c)) => j += 2,
            '`' => match code_span_end(chars, j) {
                Some(end) => j = end,
                None => j += run_len(chars, j, '`'),
            },
            '[' => {
                depth += 1;
                j += 1;
            }
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
                j += 1;
            }
            _ => j += 1,
        }
    }
    None
}

/// Index of the `)` closing the parenthesis at `open`.
fn closing_paren(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut j = open;
    while j < chars.len() {
        match chars[j] {
            '\\' if chars.get(j + 1).is_some_and(|c| ESCAPABLE.contains(c)) => j += 2,
            '(' => {
                depth += 1;
                j += 1;
            }
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
                j += 1;
            }
            _ => j += 1,
        }
    }
    None
}

/// `(close_bracket, close_paren)` of a `[text](target)` link at `i`.
fn link_at(chars: &[char], i: usize) -> Option<(usize, usize)> {
    let close = closing_bracket(chars, i)?;
    if chars.get(close + 1) != Some(&'(') {
        return None;
    }
    let end = closing_paren(chars, close + 1)?;
    if chars[close + 2..end].iter().all(|c| c.is_whitespace()) {
        return None;
    }
    Some((close, end))
}

fn starts_with_ci(chars: &[char], i: usize, pat: &str) -> bool {
    let mut k = i;
    for p in pat.chars() {
        match chars.get(k) {
            Some(c) if c.to_ascii_lowercase() == p => k += 1,
            _ => return false,
        }
    }
    true
}

/// End (exclusive) of a `<scheme://...>` autolink at `i`.
fn autolink_end(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i + 1;
    if !chars.get(j)?.is_ascii_alphabetic() {
        return None;
    }
    while chars
        .get(j)
        .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '.' | '-'))
    {
        j += 1;
    }
    if !(chars.get(j) == Some(&':') && chars.get(j + 1) == Some(&'/') && chars.get(j + 2) == Some(&'/')) {
        return None;
    }
    j += 3;
    let body = j;
    while let Some(&c) = chars.get(j) {
        if c == '>' {
            return (j > body).then_some(j + 1);
        }
        if c.is_whitespace() || c == '<' {
            return None;
        }
        j += 1;
    }
    None
}

/// End (exclusive) of a bare URL at `i`.
fn bare_url_end(chars: &[char], i: usize) -> Option<usize> {
    let scheme = SCHEMES.iter().find(|s| starts_with_ci(chars, i, s))?;
    let body = i + scheme.len();
    let mut end = body;
    while chars.get(end).is_some_and(|c| !c.is_whitespace()) {
        end += 1;
    }
    while end > body + 1 && URL_TRAILING.contains(&chars[end - 1]) {
        end -= 1;
    }
    (end > body).then_some(end)
}

fn has_extension(segment: &[char]) -> bool {
    let Some(dot) = segment.iter().rposition(|&c| c == '.') else {
        return false;
    };
    let ext = &segment[dot + 1..];
    dot > 0
        && segment[dot - 1].is_alphanumeric()
        && (1..=6).contains(&ext.len())
        && ext.iter().all(|c| c.is_ascii_alphanumeric())
        && ext.iter().any(|c| c.is_ascii_alphabetic())
}

fn looks_like_path(cand: &[char]) -> bool {
    if !cand.contains(&'/') {
        return false;
    }
    let s: String = cand.iter().collect();
    if s.starts_with("./") || s.starts_with("../") || s.starts_with("~/") {
        return true;
    }
    if s.starts_with('/') {
        return cand.get(1).is_some_and(|c| c.is_alphanumeric());
    }
    let segments: Vec<&[char]> = cand.split(|&c| c == '/').collect();
    if segments[..segments.len() - 1].iter().any(|s| s.is_empty()) {
        return false;
    }
    let last = segments[segments.len() - 1];
    if last.is_empty() {
        // trailing slash marks a directory
        return segments
            .iter()
            .any(|s| s.iter().any(|c| c.is_alphabetic()));
    }
    has_extension(last)
}

/// End (exclusive) of a file path starting at `i`.
fn path_end(chars: &[char], i: usize) -> Option<usize> {
    let at_word_start = i == 0 || {
        let p = chars[i - 1];
        p.is_whitespace() || matches!(p, '(' | '[' | '"' | '\'')
    };
    if !at_word_start || !is_path_char(chars[i]) {
        return None;
    }
    let mut end = i;
    while chars.get(end).is_some_and(|&c| is_path_char(c)) {
        end += 1;
    }
    while end > i && chars[end - 1] == '.' {
        end -= 1;
    }
    looks_like_path(&chars[i..end]).then_some(end)
}

fn scan_chars(chars: &[char], out: &mut Vec<Piece>) {
    let mut s = Scanner {
        out,
        plain: String::new(),
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let rest = &chars[i..];

        if c == '<' {
            let head: String = rest.iter().take(12).collect();
            if let Some(token) = MaskToken::at_start(&head) {
                let n = token.surface().chars().count();
                s.token(token, &rest[..n]);
                i += n;
                continue;
            }
            if let Some(end) = autolink_end(chars, i) {
                s.token(MaskToken::Url, &chars[i..end]);
                i = end;
                continue;
            }
        }

        if c == '\\' && chars.get(i + 1).is_some_and(|n| ESCAPABLE.contains(n)) {
            s.text(&rest[..2]);
            i += 2;
            continue;
        }

        if c == '`' {
            match code_span_end(chars, i) {
                Some(end) => {
                    s.token(MaskToken::CodeSmall, &chars[i..end]);
                    i = end;
                }
                None => {
                    let n = run_len(chars, i, '`');
                    s.text(&rest[..n]);
                    i += n;
                }
            }
            continue;
        }

        let bracket = if c == '!' && chars.get(i + 1) == Some(&'[') {
            Some(i + 1)
        } else if c == '[' {
            Some(i)
        } else {
            None
        };
        if let Some(open) = bracket {
            if let Some((close, end)) = link_at(chars, open) {
                s.text(&chars[i..=open]);
                s.flush();
                scan_chars(&chars[open + 1..close], s.out);
                s.text(&[']', '(']);
                let target = &chars[close + 2..end];
                let text: String = target.iter().collect();
                // an already masked target stays what it is
                let token = MaskToken::ALL
                    .into_iter()
                    .find(|t| t.surface() == text)
                    .unwrap_or(MaskToken::Url);
                s.token(token, target);
                s.text(&[')']);
                i = end + 1;
                continue;
            }
        }

        if let Some(end) = bare_url_end(chars, i) {
            s.token(MaskToken::Url, &chars[i..end]);
            i = end;
            continue;
        }

        if let Some(end) = path_end(chars, i) {
            s.token(MaskToken::File, &chars[i..end]);
            i = end;
            continue;
        }

        s.text(&[c]);
        i += 1;
    }
    s.flush();
}

/// Appends the masked pieces of one line to `out`.
pub(crate) fn scan(line: &str, out: &mut Vec<Piece>) {
    let chars: Vec<char> = line.chars().collect();
    scan_chars(&chars, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(line: &str) -> String {
        let mut pieces = Vec::new();
        scan(line, &mut pieces);
        pieces
            .iter()
            .map(|p| match p {
                Piece::Text(t) => t.clone(),
                Piece::Token(t, _) => t.surface().to_string(),
            })
            .collect()
    }

    #[test]
    fn paths() {
        assert_eq!(render("edit /etc/hosts now"), "edit <file> now");
        assert_eq!(render("the docs/ folder"), "the <file> folder");
        assert_eq!(render("~/bin and ../x"), "<file> and <file>");
        assert_eq!(render("TCP/IP km/h 1/2"), "TCP/IP km/h 1/2");
        assert_eq!(render("see lib/a.rs."), "see <file>.");
    }

    #[test]
    fn urls() {
        assert_eq!(render("(see https://a.io/x)."), "(see <url>).");
        assert_eq!(render("xhttp://y"), "x<url>");
        assert_eq!(render("HTTP://Y.COM"), "<url>");
        assert_eq!(render("http:// nothing"), "http:// nothing");
        assert_eq!(render("http://)"), "<url>");
    }

    #[test]
    fn code_span_needs_matching_run() {
        assert_eq!(render("a ``b`c`` d"), "a <code_small> d");
        assert_eq!(render("a `` b"), "a `` b");
        assert_eq!(render("\\`x`"), "\\`x`");
    }

    #[test]
    fn images_and_nested_links() {
        assert_eq!(render("![logo](img/logo.png)"), "![logo](<url>)");
        assert_eq!(render("[a [b](c)](d)"), "[a [b](<url>)](<url>)");
        assert_eq!(render("[not a link] (x)"), "[not a link] (x)");
    }

    #[test]
    fn escaped_token_is_still_a_token() {
        assert_eq!(render("\\<url>"), "\\<url>");
        let mut pieces = Vec::new();
        scan("\\<url>", &mut pieces);
        assert!(matches!(pieces[1], Piece::Token(MaskToken::Url, _)));
    }
}
