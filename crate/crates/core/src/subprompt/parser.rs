//! Parsing of the Python-style string list returned by the simplification
//! request.
//!
//! Accepts `['a', "b, c", 'd\'s']` possibly wrapped in a markdown code fence
//! or surrounded by prose. The first `[` that opens a list of quoted strings
//! is used.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no list of quoted strings found")]
    NoList,
    #[error("unterminated string starting at byte {0}")]
    UnterminatedString(usize),
    #[error("expected ',' or ']' at byte {0}")]
    ExpectedSeparator(usize),
    #[error("expected a quoted string at byte {0}")]
    ExpectedString(usize),
    #[error("list is not closed")]
    Unclosed,
    #[error("item {0} is empty")]
    EmptyItem(usize),
}

/// Parse the first Python/JSON list of string literals found in `text`.
pub fn parse_prompt_list(text: &str) -> Result<Vec<String>, ParseError> {
    let bytes = text.as_bytes();
    let mut last_err = None;
    for (start, _) in text.match_indices('[') {
        let after = skip_ws(bytes, start + 1);
        match bytes.get(after) {
            Some(b'\'') | Some(b'"') => {}
            _ => continue,
        }
        match parse_list_at(text, start) {
            Ok(items) => return Ok(items),
            Err(e) => {
                if last_err.is_none() {
                    last_err = Some(e);
                }
            }
        }
    }
    Err(last_err.unwrap_or(ParseError::NoList))
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

fn parse_list_at(text: &str, open: usize) -> Result<Vec<String>, ParseError> {
    let bytes = text.as_bytes();
    let mut items = Vec::new();
    let mut i = skip_ws(bytes, open + 1);
    loop {
        match bytes.get(i) {
            Some(b']') => break,
            Some(b'\'') | Some(b'"') => {
                let (item, next) = parse_string(text, i)?;
                if item.trim().is_empty() {
                    return Err(ParseError::EmptyItem(items.len()));
                }
                items.push(item);
                i = skip_ws(bytes, next);
                match bytes.get(i) {
                    Some(b',') => i = skip_ws(bytes, i + 1),
                    Some(b']') => break,
                    Some(_) => return Err(ParseError::ExpectedSeparator(i)),
                    None => return Err(ParseError::Unclosed),
                }
            }
            Some(_) => return Err(ParseError::ExpectedString(i)),
            None => return Err(ParseError::Unclosed),
        }
    }
    Ok(items)
}

/// Parse one quoted literal starting at `start`; returns the value and the
/// index just past the closing quote.
fn parse_string(text: &str, start: usize) -> Result<(String, usize), ParseError> {
    let quote = text.as_bytes()[start] as char;
    let mut out = String::new();
    let mut chars = text[start + 1..].char_indices();
    while let Some((offset, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, esc) = chars.next().ok_or(ParseError::UnterminatedString(start))?;
                match esc {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '\\' | '\'' | '"' => out.push(esc),
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
            }
            '\n' => return Err(ParseError::UnterminatedString(start)),
            c if c == quote => return Ok((out, start + 1 + offset + 1)),
            c => out.push(c),
        }
    }
    Err(ParseError::UnterminatedString(start))
}

/// Format strings the way Python's `repr` prints a list of them, which is
/// the format the simplification request asks for.
pub fn format_prompt_list(items: &[String]) -> String {
    let parts: Vec<String> = items.iter().map(|s| python_repr(s)).collect();
    format!("[{}]", parts.join(", "))
}

fn python_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_list() {
        assert_eq!(
            parse_prompt_list("['a', 'b']").unwrap(),
            vec!["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn quote_styles_and_escapes() {
        let items = parse_prompt_list(r#"["it's", 'say "hi"', 'don\'t', "back\\slash"]"#).unwrap();
        assert_eq!(items, vec!["it's", "say \"hi\"", "don't", "back\\slash"]);
    }

    #[test]
    fn skips_brackets_in_prose() {
        let text = "Here [are] the levels:\n['one', 'two']";
        assert_eq!(parse_prompt_list(text).unwrap(), vec!["one", "two"]);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_prompt_list("no list here"), Err(ParseError::NoList));
        assert_eq!(parse_prompt_list("[1, 2]"), Err(ParseError::NoList));
        assert_eq!(parse_prompt_list("['a', 'b'"), Err(ParseError::Unclosed));
        assert!(matches!(parse_prompt_list("['a' 'b']"), Err(ParseError::ExpectedSeparator(_))));
        assert!(matches!(parse_prompt_list("['abc"), Err(ParseError::UnterminatedString(_))));
        assert_eq!(parse_prompt_list("['a', '']"), Err(ParseError::EmptyItem(1)));
        assert!(matches!(parse_prompt_list("['a', 3]"), Err(ParseError::ExpectedString(_))));
    }

    #[test]
    fn repr_picks_quotes_like_python() {
        assert_eq!(python_repr("plain"), "'plain'");
        assert_eq!(python_repr("it's"), "\"it's\"");
        assert_eq!(python_repr("it's \"x\""), "'it\\'s \"x\"'");
    }

    proptest! {
        #[test]
        fn format_then_parse_round_trips(items in prop::collection::vec("[ -~]{0,40}[a-zA-Z,'\"][ -~]{0,40}", 4)) {
            let items: Vec<String> = items;
            let text = format_prompt_list(&items);
            prop_assert_eq!(parse_prompt_list(&text).unwrap(), items.clone());
            let fenced = format!("Sure!\n```python\n{text}\n```\n");
            prop_assert_eq!(parse_prompt_list(&fenced).unwrap(), items);
        }
    }
}
