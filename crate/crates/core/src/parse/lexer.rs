use std::ops::Range;

use super::{ParseError, ParseErrorCode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Bang,
    Word {
        /// Source text including any quotes.
        raw: String,
        /// Text with quotes removed and escapes resolved.
        text: String,
        /// Offset (relative to the word) of the first double quote, if any.
        quote_at: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'!' {
            tokens.push(Token {
                kind: TokenKind::Bang,
                span: i..i + 1,
            });
            i += 1;
            continue;
        }
        let start = i;
        let mut text = String::new();
        let mut quote_at = None;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() || c == b'!' {
                break;
            }
            if c == b'"' {
                quote_at.get_or_insert(i - start);
                let open = i;
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(ParseError::at(
                                src,
                                ParseErrorCode::SyntaxError,
                                open..src.len(),
                                "unterminated quoted string",
                            ))
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') if matches!(bytes.get(i + 1), Some(b'"') | Some(b'\\')) => {
                            text.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        Some(_) => {
                            let ch = src[i..].chars().next().expect("in bounds");
                            text.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                continue;
            }
            let ch = src[i..].chars().next().expect("in bounds");
            text.push(ch);
            i += ch.len_utf8();
        }
        tokens.push(Token {
            kind: TokenKind::Word {
                raw: src[start..i].to_string(),
                text,
                quote_at,
            },
            span: start..i,
        });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(src: &str) -> Vec<String> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| match t.kind {
                TokenKind::Bang => "!".to_string(),
                TokenKind::Word { text, .. } => text,
            })
            .collect()
    }

    #[test]
    fn splits_on_bang_and_space() {
        assert_eq!(words("a!b ! c d=1"), ["a", "!", "b", "!", "c", "d=1"]);
    }

    #[test]
    fn quoted_values_keep_spaces() {
        assert_eq!(words(r#"f location="a b!c" x"#), ["f", "location=a b!c", "x"]);
        assert_eq!(words(r#"k="say \"hi\"""#), [r#"k=say "hi""#]);
    }

    #[test]
    fn unterminated_quote_points_at_quote() {
        let e = tokenize(r#"f location="abc"#).unwrap_err();
        assert_eq!(e.span.start, 11);
        assert_eq!(e.code, ParseErrorCode::SyntaxError);
    }
}
