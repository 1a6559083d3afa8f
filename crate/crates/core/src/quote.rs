//! POSIX `sh` quoting for display strings.

use std::borrow::Cow;

fn is_safe(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '/' | '=' | '-')
}

/// Quotes `token` so that a POSIX shell reads it back as exactly one word.
///
/// Tokens made only of `[A-Za-z0-9_./=-]` pass through unchanged. Anything
/// else is wrapped in single quotes, with embedded single quotes written as
/// `'\''`. The empty string becomes `''`.
pub fn shell_quote(token: &str) -> Cow<'_, str> {
    if !token.is_empty() && token.chars().all(is_safe) {
        return Cow::Borrowed(token);
    }
    let mut out = String::with_capacity(token.len() + 2);
    out.push('\'');
    for c in token.chars() {
        if c == '\'' {
            out.push_str("'\\''");
        } else {
            out.push(c);
        }
    }
    out.push('\'');
    Cow::Owned(out)
}

/// Quotes each token and joins them with single spaces.
pub fn shell_join<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| shell_quote(t.as_ref()))
        .collect::<Vec<_>>()
        .join(" ")
}
