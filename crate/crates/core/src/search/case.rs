//! Identifier case-convention normalization for variable search.

/// True for a single identifier such as `maxRetryCount` or `MAX_RETRY`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Lowercase word sequence of an identifier, split on underscores and case
/// boundaries (`HTTPServer` -> `http`, `server`).
pub fn split_words(ident: &str) -> Vec<String> {
    let chars: Vec<char> = ident.chars().collect();
    let mut words = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || !c.is_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if c.is_uppercase() && !cur.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                words.push(std::mem::take(&mut cur));
            }
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Byte ranges of identifier tokens in a line.
pub fn identifier_tokens(line: &str) -> Vec<(usize, &str)> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, &line[start..i]));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conventions_normalize_to_the_same_words() {
        let expected = vec!["max", "retry", "count"];
        for v in ["maxRetryCount", "MaxRetryCount", "max_retry_count", "MAX_RETRY_COUNT"] {
            assert_eq!(split_words(v), expected, "{v}");
        }
    }

    #[test]
    fn acronyms_split_before_the_next_word() {
        assert_eq!(split_words("HTTPServer"), vec!["http", "server"]);
        assert_eq!(split_words("parseHTTP2Response"), vec!["parse", "http2", "response"]);
    }

    #[test]
    fn tokens_skip_numbers_and_punctuation() {
        let toks: Vec<&str> = identifier_tokens("x = self.max_retry_count + 3e5")
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        assert_eq!(toks, vec!["x", "self", "max_retry_count"]);
    }

    #[test]
    fn identifier_detection() {
        assert!(is_identifier("maxRetryCount"));
        assert!(is_identifier("_private"));
        assert!(!is_identifier("max retry"));
        assert!(!is_identifier("a.b"));
        assert!(!is_identifier("9lives"));
    }
}
