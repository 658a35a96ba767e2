//! String normalization shared by room labels, object metadata and queries.

const LEADING_DETERMINERS: &[&str] = &["my", "the", "a", "an", "your", "our", "his", "her", "their"];

/// Lowercase, trim and collapse inner whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Object metadata normalization: same as [`normalize_label`], and
/// leading articles / possessives are stripped ("my keys" -> "keys").
pub fn normalize_object(raw: &str) -> String {
    let label = normalize_label(raw);
    let mut words: Vec<&str> = label.split(' ').filter(|w| !w.is_empty()).collect();
    while words.len() > 1 && LEADING_DETERMINERS.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// Normalize a list of object phrases: trimmed, lowercase, non-empty, deduplicated
/// with first-occurrence order kept.
pub fn normalize_objects<I, S>(raw: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out: Vec<String> = Vec::new();
    for item in raw {
        let obj = normalize_object(item.as_ref());
        if !obj.is_empty() && !out.contains(&obj) {
            out.push(obj);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_normalization_collapses_whitespace() {
        assert_eq!(normalize_label("  Living   Room "), "living room");
        assert_eq!(normalize_label("Parlor"), "parlor");
    }

    #[test]
    fn object_normalization_strips_possessives() {
        assert_eq!(normalize_object("Keys "), "keys");
        assert_eq!(normalize_object("my ID card"), "id card");
        assert_eq!(normalize_object("the  Magnifying Glass"), "magnifying glass");
        // a lone determiner is left alone rather than erased
        assert_eq!(normalize_object("my"), "my");
    }

    #[test]
    fn object_lists_are_deduplicated() {
        assert_eq!(
            normalize_objects(["Keys", " keys", "", "wallet "]),
            vec!["keys".to_string(), "wallet".to_string()]
        );
    }
}
