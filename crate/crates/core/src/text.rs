//! Small text helpers shared by retrieval and transcript keying.

/// Words that are left alone or mapped to a fixed singular.
const IRREGULARS: &[(&str, &str)] = &[
    ("grass", "grass"),
    ("gas", "gas"),
    ("bus", "bus"),
    ("buses", "bus"),
    ("campus", "campus"),
    ("campuses", "campus"),
    ("status", "status"),
    ("series", "series"),
    ("species", "species"),
    ("news", "news"),
    ("people", "person"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("feet", "foot"),
    ("geese", "goose"),
    ("mice", "mouse"),
    ("teeth", "tooth"),
    ("shoes", "shoe"),
    ("quizzes", "quiz"),
    ("analyses", "analysis"),
    ("oases", "oasis"),
    ("axes", "axis"),
    ("gases", "gas"),
];

/// Rule-based English singularization of a single word. Irregulars match
/// case-insensitively; rule-based results keep the input's case.
pub fn singularize(word: &str) -> String {
    let lower = word.to_lowercase();
    if let Some((_, s)) = IRREGULARS.iter().find(|(p, _)| *p == lower) {
        return (*s).to_string();
    }
    let n = word.chars().count();
    if n <= 3 || lower.ends_with("ss") || lower.ends_with("us") || lower.ends_with("is") {
        return word.to_string();
    }
    let cut = |k: usize| word.chars().take(n - k).collect::<String>();
    if lower.ends_with("ies") {
        return cut(3) + "y";
    }
    if lower.ends_with("sses") || lower.ends_with("ches") || lower.ends_with("shes") || lower.ends_with("xes") {
        return cut(2);
    }
    if lower.ends_with("zzes") {
        return cut(3);
    }
    if lower.ends_with("oes") {
        return cut(2);
    }
    if lower.ends_with("ves") {
        return cut(3) + "f";
    }
    if lower.ends_with("ses") || lower.ends_with("zes") {
        return cut(1);
    }
    if lower.ends_with('s') {
        return cut(1);
    }
    word.to_string()
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased, singularized tokens.
pub fn singular_tokens(text: &str) -> Vec<String> {
    tokens(text).iter().map(|t| singularize(t)).collect()
}

/// Collapses runs of whitespace to a single space and trims the ends.
pub fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        for (plural, single) in [
            ("buildings", "building"),
            ("branches", "branch"),
            ("parks", "park"),
            ("categories", "category"),
            ("boxes", "box"),
            ("bushes", "bush"),
            ("classes", "class"),
            ("leaves", "leaf"),
            ("potatoes", "potato"),
            ("areas", "area"),
            ("roads", "road"),
            ("grass", "grass"),
            ("soil", "soil"),
            ("bus", "bus"),
            ("Buildings", "Building"),
            ("spaces", "space"),
            ("cafes", "cafe"),
        ] {
            assert_eq!(singularize(plural), single, "{plural}");
        }
    }

    #[test]
    fn irregular_list_is_fixed_point_or_mapping() {
        for (word, single) in IRREGULARS {
            assert_eq!(singularize(word), *single);
            assert_eq!(singularize(single), *single, "singular {single} must be stable");
        }
    }

    #[test]
    fn tokenizes_on_punctuation() {
        assert_eq!(tokens("Best soil, for FARMING!"), ["best", "soil", "for", "farming"]);
        assert_eq!(singular_tokens("areas with the best soil"), ["area", "with", "the", "best", "soil"]);
        assert_eq!(collapse_ws("  a \n b\t c "), "a b c");
    }
}
