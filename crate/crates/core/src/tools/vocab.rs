//! Word lists and text normalization shared by the synthetic backend and the
//! dataset generators.

/// Attribute key and the values it may take in synthetic scenes.
pub const ATTRIBUTES: &[(&str, &[&str])] = &[
    (
        "color",
        &[
            "red", "green", "blue", "yellow", "black", "white", "gray", "brown", "orange",
            "purple", "pink",
        ],
    ),
    (
        "material",
        &[
            "wood", "metal", "plastic", "glass", "ceramic", "fabric", "leather", "rubber",
            "paper", "stone",
        ],
    ),
    (
        "shape",
        &["triangle", "square", "pentagon", "hexagon", "circle"],
    ),
    ("size", &["tiny", "small", "medium", "large", "huge"]),
    ("thickness", &["thick", "thin"]),
    ("wetness", &["wet", "dry"]),
    ("cleanliness", &["clean", "dirty"]),
    ("height", &["tall", "short"]),
    ("openness", &["open", "closed"]),
];

/// Object categories the generators draw from.
pub const CATEGORIES: &[&str] = &[
    "person", "coat", "purse", "sandwich", "cat", "dog", "towel", "box", "knife", "cup",
    "umbrella", "car", "bus", "chair", "table", "bottle", "apple", "banana", "book", "lamp",
    "bag", "shirt", "hat", "ball", "vase", "horse", "bird", "face", "sphere", "cube",
];

const IRREGULAR: &[(&str, &str)] = &[
    ("people", "person"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("wolves", "wolf"),
    ("shelves", "shelf"),
    ("sheep", "sheep"),
    ("fish", "fish"),
    ("glasses", "glasses"),
    ("bus", "bus"),
    ("buses", "bus"),
    ("glass", "glass"),
    ("grass", "grass"),
    ("dress", "dress"),
];

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "of", "in", "on", "at", "and",
    "or", "to", "with", "it", "its", "this", "that", "these", "those", "as", "for", "by",
    "from", "very", "quite", "one", "some",
];

/// Singular form: irregulars table, then `-ies`, sibilant `-es`, plain `-s`.
pub fn singularize(word: &str) -> String {
    let w = word.to_lowercase();
    if let Some((_, s)) = IRREGULAR.iter().find(|(p, _)| *p == w) {
        return s.to_string();
    }
    if w.len() > 3 && w.ends_with("ies") {
        return format!("{}y", &w[..w.len() - 3]);
    }
    for suffix in ["ches", "shes", "sses", "xes", "zes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.len() > 2 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
        return w[..w.len() - 1].to_string();
    }
    w
}

/// Lower-cased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w)
}

/// Words that carry meaning for alignment scoring.
pub fn content_words(text: &str) -> Vec<String> {
    words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// Normalize an object phrase: lower-case, drop articles, singularize the head.
pub fn normalize_phrase(phrase: &str) -> Vec<String> {
    let mut ws: Vec<String> = words(phrase)
        .into_iter()
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect();
    if let Some(last) = ws.last_mut() {
        *last = singularize(last);
    }
    ws
}

/// Attribute key a value belongs to, if it is in the vocabulary.
pub fn attribute_key(value: &str) -> Option<&'static str> {
    let v = value.to_lowercase();
    ATTRIBUTES
        .iter()
        .find(|(_, vals)| vals.contains(&v.as_str()))
        .map(|(k, _)| *k)
}

pub fn attribute_values(key: &str) -> &'static [&'static str] {
    ATTRIBUTES
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .unwrap_or(&[])
}

pub fn is_category(word: &str) -> bool {
    CATEGORIES.contains(&singularize(word).as_str())
}

/// Strip articles and punctuation, lower-case, collapse whitespace.
pub fn normalize_text(text: &str) -> String {
    words(text)
        .into_iter()
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}
