use std::collections::BTreeMap;
use std::fmt;

use crate::family::Family;
use crate::record::SequenceRecord;
use crate::text::split_words;

/// `key=value;` pairs standing in for the visual input of a clip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Descriptor(BTreeMap<String, String>);

impl Descriptor {
    /// Lenient parse: segments without `=` are ignored, later keys win.
    pub fn parse(s: &str) -> Self {
        Self(
            s.split(';')
                .filter_map(|seg| seg.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .collect(),
        )
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn family(&self) -> Option<Family> {
        self.get("family").and_then(Family::from_keyword)
    }

    /// Canonical (verb, noun) for the described family.
    pub fn action_pair(&self) -> (&'static str, &'static str) {
        self.family().map(family_action).unwrap_or(("move", "hands"))
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(";"))
    }
}

pub fn family_action(f: Family) -> (&'static str, &'static str) {
    match f {
        Family::Wave => ("wave", "hand"),
        Family::CircleTrace => ("trace", "circle"),
        Family::GraspClose => ("grasp", "cup"),
        Family::PourTilt => ("pour", "kettle"),
        Family::KeyPress => ("press", "keys"),
        Family::Wipe => ("wipe", "table"),
        Family::KnitLoop => ("knit", "yarn"),
        Family::Clap => ("clap", "hands"),
    }
}

/// Descriptor of a record from its family, lead hand and manner words.
pub fn describe_record(rec: &SequenceRecord) -> Descriptor {
    let mut d = Descriptor::default();
    if let Some(f) = rec.family() {
        d.insert("family", f.keyword());
    }
    let words = split_words(&format!("{} {}", rec.caption_high, rec.caption_fine));
    let has = |w: &str| words.iter().any(|x| x == w);
    let lead = if has("both") || rec.family().is_some_and(|f| !f.is_single_handed()) {
        "both"
    } else if has("left") {
        "left"
    } else {
        "right"
    };
    d.insert("lead", lead);
    if has("slowly") || has("slow") {
        d.insert("tempo", "slow");
    } else if has("quickly") || has("fast") {
        d.insert("tempo", "fast");
    }
    if has("small") {
        d.insert("extent", "small");
    } else if has("wide") {
        d.insert("extent", "wide");
    }
    d.insert("frames", &rec.motion.num_frames().to_string());
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_corpus;

    #[test]
    fn parse_and_render() {
        let d = Descriptor::parse("family=pour; lead=left;junk;=x;tempo=slow");
        assert_eq!(d.get("lead"), Some("left"));
        assert_eq!(d.to_string(), "family=pour;lead=left;tempo=slow");
        assert_eq!(d.action_pair(), ("pour", "kettle"));
    }

    #[test]
    fn records_describe_their_family() {
        for rec in generate_corpus(16, 3) {
            let d = describe_record(&rec);
            assert_eq!(d.family(), rec.family());
            assert!(d.get("tempo").is_some(), "{}", rec.caption_high);
        }
    }
}
