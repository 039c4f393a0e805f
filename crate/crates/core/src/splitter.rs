//! Splits a multi-command instruction into per-command phrases.
//!
//! Verbs are found by lexicon lookup. A verb next to an auxiliary is itself
//! auxiliary; every other verb heads a phrase. Each phrase after the first
//! starts at its verb's leading context (auxiliaries, pronouns, adverbs such
//! as "could you please"), and conjunctions sitting on a phrase boundary are
//! dropped.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

const POS_LEXICON_JSON: &str = include_str!("../data/pos_lexicon.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Verb,
    Aux,
    Conj,
    Noun,
    Det,
    Prep,
    Pron,
    Adv,
    Adj,
    Other,
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pos> {
        Ok(match s {
            "VERB" => Pos::Verb,
            "AUX" => Pos::Aux,
            "CONJ" => Pos::Conj,
            "NOUN" => Pos::Noun,
            "DET" => Pos::Det,
            "PREP" => Pos::Prep,
            "PRON" => Pos::Pron,
            "ADV" => Pos::Adv,
            "ADJ" => Pos::Adj,
            "OTHER" => Pos::Other,
            _ => bail!(Validation, "unknown POS tag '{s}'"),
        })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pos::Verb => "VERB",
            Pos::Aux => "AUX",
            Pos::Conj => "CONJ",
            Pos::Noun => "NOUN",
            Pos::Det => "DET",
            Pos::Prep => "PREP",
            Pos::Pron => "PRON",
            Pos::Adv => "ADV",
            Pos::Adj => "ADJ",
            Pos::Other => "OTHER",
        };
        f.write_str(s)
    }
}

#[derive(Deserialize)]
struct RawLexicon {
    version: u32,
    #[serde(default)]
    default: Option<Pos>,
    entries: HashMap<String, Pos>,
}

/// Word to part-of-speech map; unknown words fall back to `default`.
#[derive(Clone, Debug)]
pub struct PosLexicon {
    pub entries: HashMap<String, Pos>,
    pub default: Pos,
}

impl Default for PosLexicon {
    fn default() -> Self {
        PosLexicon::from_json(POS_LEXICON_JSON).expect("bundled POS lexicon is valid")
    }
}

impl PosLexicon {
    pub fn from_json(text: &str) -> Result<PosLexicon> {
        let raw: RawLexicon = serde_json::from_str(text)?;
        if raw.version != 1 {
            bail!(Config, "unsupported lexicon version {}", raw.version);
        }
        Ok(PosLexicon { entries: raw.entries, default: raw.default.unwrap_or(Pos::Noun) })
    }

    pub fn load(path: &Path) -> Result<PosLexicon> {
        PosLexicon::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn tag(&self, word: &str) -> Pos {
        self.entries.get(word).copied().unwrap_or(self.default)
    }
}

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub start: usize,
    pub end: usize,
}

impl PhraseSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn slice<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        &items[self.start..self.end]
    }
}

pub fn pos_tag(tokens: &[String], lexicon: &PosLexicon) -> Vec<Pos> {
    tokens.iter().map(|t| lexicon.tag(t)).collect()
}

/// Indices of verbs that head a phrase.
pub fn find_principal_verbs(tokens: &[String], tags: &[Pos]) -> Vec<usize> {
    debug_assert_eq!(tokens.len(), tags.len());
    (0..tags.len())
        .filter(|&i| {
            tags[i] == Pos::Verb
                && !(i > 0 && tags[i - 1] == Pos::Aux)
                && !(i + 1 < tags.len() && tags[i + 1] == Pos::Aux)
        })
        .collect()
}

fn is_leading_context(pos: Pos) -> bool {
    matches!(pos, Pos::Aux | Pos::Adv | Pos::Pron)
}

#[derive(Clone, Debug, Default)]
pub struct Splitter {
    pub lexicon: PosLexicon,
}

impl Splitter {
    pub fn new(lexicon: PosLexicon) -> Splitter {
        Splitter { lexicon }
    }

    pub fn split(&self, tokens: &[String]) -> Vec<PhraseSpan> {
        split_with(tokens, &pos_tag(tokens, &self.lexicon))
    }

    /// Token slices of each phrase.
    pub fn phrases(&self, tokens: &[String]) -> Vec<Vec<String>> {
        self.split(tokens).iter().map(|s| s.slice(tokens).to_vec()).collect()
    }
}

/// Splits with the bundled lexicon.
pub fn split(tokens: &[String]) -> Vec<PhraseSpan> {
    Splitter::default().split(tokens)
}

pub fn split_with(tokens: &[String], tags: &[Pos]) -> Vec<PhraseSpan> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let verbs = find_principal_verbs(tokens, tags);
    if verbs.len() <= 1 {
        return vec![PhraseSpan { start: 0, end: tokens.len() }];
    }
    // (conjunction run start, clause start) for each boundary after the first verb
    let mut boundaries = Vec::with_capacity(verbs.len() - 1);
    for pair in verbs.windows(2) {
        let (prev, verb) = (pair[0], pair[1]);
        let mut clause = verb;
        while clause > prev + 1 && is_leading_context(tags[clause - 1]) {
            clause -= 1;
        }
        let mut conj = clause;
        while conj > prev + 1 && tags[conj - 1] == Pos::Conj {
            conj -= 1;
        }
        boundaries.push((conj, clause));
    }
    let mut spans = Vec::with_capacity(verbs.len());
    let mut start = 0;
    for (conj, clause) in boundaries {
        spans.push(PhraseSpan { start, end: conj });
        start = clause;
    }
    spans.push(PhraseSpan { start, end: tokens.len() });
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn words(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn texts(s: &str) -> Vec<String> {
        let toks = words(s);
        split(&toks).iter().map(|sp| sp.slice(&toks).join(" ")).collect()
    }

    #[test]
    fn pos_tag_examples() {
        let lex = PosLexicon::default();
        assert_eq!(pos_tag(&words("go to the kitchen"), &lex), vec![Pos::Verb, Pos::Prep, Pos::Det, Pos::Noun]);
        assert!(pos_tag(&[], &lex).is_empty());
        assert_eq!(pos_tag(&words("flibber"), &lex), vec![Pos::Noun]);
    }

    #[test]
    fn lexicon_covers_required_words() {
        let lex = PosLexicon::default();
        assert_eq!(lex.tag("and"), Pos::Conj);
        assert_eq!(lex.tag("then"), Pos::Conj);
        for w in ["please", "could", "would", "can", "will"] {
            assert!(lex.entries.contains_key(w), "{w}");
        }
    }

    #[test]
    fn principal_verbs() {
        let lex = PosLexicon::default();
        let t = words("could you go to the kitchen");
        assert_eq!(find_principal_verbs(&t, &pos_tag(&t, &lex)), vec![2]);
        let t = words("go to the kitchen and grab the coke");
        assert_eq!(find_principal_verbs(&t, &pos_tag(&t, &lex)), vec![0, 5]);
        let t = words("the kitchen");
        assert!(find_principal_verbs(&t, &pos_tag(&t, &lex)).is_empty());
        // a verb right after an auxiliary does not head a phrase
        let t = words("you will go");
        assert!(find_principal_verbs(&t, &pos_tag(&t, &lex)).is_empty());
    }

    #[test]
    fn split_examples() {
        assert_eq!(texts("go to the kitchen and grab the coke"), vec!["go to the kitchen", "grab the coke"]);
        assert_eq!(texts("go to the kitchen"), vec!["go to the kitchen"]);
        assert_eq!(
            texts("go to the kitchen then find john and guide him to the exit"),
            vec!["go to the kitchen", "find john", "guide him to the exit"]
        );
        assert_eq!(texts("go and grab the coke"), vec!["go", "grab the coke"]);
        assert_eq!(
            texts("grab the coke and then could you please go to the kitchen"),
            vec!["grab the coke", "could you please go to the kitchen"]
        );
        assert_eq!(texts("the coke and the apple"), vec!["the coke and the apple"]);
    }

    #[test]
    fn verbless_input_is_one_span() {
        let t = words("kitchen");
        assert_eq!(split(&t), vec![PhraseSpan { start: 0, end: 1 }]);
        assert!(split(&[]).is_empty());
    }
}
