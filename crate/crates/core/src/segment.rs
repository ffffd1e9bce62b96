//! Sentence segmentation, word tokenization and syllable counting.
//!
//! All offsets are character (not byte) offsets into the NFC-normalized
//! form of the input. For text that is already NFC, which covers nearly
//! every corpus in practice, they index the input directly.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    /// Contains at least one letter.
    pub is_word: bool,
}

/// Lowercased forms that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "co.", "corp.", "dept.", "dr.", "e.g.", "eq.", "eqs.", "esp.",
    "fig.", "figs.", "i.e.", "inc.", "jr.", "ltd.", "mr.", "mrs.", "ms.", "no.", "nos.", "prof.",
    "pp.", "ref.", "refs.", "sr.", "st.", "vol.", "vs.", "viz.", "univ.", "resp.", "sec.", "tab.",
    "jan.", "feb.", "mar.", "apr.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
];

fn nfc(text: &str) -> Vec<char> {
    text.nfc().collect()
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']' | '}')
}

/// Whether the whitespace-delimited word ending at `end` (exclusive) blocks a split.
fn ends_with_abbreviation(chars: &[char], word_start: usize, end: usize) -> bool {
    let word: String = chars[word_start..end].iter().collect::<String>().to_lowercase();
    let word = word.trim_start_matches(['(', '[', '"', '\'', '\u{201c}', '\u{2018}']);
    if ABBREVIATIONS.contains(&word) {
        return true;
    }
    // Dotted forms such as "Ph.D." or "U.S." carry an internal period.
    let body = word.trim_end_matches('.');
    body.contains('.') && body.chars().any(char::is_alphabetic)
}

/// Splits text into sentences on terminal punctuation and blank lines.
///
/// A period is not a boundary when the next word starts with a lowercase
/// letter or when the word it closes is a known or dotted abbreviation.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars = nfc(text);
    let n = chars.len();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut word_start = 0;
    let mut i = 0;

    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            // Blank line: paragraph break ends any open sentence.
            if let Some(s) = start {
                let mut j = i;
                let mut newlines = 0;
                while j < n && chars[j].is_whitespace() {
                    if chars[j] == '\n' {
                        newlines += 1;
                    }
                    j += 1;
                }
                if newlines >= 2 {
                    spans.push((s, trim_end(&chars, s, i)));
                    start = None;
                }
                i = j;
                word_start = i;
                continue;
            }
            i += 1;
            word_start = i;
            continue;
        }
        if start.is_none() {
            start = Some(i);
            word_start = i;
        }
        if is_terminal(c) {
            let mut j = i + 1;
            while j < n && (is_terminal(chars[j]) || is_closing(chars[j])) {
                j += 1;
            }
            if j >= n {
                break;
            }
            if chars[j].is_whitespace() {
                let mut k = j;
                while k < n && chars[k].is_whitespace() {
                    k += 1;
                }
                let next = chars.get(k).copied();
                let lower_next = next.is_some_and(char::is_lowercase);
                let abbrev = c == '.'
                    && chars[i + 1..j].iter().all(|&x| x == '.' || is_closing(x))
                    && ends_with_abbreviation(&chars, word_start, i + 1);
                if next.is_none() || (!lower_next && !abbrev) {
                    spans.push((start.take().unwrap_or(i), j));
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let e = trim_end(&chars, s, n);
        if e > s {
            spans.push((s, e));
        }
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| Sentence {
            index,
            char_start: s,
            char_end: e,
            text: chars[s..e].iter().collect(),
        })
        .collect()
}

fn trim_end(chars: &[char], start: usize, mut end: usize) -> usize {
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    end
}

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"\p{N}+(?:[.,]\p{N}+)+",                 // 3.14, 1,024
        r"|\p{L}+(?:\.\p{L}+)+\.?",                // e.g., Ph.D., U.S.
        r"|[\p{L}\p{N}]+(?:['’\-][\p{L}\p{N}]+)*", // words, don't, well-known
        r"|\S",                                    // any other single symbol
    ))
    .expect("token pattern compiles")
});

/// Splits text into word and punctuation tokens in source order.
pub fn tokenize(text: &str) -> Vec<Token> {
    let normalized: String = text.nfc().collect();
    let mut tokens = Vec::new();
    // Running byte -> char offset conversion.
    let mut byte_pos = 0;
    let mut char_pos = 0;
    for m in TOKEN_RE.find_iter(&normalized) {
        char_pos += normalized[byte_pos..m.start()].chars().count();
        let len = m.as_str().chars().count();
        tokens.push(Token {
            text: m.as_str().to_string(),
            char_start: char_pos,
            char_end: char_pos + len,
            is_word: m.as_str().chars().any(char::is_alphabetic),
        });
        char_pos += len;
        byte_pos = m.end();
    }
    tokens
}

/// Lowercased word tokens only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.is_word)
        .map(|t| t.text.to_lowercase())
        .collect()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Estimates the syllable count of an English word.
///
/// Counts vowel groups, then drops a silent final `e` (keeping consonant +
/// `le`), and the silent vowel of `-es`/`-ed` endings. Never returns 0.
pub fn count_syllables(word: &str) -> Result<usize> {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if letters.is_empty() {
        return Err(Error::invalid(format!("`{word}` contains no letters")));
    }

    let mut groups = 0usize;
    let mut prev_vowel = false;
    for (i, &c) in letters.iter().enumerate() {
        // Word-initial y before a vowel is a consonant ("yes", "young").
        let vowel = is_vowel(c) && !(c == 'y' && i == 0 && letters.get(1).is_some_and(|&n| is_vowel(n)));
        if vowel && !prev_vowel {
            groups += 1;
        }
        prev_vowel = vowel;
    }

    let n = letters.len();
    let at = |k: usize| letters[n - k];
    if groups > 1 && n >= 3 {
        let lone_final = |k: usize| !is_vowel(at(k + 1));
        if at(1) == 'e' && lone_final(1) {
            let consonant_le = at(2) == 'l' && n >= 4 && !is_vowel(at(3));
            if !consonant_le {
                groups -= 1;
            }
        } else if n >= 4 && at(2) == 'e' && lone_final(2) {
            let keep = match at(1) {
                // "-ted"/"-ded", and consonant + r clusters ("hundred", "sacred").
                'd' => matches!(at(3), 't' | 'd') || (at(3) == 'r' && !is_vowel(at(4)) && at(4) != 'r'),
                's' => {
                    matches!(at(3), 's' | 'x' | 'z' | 'c' | 'g')
                        || (at(3) == 'h' && matches!(at(4), 'c' | 's'))
                }
                _ => true,
            };
            if !keep {
                groups -= 1;
            }
        }
    }
    Ok(groups.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        segment_sentences(s).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn empty_input() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   \n ").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn two_terminal_periods() {
        assert_eq!(texts("A. B."), vec!["A.", "B."]);
    }

    #[test]
    fn dotted_abbreviation_is_not_a_boundary() {
        assert_eq!(
            texts("He got a Ph.D. in 2020. Then he left."),
            vec!["He got a Ph.D. in 2020.", "Then he left."]
        );
        assert_eq!(
            texts("See Fig. 3 for details. It helps."),
            vec!["See Fig. 3 for details.", "It helps."]
        );
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        assert_eq!(
            texts("She said \"stop.\" Then she left!"),
            vec!["She said \"stop.\"", "Then she left!"]
        );
    }

    #[test]
    fn blank_line_is_a_boundary() {
        assert_eq!(texts("Introduction\n\nThe cat sat."), vec!["Introduction", "The cat sat."]);
    }

    #[test]
    fn offsets_index_the_source() {
        let text = "Caf\u{e9} is open.  Is it?\nYes!";
        let chars: Vec<char> = text.chars().collect();
        for s in segment_sentences(text) {
            let slice: String = chars[s.char_start..s.char_end].iter().collect();
            assert_eq!(slice, s.text);
        }
    }

    #[test]
    fn tokens() {
        let t = tokenize("e.g., cats");
        let got: Vec<_> = t.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(got, ["e.g.", ",", "cats"]);
        assert_eq!(t.iter().filter(|t| t.is_word).count(), 2);
        assert_eq!(tokenize("the cat").len(), 2);
        assert_eq!(tokenize("Hello, world.").len(), 4);
        let got: Vec<_> = tokenize("It's 3.5 well-known").into_iter().map(|t| t.text).collect();
        assert_eq!(got, ["It's", "3.5", "well-known"]);
    }

    #[test]
    fn syllables() {
        assert_eq!(count_syllables("cat").unwrap(), 1);
        assert_eq!(count_syllables("cerebellum").unwrap(), 4);
        assert_eq!(count_syllables("make").unwrap(), 1);
        assert_eq!(count_syllables("table").unwrap(), 2);
        assert_eq!(count_syllables("the").unwrap(), 1);
        assert_eq!(count_syllables("wanted").unwrap(), 2);
        assert_eq!(count_syllables("jumped").unwrap(), 1);
        assert_eq!(count_syllables("boxes").unwrap(), 2);
        assert!(matches!(count_syllables("42"), Err(Error::InvalidArgument(_))));
        assert!(count_syllables("").is_err());
    }
}
