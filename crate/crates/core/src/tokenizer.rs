//! WordPiece vocabulary training and encoding.
//!
//! Training starts from single characters (non-initial characters carry the
//! `##` continuation prefix) and repeatedly fuses the adjacent pair with the
//! highest likelihood score `count(pair) / (count(left) * count(right))`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const NUM_SPECIAL: u32 = SPECIAL_TOKENS.len() as u32;
pub const CONTINUATION: &str = "##";

/// Vocabulary budget used by BERT-style models.
pub const DEFAULT_VOCAB_SIZE: usize = 30_522;
pub const DEFAULT_MIN_FREQUENCY: u64 = 2;

const PUNCTUATION: [char; 4] = ['.', ':', '/', '-'];

/// Splits on whitespace, then makes each punctuation character a word of its
/// own.
pub fn pretokenize(line: &str) -> Vec<&str> {
    let mut words = Vec::new();
    for chunk in line.split_whitespace() {
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if PUNCTUATION.contains(&c) {
                if start < i {
                    words.push(&chunk[start..i]);
                }
                words.push(&chunk[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < chunk.len() {
            words.push(&chunk[start..]);
        }
    }
    words
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Tokenizer(format!(
                    "token {i} must be the special token {special}"
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Tokenizer(format!("invalid token {tok:?} at {i}")));
            }
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Tokenizer(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIAL
    }

    /// WordPiece pieces of a single pre-tokenized word, longest match first.
    /// A character with no matching piece becomes UNK and matching resumes
    /// after it.
    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut buf = String::new();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut matched = None;
            for end in (start + 1..bounds.len()).rev() {
                buf.clear();
                if start > 0 {
                    buf.push_str(CONTINUATION);
                }
                buf.push_str(&word[bounds[start]..bounds[end]]);
                if let Some(id) = self.id(&buf) {
                    matched = Some((id, end));
                    break;
                }
            }
            match matched {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.push(UNK);
                    start += 1;
                }
            }
        }
    }

    /// Token ids of `line` without CLS/SEP, truncation or padding.
    pub fn tokenize(&self, line: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in pretokenize(line) {
            self.word_pieces(word, &mut out);
        }
        out
    }

    /// `[CLS] pieces… [SEP]`, truncated to `max_len` with SEP kept last and
    /// right-padded with PAD.
    pub fn encode(&self, line: &str, max_len: usize) -> Vec<u32> {
        assert!(max_len >= 2, "max_len must leave room for CLS and SEP");
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS);
        let mut pieces = self.tokenize(line);
        pieces.truncate(max_len - 2);
        ids.extend(pieces);
        ids.push(SEP);
        ids.resize(max_len, PAD);
        ids
    }

    /// Joins pieces back into space-separated words, dropping PAD, CLS and
    /// SEP. UNK and MASK render as their literal token text.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or_else(|| {
                Error::value(
                    "token id",
                    format!("{id} is outside a vocab of {}", self.len()),
                )
            })?;
            if matches!(id, PAD | CLS | SEP) {
                continue;
            }
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        Ok(out)
    }

    /// One token per line; the line number is the token id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for tok in &self.tokens {
            let _ = writeln!(s, "{tok}");
        }
        s
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let tokens = reader
            .lines()
            .map(|l| l.map(|l| l.trim_end_matches('\r').to_string()))
            .collect::<std::io::Result<Vec<_>>>()?;
        Self::from_tokens(tokens)
    }

    /// Vocabulary of specials plus the character alphabet of `corpus`; the
    /// baseline a trained vocabulary is compared against.
    pub fn char_level<I, S>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        train_wordpiece(corpus, 0, u64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordPieceConfig {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl Default for WordPieceConfig {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            min_frequency: DEFAULT_MIN_FREQUENCY,
        }
    }
}

struct Symbols {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, name: String) -> u32 {
        if let Some(&id) = self.ids.get(&name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.clone(), id);
        self.names.push(name);
        id
    }
}

/// Trains a WordPiece vocabulary.
///
/// The base alphabet (every character seen, in both initial and `##`
/// continuation form) is always kept whole, so the result holds at least
/// `5 + alphabet` tokens even when `vocab_size` is smaller. Merging stops once
/// the budget is reached or no pair occurs at least `min_frequency` times.
/// Equal scores are resolved by the lexicographically smallest
/// `(left, right)` pair.
pub fn train_wordpiece<I, S>(corpus: I, vocab_size: usize, min_frequency: u64) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for line in corpus {
        for word in pretokenize(line.as_ref()) {
            *word_counts.entry(word.to_string()).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::Tokenizer("training corpus has no words".into()));
    }

    let alphabet: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    let mut base: Vec<String> = alphabet
        .iter()
        .flat_map(|c| [c.to_string(), format!("{CONTINUATION}{c}")])
        .collect();
    base.sort();

    let mut symbols = Symbols {
        names: Vec::new(),
        ids: HashMap::new(),
    };
    for tok in &base {
        symbols.intern(tok.clone());
    }
    let mut vocab_tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    vocab_tokens.extend(base.iter().cloned());
    let mut in_vocab: BTreeSet<String> = vocab_tokens.iter().cloned().collect();

    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .iter()
        .map(|(w, &count)| {
            let syms = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let name = if i == 0 {
                        c.to_string()
                    } else {
                        format!("{CONTINUATION}{c}")
                    };
                    symbols.ids[&name]
                })
                .collect();
            (syms, count)
        })
        .collect();

    let min_frequency = min_frequency.max(1);
    while vocab_tokens.len() < vocab_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        let mut sym_counts = vec![0u64; symbols.names.len()];
        for (syms, count) in &words {
            for &s in syms {
                sym_counts[s as usize] += count;
            }
            for pair in syms.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_default() += count;
            }
        }

        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &count) in &pair_counts {
            if count < min_frequency {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    let lhs = count as u128
                        * sym_counts[bp.0 as usize] as u128
                        * sym_counts[bp.1 as usize] as u128;
                    let rhs = bc as u128
                        * sym_counts[pair.0 as usize] as u128
                        * sym_counts[pair.1 as usize] as u128;
                    lhs > rhs
                        || (lhs == rhs
                            && (
                                &symbols.names[pair.0 as usize],
                                &symbols.names[pair.1 as usize],
                            ) < (&symbols.names[bp.0 as usize], &symbols.names[bp.1 as usize]))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        let Some(((left, right), _)) = best else {
            break;
        };

        let merged_name = format!(
            "{}{}",
            symbols.names[left as usize],
            symbols.names[right as usize]
                .strip_prefix(CONTINUATION)
                .unwrap_or(&symbols.names[right as usize])
        );
        let merged = symbols.intern(merged_name.clone());
        if in_vocab.insert(merged_name.clone()) {
            vocab_tokens.push(merged_name);
        }
        for (syms, _) in &mut words {
            if syms.len() < 2 {
                continue;
            }
            let mut i = 0;
            let mut out = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }
    log::debug!(
        "trained WordPiece vocabulary with {} tokens",
        vocab_tokens.len()
    );
    Vocab::from_tokens(vocab_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretokenize_splits_punctuation() {
        assert_eq!(pretokenize("1.2.3.4"), ["1", ".", "2", ".", "3", ".", "4"]);
        assert_eq!(pretokenize("proto: tcp"), ["proto", ":", "tcp"]);
        assert!(pretokenize("").is_empty());
        assert_eq!(pretokenize("id.orig_h: -"), ["id", ".", "orig_h", ":", "-"]);
        assert_eq!(pretokenize("fe80::1"), ["fe80", ":", ":", "1"]);
    }

    #[test]
    fn repeated_word_fuses() {
        let corpus = vec!["proto: tcp"; 1000];
        let v = train_wordpiece(&corpus, 300, 2).unwrap();
        assert!(v.id("tcp").is_some());
        assert!(v.id("proto").is_some());
        assert_eq!(v.tokenize("tcp"), vec![v.id("tcp").unwrap()]);
    }

    #[test]
    fn tiny_budget_keeps_alphabet() {
        let corpus = ["ab ba"];
        let v = train_wordpiece(corpus, 0, 1).unwrap();
        // specials + {a, ##a, b, ##b}
        assert_eq!(v.len(), 5 + 4);
        let exact = train_wordpiece(corpus, 9, 1).unwrap();
        assert_eq!(exact, v);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus: Vec<String> = (0..200)
            .map(|i| format!("id.orig_p: {} proto: udp", 49152 + (i * 7919) % 16000))
            .collect();
        let a = train_wordpiece(&corpus, 400, 2).unwrap();
        let b = train_wordpiece(&corpus, 400, 2).unwrap();
        assert_eq!(a.to_file_string(), b.to_file_string());
        assert!(a.len() <= 400);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(train_wordpiece(Vec::<String>::new(), 100, 2).is_err());
        assert!(train_wordpiece(["   "], 100, 2).is_err());
    }

    #[test]
    fn encode_empty_and_truncate() {
        let v = train_wordpiece(["proto: tcp"], 50, 1).unwrap();
        assert_eq!(
            v.encode("", 8),
            vec![CLS, SEP, PAD, PAD, PAD, PAD, PAD, PAD]
        );
        let ids = v.encode("proto: tcp proto: tcp proto: tcp", 4);
        assert_eq!(ids.len(), 4);
        assert_eq!(ids[0], CLS);
        assert_eq!(ids[3], SEP);
    }

    #[test]
    fn unseen_character_is_unk() {
        let v = train_wordpiece(["abc"], 50, 1).unwrap();
        let ids = v.tokenize("azc");
        assert!(ids.contains(&UNK));
        assert_eq!(ids.iter().filter(|&&i| i == UNK).count(), 1);
    }

    #[test]
    fn decode_joins_continuations() {
        let v = Vocab::from_tokens(
            SPECIAL_TOKENS
                .iter()
                .map(|s| s.to_string())
                .chain(["tcp", "8", "##88", "##8"].map(String::from))
                .collect(),
        )
        .unwrap();
        let tcp = v.id("tcp").unwrap();
        assert_eq!(v.decode(&[CLS, tcp, SEP]).unwrap(), "tcp");
        let ids = [
            CLS,
            v.id("8").unwrap(),
            v.id("##88").unwrap(),
            v.id("##8").unwrap(),
            SEP,
        ];
        assert_eq!(v.decode(&ids).unwrap(), "8888");
        assert!(matches!(v.decode(&[9_999_999]), Err(Error::Value { .. })));
    }

    #[test]
    fn file_round_trip() {
        let v = train_wordpiece(["id.resp_p: 25 proto: tcp"; 10], 80, 2).unwrap();
        let s = v.to_file_string();
        let back = Vocab::from_reader(s.as_bytes()).unwrap();
        assert_eq!(back, v);
        assert!(s.starts_with("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n"));
        assert!(Vocab::from_reader("[UNK]\n[PAD]\n".as_bytes()).is_err());
    }
}
