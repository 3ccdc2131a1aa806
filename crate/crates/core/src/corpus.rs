//! Corpus ingestion: tokenization, proper-name masking, frequency-thresholded
//! vocabularies and probe filtering.
//!
//! Input text is expected one sentence per line. Lemmatization and
//! grammatical-gender neutralization happen upstream; in
//! [`TokenizeMode::PreTokenized`] mode tokens are taken as whitespace-separated
//! fields exactly as written.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Encoding { offset: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("vocabulary file line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizeMode {
    /// Tokens are whitespace-separated, sentences are lines.
    #[default]
    PreTokenized,
    /// Punctuation is split off; hyphenated compounds stay whole.
    Raw,
}

impl FromStr for TokenizeMode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretokenized" | "pre-tokenized" => Ok(Self::PreTokenized),
            "raw" => Ok(Self::Raw),
            other => Err(CorpusError::Config(format!("unknown tokenize mode `{other}`"))),
        }
    }
}

/// Sentences of tokens. Training windows never cross a sentence boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    sentences: Vec<Vec<String>>,
}

impl TokenStream {
    /// Builds a stream, dropping empty tokens and empty sentences.
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        let sentences = sentences
            .into_iter()
            .map(|s| s.into_iter().filter(|t| !t.is_empty()).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        Self { sentences }
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Vec<String>> {
        self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn extend(&mut self, other: TokenStream) {
        self.sentences.extend(other.sentences);
    }
}

impl<S: Into<String>> FromIterator<Vec<S>> for TokenStream {
    fn from_iter<I: IntoIterator<Item = Vec<S>>>(iter: I) -> Self {
        Self::new(
            iter.into_iter()
                .map(|s| s.into_iter().map(Into::into).collect())
                .collect(),
        )
    }
}

/// Decodes and tokenizes a text buffer.
///
/// Raw mode rules, applied to each whitespace-delimited chunk:
/// * letters, digits and combining marks accumulate into a word;
/// * a hyphen between two alphanumeric characters joins a compound (`grand-mère`);
/// * `.` or `,` between two digits stays inside a number (`3,5`);
/// * an apostrophe between two letters ends an elided word and stays attached
///   to it (`d'Edie` gives `d'`, `Edie`);
/// * every other punctuation or symbol character is its own token.
pub fn tokenize(bytes: &[u8], mode: TokenizeMode) -> Result<TokenStream> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Encoding {
        offset: e.valid_up_to(),
    })?;
    Ok(tokenize_str(text, mode))
}

pub fn tokenize_str(text: &str, mode: TokenizeMode) -> TokenStream {
    TokenStream::new(text.lines().map(|line| tokenize_line(line, mode)).collect())
}

pub fn tokenize_line(line: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::PreTokenized => line.split_whitespace().map(str::to_owned).collect(),
        TokenizeMode::Raw => {
            let mut out = Vec::new();
            for chunk in line.split_whitespace() {
                split_raw_chunk(chunk, &mut out);
            }
            out
        }
    }
}

fn is_hyphen(c: char) -> bool {
    matches!(c, '-' | '\u{2010}' | '\u{2011}')
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}')
}

fn split_raw_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let next = chars.get(i + 1).copied();
        if c.is_alphanumeric() {
            word.push(c);
        } else if is_hyphen(c)
            && !word.is_empty()
            && prev.is_some_and(char::is_alphanumeric)
            && next.is_some_and(char::is_alphanumeric)
        {
            word.push(c);
        } else if matches!(c, '.' | ',')
            && prev.is_some_and(|p| p.is_ascii_digit())
            && next.is_some_and(|n| n.is_ascii_digit())
            && !word.is_empty()
        {
            word.push(c);
        } else if is_apostrophe(c)
            && !word.is_empty()
            && prev.is_some_and(char::is_alphabetic)
            && next.is_some_and(char::is_alphabetic)
        {
            word.push(c);
            flush(&mut word, out);
        } else if c.is_ascii_punctuation() || is_unicode_punct(c) {
            flush(&mut word, out);
            out.push(c.to_string());
        } else {
            // combining marks and other word-internal symbols
            word.push(c);
        }
    }
    flush(&mut word, out);
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '«' | '»' | '“' | '”' | '‘' | '’' | '…' | '–' | '—' | '¡' | '¿' | '·' | '•' | '„'
    )
}

/// Reads a corpus file (one sentence per line).
pub fn read_corpus(path: &Path, mode: TokenizeMode) -> Result<TokenStream> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    tokenize(&bytes, mode)
}

/// Proper-name masking settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    pub mask_token: String,
    pub proper_name_lexicon: Option<HashSet<String>>,
    /// Mask capitalized tokens that are not sentence-initial.
    pub heuristic: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            mask_token: "NAM".to_owned(),
            proper_name_lexicon: None,
            heuristic: false,
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mask_token.is_empty() || self.mask_token.chars().any(char::is_whitespace) {
            return Err(CorpusError::Config(
                "mask token must be a nonempty token without whitespace".into(),
            ));
        }
        Ok(())
    }

    pub fn is_noop(&self) -> bool {
        self.proper_name_lexicon.is_none() && !self.heuristic
    }

    fn should_mask(&self, token: &str, position: usize) -> bool {
        if let Some(lexicon) = &self.proper_name_lexicon {
            if lexicon.contains(token) {
                return true;
            }
        }
        self.heuristic && position > 0 && token.chars().next().is_some_and(char::is_uppercase)
    }

    fn mask_sentence(&self, sentence: &mut [String]) {
        for (pos, tok) in sentence.iter_mut().enumerate() {
            if *tok != self.mask_token && self.should_mask(tok, pos) {
                tok.clone_from(&self.mask_token);
            }
        }
    }
}

/// Loads a proper-name lexicon: one token per line, blank lines ignored.
pub fn load_name_lexicon(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Replaces proper names by the mask token. Stream shape is preserved.
pub fn mask_proper_names(stream: TokenStream, cfg: &NormalizationConfig) -> Result<TokenStream> {
    cfg.validate()?;
    let mut sentences = stream.into_sentences();
    for sentence in &mut sentences {
        cfg.mask_sentence(sentence);
    }
    Ok(TokenStream { sentences })
}

/// Raw token counts, mergeable across files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
    total: u64,
}

impl TokenCounts {
    pub fn from_stream(stream: &TokenStream) -> Self {
        let mut counts = Self::default();
        for tok in stream.tokens() {
            counts.add(tok);
        }
        counts
    }

    pub fn add(&mut self, token: &str) {
        self.total += 1;
        if let Some(c) = self.counts.get_mut(token) {
            *c += 1;
        } else {
            self.counts.insert(token.to_owned(), 1);
        }
    }

    pub fn merge(mut self, other: TokenCounts) -> Self {
        self.total += other.total;
        for (tok, c) in other.counts {
            *self.counts.entry(tok).or_insert(0) += c;
        }
        self
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Counts several corpus files concurrently, then merges.
pub fn count_files(
    paths: &[&Path],
    mode: TokenizeMode,
    norm: &NormalizationConfig,
) -> Result<TokenCounts> {
    paths
        .par_iter()
        .map(|p| {
            let stream = mask_proper_names(read_corpus(p, mode)?, norm)?;
            Ok(TokenCounts::from_stream(&stream))
        })
        .try_reduce(TokenCounts::default, |a, b| Ok(a.merge(b)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
}

/// Token to dense id map. Ids follow descending count, ties by token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    pub fn build(stream: &TokenStream, min_count: u64) -> Result<Self> {
        Self::from_counts(&TokenCounts::from_stream(stream), min_count)
    }

    pub fn from_counts(counts: &TokenCounts, min_count: u64) -> Result<Self> {
        if min_count == 0 {
            return Err(CorpusError::Config("min_count must be at least 1".into()));
        }
        let mut entries: Vec<VocabEntry> = counts
            .counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(t, &c)| VocabEntry {
                token: t.clone(),
                count: c,
            })
            .collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
        Ok(Self::from_entries(entries, counts.total, min_count))
    }

    fn from_entries(entries: Vec<VocabEntry>, total_tokens: u64, min_count: u64) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token.clone(), i))
            .collect();
        Self {
            entries,
            index,
            total_tokens,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.entries[id].token
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    /// Count of `token`, 0 when it fell under the threshold or never occurred.
    pub fn count_of(&self, token: &str) -> u64 {
        self.id(token).map_or(0, |i| self.entries[i].count)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Sum of counts of retained entries.
    pub fn retained_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "token\tcount\tid")?;
        for (id, e) in self.entries.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", e.token, e.count, id)?;
        }
        Ok(())
    }

    /// Reads an exported vocabulary. The file does not carry the corpus
    /// size, so `total_tokens` is the sum of counts and `min_count` is the
    /// smallest count present.
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| vocab_err(1, e.to_string()))?
            .unwrap_or_default();
        if header != "token\tcount\tid" {
            return Err(vocab_err(1, format!("unexpected header `{header}`")));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| vocab_err(lineno, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(vocab_err(lineno, "expected 3 tab-separated fields".into()));
            }
            let count: u64 = fields[1]
                .parse()
                .map_err(|_| vocab_err(lineno, format!("bad count `{}`", fields[1])))?;
            let id: usize = fields[2]
                .parse()
                .map_err(|_| vocab_err(lineno, format!("bad id `{}`", fields[2])))?;
            if id != entries.len() {
                return Err(vocab_err(lineno, format!("ids must be dense, got {id}")));
            }
            entries.push(VocabEntry {
                token: fields[0].to_owned(),
                count,
            });
        }
        let total = entries.iter().map(|e| e.count).sum();
        let min_count = entries.iter().map(|e| e.count).min().unwrap_or(1);
        Ok(Self::from_entries(entries, total, min_count))
    }
}

fn vocab_err(line: usize, reason: String) -> CorpusError {
    CorpusError::VocabFormat { line, reason }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub probe: String,
    pub corpus: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeFilter {
    pub retained: Vec<String>,
    pub rejections: Vec<Rejection>,
}

/// Keeps probes whose count reaches `threshold` in every vocabulary.
/// Every failing (probe, corpus) combination is reported.
pub fn filter_probes<S: AsRef<str>>(
    probes: &[S],
    vocabularies: &[(&str, &Vocabulary)],
    threshold: u64,
) -> Result<ProbeFilter> {
    if vocabularies.is_empty() {
        return Err(CorpusError::Config("at least one vocabulary is required".into()));
    }
    let mut out = ProbeFilter::default();
    for probe in probes {
        let probe = probe.as_ref();
        let mut ok = true;
        for (corpus, vocab) in vocabularies {
            let count = vocab.count_of(probe);
            if count < threshold {
                ok = false;
                out.rejections.push(Rejection {
                    probe: probe.to_owned(),
                    corpus: (*corpus).to_owned(),
                    count,
                });
            }
        }
        if ok {
            out.retained.push(probe.to_owned());
        }
    }
    Ok(out)
}

/// Deterministic frequency listing, handy for reports.
pub fn sorted_counts(counts: &TokenCounts) -> BTreeMap<&str, u64> {
    counts.counts.iter().map(|(k, &v)| (k.as_str(), v)).collect()
}
