//! Seeded synthetic corpora for tests, demos and benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Zipf};

use crate::corpus::TokenStream;
use crate::kinship::{ComponentialAnnotation, Genre};
use crate::rng;

/// Sentences of `len` tokens drawn uniformly from one of two disjoint word
/// clusters, so words only co-occur with their own cluster. Returns the
/// stream and the words of cluster A (`a0`, `a1`, …).
pub fn two_cluster_corpus(seed: u64, tokens: usize, size_a: usize, size_b: usize, len: usize) -> (TokenStream, Vec<String>) {
    let a: Vec<String> = (0..size_a).map(|i| format!("a{i}")).collect();
    let b: Vec<String> = (0..size_b).map(|i| format!("b{i}")).collect();
    let share_a = size_a as f64 / (size_a + size_b) as f64;
    let mut r = rng::Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(tokens / len + 1);
    let mut n = 0;
    while n < tokens {
        let cluster = if r.random_bool(share_a) { &a } else { &b };
        let s: Vec<String> = (0..len).map(|_| cluster.choose(&mut r).expect("nonempty").clone()).collect();
        n += s.len();
        sentences.push(s);
    }
    (TokenStream::new(sentences), a)
}

/// Zipf-distributed tokens `w0 … w{vocab-1}` in sentences of 5–20 tokens.
pub fn zipf_corpus(seed: u64, tokens: usize, vocab: usize) -> TokenStream {
    let mut r = rng::Rng::seed_from_u64(seed);
    let zipf = Zipf::new(vocab as f64, 1.1).expect("valid Zipf parameters");
    let mut sentences = Vec::new();
    let mut n = 0;
    while n < tokens {
        let len = r.random_range(5..=20).min(tokens - n);
        let s: Vec<String> = (0..len)
            .map(|_| format!("w{}", zipf.sample(&mut r) as usize - 1))
            .collect();
        n += len;
        sentences.push(s);
    }
    TokenStream::new(sentences)
}

const FILLER: usize = 60;

fn cue(r: &mut rng::Rng, prefix: &str, strength: f64) -> Vec<String> {
    // one cue word per whole unit of the trait, plus one more with the
    // probability of the fractional remainder
    let whole = strength.floor() as usize;
    let extra = usize::from(r.random_bool(strength.fract()));
    (0..whole + extra).map(|_| format!("{prefix}{}", r.random_range(0..4))).collect()
}

/// One line of text per sentence: a kinship term surrounded by cue words
/// whose frequencies follow its trait values, plus shared filler.
pub fn kinship_corpus_text(seed: u64, sentences: usize, lexicon: &[ComponentialAnnotation]) -> String {
    use num_traits::ToPrimitive;
    let mut r = rng::Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..sentences {
        let a = lexicon.choose(&mut r).expect("nonempty lexicon");
        let mut words = vec![match a.genre {
            Genre::F => "elle".to_owned(),
            Genre::M => "il".to_owned(),
        }];
        let f = |x: num_rational::Rational64| x.to_f64().unwrap_or(0.0);
        words.extend(cue(&mut r, "ancien", f(a.ascendance)));
        words.extend(cue(&mut r, "cadet", f(a.descendance)));
        words.extend(cue(&mut r, "fratrie", f(a.germanite)));
        words.extend(cue(&mut r, "noces", f(a.alliance)));
        for _ in 0..r.random_range(2..6) {
            words.push(format!("mot{}", r.random_range(0..FILLER)));
        }
        let pos = r.random_range(0..=words.len());
        words.insert(pos, a.term.clone());
        out.push_str(&words.join(" "));
        out.push_str(" .\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinship::Lexicon;

    #[test]
    fn two_cluster_sentences_stay_in_one_cluster() {
        let (s, a) = two_cluster_corpus(1, 1000, 5, 20, 10);
        assert!(s.token_count() >= 1000);
        assert_eq!(a.len(), 5);
        for sent in s.sentences() {
            let first = sent[0].as_bytes()[0];
            assert!(sent.iter().all(|w| w.as_bytes()[0] == first));
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(zipf_corpus(3, 500, 50), zipf_corpus(3, 500, 50));
        assert_eq!(zipf_corpus(3, 500, 50).token_count(), 500);
        let lex = Lexicon::bundled().annotations();
        let t = kinship_corpus_text(9, 50, &lex);
        assert_eq!(t, kinship_corpus_text(9, 50, &lex));
        assert_eq!(t.lines().count(), 50);
    }
}
