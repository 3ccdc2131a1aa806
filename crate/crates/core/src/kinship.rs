//! Componential annotation of kinship terms and pairwise trait differences.
//!
//! A term is described by the elementary relation paths linking Ego to
//! Alter. Each path yields integer trait counts; an ambiguous term takes the
//! mean over its paths, so every value is an exact rational.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};

/// The bundled 25-term lexicon.
pub const BUNDLED_LEXICON: &str = include_str!("../data/kinship_lexicon.tsv");

/// Related tokens counted by the extended cohesion measure.
pub const BUNDLED_EXTENDED_SET: &str = include_str!("../data/extended_family.txt");

/// Trait names, in predictor order.
pub const TRAITS: [&str; 5] = ["genre", "ascendance", "descendance", "germanite", "alliance"];

const LEXICON_HEADER: &str = "term\tgenre\tascendance\tdescendance\tgermanite\talliance\tpaths\tprovenance";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KinshipError {
    #[error("no paths given for `{0}`")]
    NoPaths(String),
    #[error("paths of `{0}` end on different genres")]
    ConflictingGenre(String),
    #[error("invalid path `{path}`: {reason}")]
    InvalidPath { path: String, reason: String },
    #[error("term `{0}` appears more than once")]
    Duplicate(String),
    #[error("need at least two terms, got {0}")]
    TooFewTerms(usize),
    #[error("lexicon line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("`{term}`: stored {field} {stored} disagrees with its paths ({derived})")]
    Inconsistent {
        term: String,
        field: &'static str,
        stored: String,
        derived: String,
    },
}

pub type Result<T> = std::result::Result<T, KinshipError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Genre {
    F,
    M,
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Genre::F => "F",
            Genre::M => "M",
        })
    }
}

impl FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "F" => Ok(Genre::F),
            "M" => Ok(Genre::M),
            other => Err(format!("genre must be F or M, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Parent,
    Child,
    Sibling,
    Spouse,
}

impl Link {
    pub fn code(self) -> char {
        match self {
            Link::Parent => 'P',
            Link::Child => 'C',
            Link::Sibling => 'S',
            Link::Spouse => 'E',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'P' => Some(Link::Parent),
            'C' => Some(Link::Child),
            'S' => Some(Link::Sibling),
            'E' => Some(Link::Spouse),
            _ => None,
        }
    }
}

/// A chain of elementary links from Ego to Alter, with Alter's genre.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinPath {
    links: Vec<Link>,
    genre: Genre,
}

impl KinPath {
    pub fn new(links: Vec<Link>, genre: Genre) -> Result<Self> {
        if links.is_empty() {
            return Err(KinshipError::InvalidPath {
                path: String::new(),
                reason: "a path needs at least one link".into(),
            });
        }
        Ok(Self { links, genre })
    }

    /// Parses compact notation such as `PSE`.
    pub fn parse(code: &str, genre: Genre) -> Result<Self> {
        let links = code
            .chars()
            .map(|c| {
                Link::from_code(c).ok_or_else(|| KinshipError::InvalidPath {
                    path: code.to_owned(),
                    reason: format!("unknown link `{c}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(links, genre)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn genre(&self) -> Genre {
        self.genre
    }

    fn count(&self, link: Link) -> i64 {
        self.links.iter().filter(|&&l| l == link).count() as i64
    }
}

impl fmt::Display for KinPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.links {
            write!(f, "{}", l.code())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentialAnnotation {
    pub term: String,
    pub genre: Genre,
    pub ascendance: Rational64,
    pub descendance: Rational64,
    pub germanite: Rational64,
    pub alliance: Rational64,
}

impl ComponentialAnnotation {
    pub fn numeric(&self) -> [Rational64; 4] {
        [self.ascendance, self.descendance, self.germanite, self.alliance]
    }
}

/// Averages per-path trait counts. Sibling and spouse links may occur at most
/// once per path, keeping germanité and alliance within [0, 1].
pub fn annotate(term: &str, paths: &[KinPath]) -> Result<ComponentialAnnotation> {
    let first = paths
        .first()
        .ok_or_else(|| KinshipError::NoPaths(term.to_owned()))?;
    if paths.iter().any(|p| p.genre != first.genre) {
        return Err(KinshipError::ConflictingGenre(term.to_owned()));
    }
    for p in paths {
        for link in [Link::Sibling, Link::Spouse] {
            if p.count(link) > 1 {
                return Err(KinshipError::InvalidPath {
                    path: p.to_string(),
                    reason: format!("more than one `{}` link", link.code()),
                });
            }
        }
    }
    let n = paths.len() as i64;
    let mean = |link: Link| Rational64::new(paths.iter().map(|p| p.count(link)).sum(), n);
    Ok(ComponentialAnnotation {
        term: term.to_owned(),
        genre: first.genre,
        ascendance: mean(Link::Parent),
        descendance: mean(Link::Child),
        germanite: mean(Link::Sibling),
        alliance: mean(Link::Spouse),
    })
}

/// Absolute trait differences between two terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDiff {
    pub term_a: String,
    pub term_b: String,
    pub genre: Rational64,
    pub ascendance: Rational64,
    pub descendance: Rational64,
    pub germanite: Rational64,
    pub alliance: Rational64,
}

impl PairDiff {
    /// Differences in [`TRAITS`] order.
    pub fn values(&self) -> [Rational64; 5] {
        [
            self.genre,
            self.ascendance,
            self.descendance,
            self.germanite,
            self.alliance,
        ]
    }

    pub fn predictors(&self) -> [f64; 5] {
        self.values().map(|v| v.to_f64().expect("small rational"))
    }
}

pub fn feature_diff(a: &ComponentialAnnotation, b: &ComponentialAnnotation) -> PairDiff {
    let d = |x: Rational64, y: Rational64| (x - y).abs();
    PairDiff {
        term_a: a.term.clone(),
        term_b: b.term.clone(),
        genre: if a.genre == b.genre {
            Rational64::zero()
        } else {
            Rational64::from_integer(1)
        },
        ascendance: d(a.ascendance, b.ascendance),
        descendance: d(a.descendance, b.descendance),
        germanite: d(a.germanite, b.germanite),
        alliance: d(a.alliance, b.alliance),
    }
}

/// All unordered pairs, terms sorted, `term_a < term_b`.
pub fn all_pairs(lexicon: &[ComponentialAnnotation]) -> Result<Vec<PairDiff>> {
    let mut seen = HashSet::new();
    for a in lexicon {
        if !seen.insert(a.term.as_str()) {
            return Err(KinshipError::Duplicate(a.term.clone()));
        }
    }
    if lexicon.len() < 2 {
        return Err(KinshipError::TooFewTerms(lexicon.len()));
    }
    let mut sorted: Vec<&ComponentialAnnotation> = lexicon.iter().collect();
    sorted.sort_by(|a, b| a.term.cmp(&b.term));
    let mut out = Vec::with_capacity(lexicon.len() * (lexicon.len() - 1) / 2);
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            out.push(feature_diff(a, b));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Published,
    Inferred,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Published => "published",
            Provenance::Inferred => "inferred",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub annotation: ComponentialAnnotation,
    pub paths: Vec<KinPath>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
}

fn parse_rational(s: &str) -> std::result::Result<Rational64, String> {
    let r = match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let d: i64 = d.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            if d == 0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            Rational64::new(n, d)
        }
        None => Rational64::from_integer(s.trim().parse().map_err(|_| format!("bad value `{s}`"))?),
    };
    if r < Rational64::zero() {
        return Err(format!("negative trait value `{s}`"));
    }
    Ok(r)
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    /// Parses the tab-separated lexicon format. Lines starting with `#` are
    /// comments. Stored trait values must equal those derived from the paths.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let perr = |reason: String| KinshipError::Parse {
                line: lineno,
                reason,
            };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != LEXICON_HEADER {
                    return Err(perr(format!("expected header `{LEXICON_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(perr(format!("expected 8 fields, got {}", f.len())));
            }
            let term = f[0].to_owned();
            let genre: Genre = f[1].parse().map_err(perr)?;
            let paths = f[6]
                .split('|')
                .map(|p| KinPath::parse(p.trim(), genre))
                .collect::<Result<Vec<_>>>()?;
            let provenance = match f[7] {
                "published" => Provenance::Published,
                "inferred" => Provenance::Inferred,
                other => return Err(perr(format!("unknown provenance `{other}`"))),
            };
            let derived = annotate(&term, &paths)?;
            let names = ["ascendance", "descendance", "germanite", "alliance"];
            for (k, (name, dv)) in names.iter().zip(derived.numeric()).enumerate() {
                let stored = parse_rational(f[2 + k]).map_err(perr)?;
                if stored != dv {
                    return Err(KinshipError::Inconsistent {
                        term,
                        field: name,
                        stored: stored.to_string(),
                        derived: dv.to_string(),
                    });
                }
            }
            if !seen.insert(term.clone()) {
                return Err(KinshipError::Duplicate(term));
            }
            entries.push(LexiconEntry {
                annotation: derived,
                paths,
                provenance,
            });
        }
        if !header_seen {
            return Err(KinshipError::Parse {
                line: 0,
                reason: "missing header".into(),
            });
        }
        Ok(Self { entries })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{LEXICON_HEADER}\n");
        for e in &self.entries {
            let a = &e.annotation;
            let paths: Vec<String> = e.paths.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                a.term,
                a.genre,
                a.ascendance,
                a.descendance,
                a.germanite,
                a.alliance,
                paths.join("|"),
                e.provenance
            );
        }
        out
    }

    pub fn annotations(&self) -> Vec<ComponentialAnnotation> {
        self.entries.iter().map(|e| e.annotation.clone()).collect()
    }

    pub fn terms(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.annotation.term.clone()).collect()
    }

    pub fn get(&self, term: &str) -> Option<&ComponentialAnnotation> {
        self.entries
            .iter()
            .map(|e| &e.annotation)
            .find(|a| a.term == term)
    }

    /// Copy keeping only the given terms.
    pub fn retain_terms(&self, keep: &HashSet<&str>) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| keep.contains(e.annotation.term.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// Decimal rendering of a trait value, e.g. `1/2` as `0.5`.
pub fn decimal(r: Rational64) -> String {
    let v = r.to_f64().unwrap_or(f64::NAN);
    if r.is_integer() {
        format!("{}", r.to_integer())
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').to_owned()
    }
}

/// Per-term annotation table (`term genre ascendance …`), exact rationals.
pub fn annotation_table(annotations: &[ComponentialAnnotation]) -> String {
    let mut out = String::from("term\tgenre\tascendance\tdescendance\tgermanite\talliance\n");
    for a in annotations {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            a.term, a.genre, a.ascendance, a.descendance, a.germanite, a.alliance
        );
    }
    out
}

/// Per-pair difference table, exact rationals.
pub fn pair_table(pairs: &[PairDiff]) -> String {
    let mut out = String::from("term_a\tterm_b\tgenre\tascendance\tdescendance\tgermanite\talliance\n");
    for p in pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.term_a, p.term_b, p.genre, p.ascendance, p.descendance, p.germanite, p.alliance
        );
    }
    out
}

/// Tokens of the bundled extended family set.
pub fn bundled_extended_set() -> Vec<String> {
    parse_token_list(BUNDLED_EXTENDED_SET)
}

pub fn parse_token_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn paths(codes: &str, g: Genre) -> Vec<KinPath> {
        codes.split('|').map(|c| KinPath::parse(c, g).unwrap()).collect()
    }

    #[test]
    fn oncle_averages_its_four_paths() {
        // mother's brother, father's brother, and the husbands of their sisters
        let p = paths("PS|PS|PSE|PSE", Genre::M);
        let a = annotate("oncle", &p).unwrap();
        assert_eq!(a.genre, Genre::M);
        assert_eq!(a.numeric(), [r(1, 1), r(0, 1), r(1, 1), r(1, 2)]);
    }

    #[test]
    fn single_paths_give_integers() {
        let a = annotate("époux", &paths("E", Genre::M)).unwrap();
        assert_eq!(a.numeric(), [r(0, 1), r(0, 1), r(0, 1), r(1, 1)]);
        let a = annotate("grand-mère", &paths("PP", Genre::F)).unwrap();
        assert_eq!((a.genre, a.numeric()), (Genre::F, [r(2, 1), r(0, 1), r(0, 1), r(0, 1)]));
    }

    #[test]
    fn annotate_errors() {
        assert_eq!(annotate("x", &[]), Err(KinshipError::NoPaths("x".into())));
        let mixed = vec![
            KinPath::parse("P", Genre::F).unwrap(),
            KinPath::parse("P", Genre::M).unwrap(),
        ];
        assert_eq!(annotate("x", &mixed), Err(KinshipError::ConflictingGenre("x".into())));
        assert!(annotate("x", &paths("ESE", Genre::F)).is_err());
        assert!(KinPath::parse("PX", Genre::F).is_err());
        assert!(KinPath::parse("", Genre::F).is_err());
    }

    #[test]
    fn bundled_lexicon_has_25_consistent_terms() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.entries.len(), 25);
        let published: Vec<&str> = lex
            .entries
            .iter()
            .filter(|e| e.provenance == Provenance::Published)
            .map(|e| e.annotation.term.as_str())
            .collect();
        assert_eq!(published, vec!["belle-soeur", "cousin", "époux", "grand-mère", "oncle"]);
        assert_eq!(lex.get("filles").unwrap().numeric(), [r(0, 1), r(1, 1), r(0, 1), r(0, 1)]);
    }

    #[test]
    fn lexicon_tsv_roundtrip() {
        let lex = Lexicon::bundled();
        let back = Lexicon::parse(&lex.to_tsv()).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn lexicon_rejects_inconsistent_rows() {
        let bad = format!("{LEXICON_HEADER}\noncle\tM\t1\t0\t1\t1\tPS|PSE\tpublished\n");
        assert!(matches!(Lexicon::parse(&bad), Err(KinshipError::Inconsistent { field: "alliance", .. })));
        let dup = format!("{LEXICON_HEADER}\npère\tM\t1\t0\t0\t0\tP\tinferred\npère\tM\t1\t0\t0\t0\tP\tinferred\n");
        assert!(matches!(Lexicon::parse(&dup), Err(KinshipError::Duplicate(_))));
        assert!(Lexicon::parse("nope\n").is_err());
        let half = format!("{LEXICON_HEADER}\nx\tF\t0\t1\t1\t0.5\tSC|ESC\tinferred\n");
        assert!(Lexicon::parse(&half).is_err());
    }

    #[test]
    fn pair_counts() {
        let lex = Lexicon::bundled().annotations();
        assert_eq!(all_pairs(&lex).unwrap().len(), 300);
        assert_eq!(all_pairs(&lex[..2]).unwrap().len(), 1);
        assert_eq!(all_pairs(&lex[..5]).unwrap().len(), 10);
        assert_eq!(all_pairs(&lex[..1]), Err(KinshipError::TooFewTerms(1)));
        let dup = vec![lex[0].clone(), lex[0].clone()];
        assert!(matches!(all_pairs(&dup), Err(KinshipError::Duplicate(_))));
    }

    #[test]
    fn pairs_are_canonically_ordered() {
        let mut lex = Lexicon::bundled().annotations();
        lex.reverse();
        let pairs = all_pairs(&lex).unwrap();
        assert!(pairs.iter().all(|p| p.term_a < p.term_b));
        assert!(pairs.windows(2).all(|w| (&w[0].term_a, &w[0].term_b) < (&w[1].term_a, &w[1].term_b)));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal(r(1, 2)), "0.5");
        assert_eq!(decimal(r(2, 1)), "2");
        assert_eq!(decimal(r(1, 3)), "0.333");
    }

    fn annotation_strategy() -> impl Strategy<Value = ComponentialAnnotation> {
        (any::<bool>(), 0i64..3, 0i64..3, 0i64..2, 0i64..3, 1i64..3).prop_map(|(g, a, d, s, e, den)| {
            ComponentialAnnotation {
                term: "t".into(),
                genre: if g { Genre::F } else { Genre::M },
                ascendance: Rational64::new(a, den),
                descendance: Rational64::new(d, den),
                germanite: Rational64::new(s, den),
                alliance: Rational64::new(e.min(den), den),
            }
        })
    }

    proptest! {
        #[test]
        fn diff_properties(a in annotation_strategy(), b in annotation_strategy(), c in annotation_strategy()) {
            let zero = feature_diff(&a, &a);
            prop_assert!(zero.values().iter().all(|v| v.is_zero()));
            let ab = feature_diff(&a, &b);
            let ba = feature_diff(&b, &a);
            prop_assert_eq!(ab.values(), ba.values());
            let bc = feature_diff(&b, &c);
            let ac = feature_diff(&a, &c);
            for k in 0..5 {
                prop_assert!(ac.values()[k] <= ab.values()[k] + bc.values()[k]);
                prop_assert!(ab.values()[k] >= Rational64::zero());
            }
        }
    }
}
