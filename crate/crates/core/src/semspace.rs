//! Cosine similarity, exact nearest neighbors and lexical cohesion.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::embedding::VectorTable;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SemspaceError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("word `{0}` is not in the model vocabulary")]
    OutOfVocabulary(String),
    #[error("k = {k} must lie in 1..{vocab}")]
    BadRank { k: usize, vocab: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SemspaceError>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(SemspaceError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(SemspaceError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine between two words of a table.
pub fn word_cosine(table: &VectorTable, a: &str, b: &str) -> Result<f64> {
    let u = table
        .get(a)
        .ok_or_else(|| SemspaceError::OutOfVocabulary(a.to_owned()))?;
    let v = table
        .get(b)
        .ok_or_else(|| SemspaceError::OutOfVocabulary(b.to_owned()))?;
    cosine(u, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub id: usize,
    pub score: f64,
}

/// Neighbors of `query`, most similar first. The query itself is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query: String,
    pub entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|n| n.token.as_str())
    }

    /// `rank<TAB>token<TAB>score` lines, score to 6 decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\ttoken\tcosine\n");
        for (i, n) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{:.6}", i + 1, n.token, n.score);
        }
        out
    }
}

/// Exhaustive scan; ties go to the lower vocabulary id.
pub fn nearest_neighbors(table: &VectorTable, word: &str, k: usize) -> Result<NeighborList> {
    let qid = table
        .id(word)
        .ok_or_else(|| SemspaceError::OutOfVocabulary(word.to_owned()))?;
    if k == 0 || k >= table.len() {
        return Err(SemspaceError::BadRank {
            k,
            vocab: table.len(),
        });
    }
    let q = table.vector(qid);
    let qn = norm(q);
    if qn == 0.0 {
        return Err(SemspaceError::ZeroVector);
    }
    let mut scored: Vec<(f64, usize)> = (0..table.len())
        .filter(|&i| i != qid)
        .map(|i| {
            let v = table.vector(i);
            let vn = norm(v);
            let s = if vn == 0.0 {
                f64::NEG_INFINITY
            } else {
                q.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (qn * vn)
            };
            (s, i)
        })
        .collect();
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    Ok(NeighborList {
        query: word.to_owned(),
        entries: scored
            .into_iter()
            .map(|(score, id)| Neighbor {
                token: table.word(id).to_owned(),
                id,
                score: score.clamp(-1.0, 1.0),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCohesion {
    pub probe: String,
    /// Neighbors within the counted set.
    pub hits: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohesionReport {
    pub k: usize,
    pub probe_set: String,
    /// Name of the counted set when it is not the probe set itself.
    pub extended_set: Option<String>,
    pub per_probe: Vec<ProbeCohesion>,
    pub mean: f64,
}

/// Set of tokens a neighbor must fall in to count.
#[derive(Debug, Clone, Copy)]
pub enum CountSet<'a> {
    Probes,
    /// Probes plus extra related tokens, under the given name.
    Extended { name: &'a str, extra: &'a [String] },
}

/// Fraction of each probe's `k` nearest neighbors that fall in the count
/// set, macro-averaged over probes.
pub fn cohesion_at_k<S: AsRef<str>>(
    table: &VectorTable,
    probes: &[S],
    probe_set: &str,
    k: usize,
    count_set: CountSet<'_>,
) -> Result<CohesionReport> {
    if probes.is_empty() {
        return Err(SemspaceError::Invalid("probe set is empty".into()));
    }
    if let Some(p) = probes.iter().find(|p| !table.contains(p.as_ref())) {
        return Err(SemspaceError::OutOfVocabulary(p.as_ref().to_owned()));
    }
    let mut counted: HashSet<&str> = probes.iter().map(AsRef::as_ref).collect();
    let extended_set = match count_set {
        CountSet::Probes => None,
        CountSet::Extended { name, extra } => {
            counted.extend(extra.iter().map(String::as_str));
            Some(name.to_owned())
        }
    };
    let per_probe = probes
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let nn = nearest_neighbors(table, p, k)?;
            let hits = nn.tokens().filter(|t| *t != p && counted.contains(t)).count();
            Ok(ProbeCohesion {
                probe: p.to_owned(),
                hits,
                fraction: hits as f64 / k as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_probe.iter().map(|c| c.fraction).sum::<f64>() / per_probe.len() as f64;
    Ok(CohesionReport {
        k,
        probe_set: probe_set.to_owned(),
        extended_set,
        per_probe,
        mean,
    })
}

/// Cohesion of several models (one per corpus) at the same rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CohesionSummary {
    pub k: usize,
    pub per_corpus: Vec<(String, f64)>,
    /// Mean of each probe across corpora.
    pub per_term: Vec<(String, f64)>,
    /// Mean over all (probe, corpus) values.
    pub overall: f64,
}

pub fn summarize(reports: &[(&str, &CohesionReport)]) -> Result<CohesionSummary> {
    let (_, first) = reports
        .first()
        .ok_or_else(|| SemspaceError::Invalid("no cohesion reports".into()))?;
    if reports.iter().any(|(_, r)| r.k != first.k) {
        return Err(SemspaceError::Invalid("reports use different ranks".into()));
    }
    let per_corpus = reports.iter().map(|(c, r)| ((*c).to_owned(), r.mean)).collect();
    let mut per_term = Vec::new();
    for pc in &first.per_probe {
        let vals: Vec<f64> = reports
            .iter()
            .filter_map(|(_, r)| r.per_probe.iter().find(|x| x.probe == pc.probe))
            .map(|x| x.fraction)
            .collect();
        per_term.push((pc.probe.clone(), vals.iter().sum::<f64>() / vals.len() as f64));
    }
    let all: Vec<f64> = reports
        .iter()
        .flat_map(|(_, r)| r.per_probe.iter().map(|x| x.fraction))
        .collect();
    Ok(CohesionSummary {
        k: first.k,
        per_corpus,
        per_term,
        overall: all.iter().sum::<f64>() / all.len() as f64,
    })
}
