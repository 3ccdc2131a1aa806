use super::{EmbeddingError, EmbeddingModel, Result, VectorTable};

/// Provenance of one block of an ensemble vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberInfo {
    pub label: String,
    pub dim: usize,
    pub seed: Option<u64>,
}

/// Anything whose vectors can be stacked into an ensemble.
pub trait EnsembleMember {
    fn vectors(&self) -> &VectorTable;
    fn member_info(&self) -> Vec<MemberInfo>;
}

impl EnsembleMember for EmbeddingModel {
    fn vectors(&self) -> &VectorTable {
        &self.input
    }

    fn member_info(&self) -> Vec<MemberInfo> {
        vec![MemberInfo {
            label: format!("{}#{}", self.meta.corpus_id, self.meta.hyperparams.seed),
            dim: self.input.dim(),
            seed: Some(self.meta.hyperparams.seed),
        }]
    }
}

impl EnsembleMember for EnsembleModel {
    fn vectors(&self) -> &VectorTable {
        &self.table
    }

    fn member_info(&self) -> Vec<MemberInfo> {
        self.members.clone()
    }
}

/// A loaded vector file, labelled by the caller.
#[derive(Debug, Clone)]
pub struct LabeledTable {
    pub label: String,
    pub table: VectorTable,
}

impl EnsembleMember for LabeledTable {
    fn vectors(&self) -> &VectorTable {
        &self.table
    }

    fn member_info(&self) -> Vec<MemberInfo> {
        vec![MemberInfo {
            label: self.label.clone(),
            dim: self.table.dim(),
            seed: None,
        }]
    }
}

/// Per-word concatenation of member vectors over the shared vocabulary.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub table: VectorTable,
    pub members: Vec<MemberInfo>,
    pub normalized: bool,
}

impl EnsembleModel {
    pub fn dim(&self) -> usize {
        self.table.dim()
    }
}

/// Concatenates member vectors word by word.
///
/// The vocabulary is the intersection of the members', in the first member's
/// order. With `normalize`, each member block is scaled to unit L2 norm
/// before concatenation so every member weighs equally in the ensemble
/// cosine; zero blocks are left as they are.
pub fn concatenate_models(members: &[&dyn EnsembleMember], normalize: bool) -> Result<EnsembleModel> {
    let first = members
        .first()
        .ok_or_else(|| EmbeddingError::Invalid("no models to concatenate".into()))?;
    let tables: Vec<&VectorTable> = members.iter().map(|m| m.vectors()).collect();
    let words: Vec<String> = first
        .vectors()
        .words()
        .iter()
        .filter(|w| tables[1..].iter().all(|t| t.contains(w)))
        .cloned()
        .collect();
    if words.is_empty() {
        return Err(EmbeddingError::EmptyIntersection);
    }
    let dim: usize = tables.iter().map(|t| t.dim()).sum();
    let mut data = Vec::with_capacity(words.len() * dim);
    for w in &words {
        for t in &tables {
            let v = t.get(w).expect("word is in the intersection");
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if normalize && norm > 0.0 {
                data.extend(v.iter().map(|x| x / norm));
            } else {
                data.extend_from_slice(v);
            }
        }
    }
    Ok(EnsembleModel {
        table: VectorTable::new(words, dim, data)?,
        members: members.iter().flat_map(|m| m.member_info()).collect(),
        normalized: normalize,
    })
}
