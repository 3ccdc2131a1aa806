#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use kinvec::kinship::{Lexicon, BUNDLED_LEXICON};
use kinvec::synth;

/// An extra lexicon row whose term never occurs in the fixture corpora.
pub const ABSENT_ROW: &str = "arrière-grand-père\tM\t3\t0\t0\t0\tPPP\tinferred\n";

/// Writes two kinship corpora and a small-scale pipeline config into `dir`.
/// With `absent_probe`, the lexicon gains a term missing from every corpus.
pub fn write_fixture(dir: &Path, absent_probe: bool) -> PathBuf {
    let lex = Lexicon::bundled().annotations();
    fs::create_dir_all(dir.join("corpora")).unwrap();
    fs::write(dir.join("corpora/alpha.txt"), synth::kinship_corpus_text(1, 3000, &lex)).unwrap();
    fs::write(dir.join("corpora/beta.txt"), synth::kinship_corpus_text(2, 3000, &lex)).unwrap();
    let mut lexicon_line = String::new();
    if absent_probe {
        fs::write(dir.join("lexicon.tsv"), format!("{BUNDLED_LEXICON}{ABSENT_ROW}")).unwrap();
        lexicon_line.push_str("lexicon = \"lexicon.tsv\"\n");
    }
    let config = format!(
        r#"output_dir = "out"
ensemble_size = 2
cohesion_ranks = [10, 25]
{lexicon_line}
[[corpus]]
id = "alpha"
path = "corpora/alpha.txt"

[[corpus]]
id = "beta"
path = "corpora/beta.txt"

[hyperparams]
dim = 24
epochs = 3
min_count = 3
seed = 7

[tsne]
iterations = 300
seed = 3
"#
    );
    let path = dir.join("kinvec.toml");
    fs::write(&path, config).unwrap();
    path
}
