//! Writes a small synthetic workspace (two corpora plus a config) for trying
//! the command line end to end:
//!
//!     cargo run --release --example demo -- /tmp/kinvec-demo
//!     cargo run --release -- train   --config /tmp/kinvec-demo/kinvec.toml
//!     cargo run --release -- analyze --config /tmp/kinvec-demo/kinvec.toml

use std::fs;
use std::path::PathBuf;

use kinvec::kinship::Lexicon;
use kinvec::synth;

const CONFIG: &str = r#"output_dir = "out"
ensemble_size = 5
cohesion_ranks = [10, 25]

[[corpus]]
id = "north"
path = "corpora/north.txt"

[[corpus]]
id = "south"
path = "corpora/south.txt"

[hyperparams]
dim = 50
epochs = 5
min_count = 5
seed = 1

[tsne]
perplexity = 5.0
seed = 42
"#;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "kinvec-demo".into()));
    let lexicon = Lexicon::bundled().annotations();
    fs::create_dir_all(dir.join("corpora"))?;
    fs::write(dir.join("corpora/north.txt"), synth::kinship_corpus_text(11, 20_000, &lexicon))?;
    fs::write(dir.join("corpora/south.txt"), synth::kinship_corpus_text(12, 20_000, &lexicon))?;
    fs::write(dir.join("kinvec.toml"), CONFIG)?;
    println!("{}", dir.join("kinvec.toml").display());
    Ok(())
}
