use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingError, Result};

/// Magic header of the binary vector format.
pub const BINARY_MAGIC: &[u8; 8] = b"KINVECB1";

/// Dense row-major word vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl VectorTable {
    pub fn new(words: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::Invalid("vector dimension must be positive".into()));
        }
        if data.len() != words.len() * dim {
            return Err(EmbeddingError::Invalid(format!(
                "{} words × {} dims needs {} values, got {}",
                words.len(),
                dim,
                words.len() * dim,
                data.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(EmbeddingError::Invalid(format!("invalid token {w:?}")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::Invalid(format!("duplicate word `{w}`")));
            }
        }
        Ok(Self {
            words,
            index,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|i| self.vector(i))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copy with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Copy restricted to `words`, in that order.
    pub fn subset<S: AsRef<str>>(&self, words: &[S]) -> Result<Self> {
        let mut data = Vec::with_capacity(words.len() * self.dim);
        let mut kept = Vec::with_capacity(words.len());
        for w in words {
            let w = w.as_ref();
            let v = self
                .get(w)
                .ok_or_else(|| EmbeddingError::UnknownWord(w.to_owned()))?;
            data.extend_from_slice(v);
            kept.push(w.to_owned());
        }
        Self::new(kept, self.dim, data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Text format: `V D` header, then `token v1 … vD` per line. Values are
    /// written in shortest round-trip notation.
    pub fn write_text<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            w.write_all(word.as_bytes())?;
            for v in self.vector(i) {
                write!(w, " {v:?}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| format_err(1, "missing header"))?;
        let mut parts = header.split_whitespace();
        let (v, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(v), Some(d), None) => (
                v.parse::<usize>().map_err(|_| format_err(1, "bad word count"))?,
                d.parse::<usize>().map_err(|_| format_err(1, "bad dimension"))?,
            ),
            _ => return Err(format_err(1, "header must be `V D`")),
        };
        let mut words = Vec::with_capacity(v);
        let mut data = Vec::with_capacity(v * d);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let lineno = i + 2;
            let mut fields = line.split(' ');
            let word = fields.next().unwrap_or_default();
            let before = data.len();
            for f in fields.filter(|f| !f.is_empty()) {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| format_err(lineno, "unparsable value"))?,
                );
            }
            if data.len() - before != d {
                return Err(format_err(lineno, "wrong number of values"));
            }
            words.push(word.to_owned());
        }
        if words.len() != v {
            return Err(format_err(0, "word count disagrees with header"));
        }
        Self::new(words, d, data)
    }

    /// Binary format: magic, `V` and `D` as little-endian u64, then per word a
    /// little-endian u32 byte length, the UTF-8 token and `D` little-endian f32.
    pub fn write_binary<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for (i, word) in self.words.iter().enumerate() {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
            for &v in self.vector(i) {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(format_err(0, "bad magic header"));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let v = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let d = u64::from_le_bytes(u64buf) as usize;
        let mut words = Vec::with_capacity(v);
        let mut data = Vec::with_capacity(v * d);
        let mut u32buf = [0u8; 4];
        for _ in 0..v {
            r.read_exact(&mut u32buf)?;
            let mut bytes = vec![0u8; u32::from_le_bytes(u32buf) as usize];
            r.read_exact(&mut bytes)?;
            words.push(String::from_utf8(bytes).map_err(|_| format_err(0, "token is not UTF-8"))?);
            for _ in 0..d {
                r.read_exact(&mut u32buf)?;
                data.push(f64::from(f32::from_le_bytes(u32buf)));
            }
        }
        Self::new(words, d, data)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        Ok(self.write_text(File::create(path)?)?)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        Ok(self.write_binary(File::create(path)?)?)
    }

    /// Loads either format, detected from the magic header.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let is_binary = reader.fill_buf()?.starts_with(BINARY_MAGIC);
        if is_binary {
            Self::read_binary(reader)
        } else {
            Self::read_text(reader)
        }
    }
}

fn format_err(line: usize, reason: &str) -> EmbeddingError {
    EmbeddingError::Format {
        line,
        reason: reason.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> VectorTable {
        VectorTable::new(
            vec!["père".into(), "mère".into(), "NAM".into()],
            2,
            vec![0.1, -2.5e-9, 1.0 / 3.0, 7.0, -0.0, 123456.789],
        )
        .unwrap()
    }

    #[test]
    fn text_format_layout() {
        let t = VectorTable::new(vec!["a".into()], 2, vec![0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 2\na 0.5 -1.0\n");
    }

    #[test]
    fn binary_roundtrip_is_f32_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert!(buf.starts_with(BINARY_MAGIC));
        let back = VectorTable::read_binary(&buf[..]).unwrap();
        assert_eq!(back.words(), t.words());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
    }

    #[test]
    fn load_detects_format() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample();
        let txt = dir.path().join("m.txt");
        let bin = dir.path().join("m.bin");
        t.save_text(&txt).unwrap();
        t.save_binary(&bin).unwrap();
        assert_eq!(VectorTable::load(&txt).unwrap(), t);
        assert_eq!(VectorTable::load(&bin).unwrap().words(), t.words());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(VectorTable::read_text(&b"2 2\na 1 2\n"[..]).is_err());
        assert!(VectorTable::read_text(&b"1 2\na 1\n"[..]).is_err());
        assert!(VectorTable::read_text(&b"1 2\na 1 x\n"[..]).is_err());
        assert!(VectorTable::read_text(&b""[..]).is_err());
        assert!(VectorTable::new(vec!["a".into(), "a".into()], 1, vec![1.0, 2.0]).is_err());
        assert!(VectorTable::new(vec!["a".into()], 2, vec![1.0]).is_err());
    }

    #[test]
    fn subset_preserves_vectors() {
        let t = sample();
        let s = t.subset(&["NAM", "père"]).unwrap();
        assert_eq!(s.get("NAM"), t.get("NAM"));
        assert_eq!(s.id("père"), Some(1));
        assert!(t.subset(&["x"]).is_err());
    }

    proptest! {
        #[test]
        fn text_roundtrip_is_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
            let t = VectorTable::new(vec!["x".into(), "y".into(), "z".into()], 2, values).unwrap();
            let mut buf = Vec::new();
            t.write_text(&mut buf).unwrap();
            let back = VectorTable::read_text(&buf[..]).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
