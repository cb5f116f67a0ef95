//! Binary model persistence.
//!
//! Layout (all integers little-endian):
//!   magic `GLDM`, format version u32,
//!   K u32, V u32,
//!   alpha: K f64, beta: K*V f64 row-major,
//!   vocabulary: V entries of (u32 length, UTF-8 bytes),
//!   language tags: u8 flag; if 1, V entries of (u32 length, UTF-8 bytes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::lda::ModelParams;

const MAGIC: &[u8; 4] = b"GLDM";
const VERSION: u32 = 1;

pub fn save_model(path: impl AsRef<Path>, params: &ModelParams, vocab: &Vocabulary) -> Result<()> {
    params.validate()?;
    if vocab.len() != params.n_words() {
        return Err(Error::Validation(format!(
            "vocabulary has {} tokens, beta has {} columns",
            vocab.len(),
            params.n_words()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.n_topics() as u32).to_le_bytes())?;
    w.write_all(&(params.n_words() as u32).to_le_bytes())?;
    for &a in &params.alpha {
        w.write_all(&a.to_le_bytes())?;
    }
    for row in &params.beta {
        for &p in row {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    for token in vocab.tokens() {
        let bytes = token.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    match vocab.langs() {
        Some(langs) => {
            w.write_all(&[1u8])?;
            for lang in langs {
                let bytes = lang.as_bytes();
                w.write_all(&(bytes.len() as u32).to_le_bytes())?;
                w.write_all(bytes)?;
            }
        }
        None => w.write_all(&[0u8])?,
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, Vocabulary)> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let corrupt = |msg: &str| Error::Validation(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| corrupt("truncated header"))?;
    if &magic != MAGIC {
        return Err(corrupt("not a model file (bad magic)"));
    }
    let version = read_u32(&mut r).map_err(|_| corrupt("truncated header"))?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    let k = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
    let v = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
    if k == 0 || v == 0 {
        return Err(corrupt("zero-sized model"));
    }

    let mut alpha = vec![0.0; k];
    for a in &mut alpha {
        *a = read_f64(&mut r).map_err(|_| corrupt("truncated alpha block"))?;
    }
    let mut beta = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = vec![0.0; v];
        for p in &mut row {
            *p = read_f64(&mut r).map_err(|_| corrupt("truncated beta block"))?;
        }
        beta.push(row);
    }
    let mut tokens = Vec::with_capacity(v);
    for _ in 0..v {
        tokens.push(read_string(&mut r).map_err(|_| corrupt("truncated vocabulary block"))?);
    }
    let mut vocab = Vocabulary::from_tokens(tokens)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)
        .map_err(|_| corrupt("truncated language block"))?;
    if flag[0] == 1 {
        let mut langs = Vec::with_capacity(v);
        for _ in 0..v {
            langs.push(read_string(&mut r).map_err(|_| corrupt("truncated language block"))?);
        }
        vocab.set_langs(langs)?;
    } else if flag[0] != 0 {
        return Err(corrupt("bad language-tag flag"));
    }

    let params = ModelParams { alpha, beta };
    params.validate()?;
    Ok((params, vocab))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ModelParams, Vocabulary) {
        let params = ModelParams {
            alpha: vec![0.5, 1.5],
            beta: vec![vec![0.25, 0.25, 0.5], vec![0.1, 0.2, 0.7]],
        };
        let mut vocab = Vocabulary::from_tokens(["alpha", "中国", "c"]).unwrap();
        vocab
            .set_langs(vec!["en".into(), "zh".into(), "en".into()])
            .unwrap();
        (params, vocab)
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let (params, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &params, &vocab).unwrap();
        let (p2, v2) = load_model(&path).unwrap();
        assert_eq!(params, p2);
        assert_eq!(vocab, v2);
    }

    #[test]
    fn writes_are_byte_stable() {
        let (params, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        save_model(&a, &params, &vocab).unwrap();
        save_model(&b, &params, &vocab).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a model").unwrap();
        assert!(load_model(&path).is_err());

        let (params, vocab) = sample();
        let good = dir.path().join("good.bin");
        save_model(&good, &params, &vocab).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_model(&path).is_err());
    }
}
