//! File formats: a little-endian binary container for posterior tables
//! (JSON mirror for fixtures), JSON language models and toy models, and a
//! JSON-lines dataset format.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lftrain::{
    LabelSequence, NGramPhonemeLM, Phoneme, PosteriorTable, ToyDataset, ToyModel, Utterance,
    Vocabulary,
};
use serde::{Deserialize, Serialize};

const TABLE_MAGIC: &[u8; 4] = b"LFTR";
const TABLE_VERSION: u32 = 1;

/// Binary layout: magic "LFTR", version, then T, k, |V| as little-endian
/// u32, then the row-major f64 log-probabilities ordered
/// (frame, context code, symbol) with blank last.
pub fn save_table_binary(path: &Path, table: &PosteriorTable) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + table.log_probs().len() * 8);
    buf.extend_from_slice(TABLE_MAGIC);
    buf.extend_from_slice(&TABLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(table.k() as u32).to_le_bytes());
    buf.extend_from_slice(&(table.vocab().size() as u32).to_le_bytes());
    for &v in table.log_probs() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn load_table_binary(bytes: &[u8], path: &Path) -> Result<PosteriorTable> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TABLE_MAGIC {
        bail!("{}: not a table file (bad magic)", path.display());
    }
    let version = read_u32(&mut r)?;
    if version != TABLE_VERSION {
        bail!("{}: unsupported table version {version}", path.display());
    }
    let frames = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let vocab = Vocabulary::new(read_u32(&mut r)? as usize)?;
    let mut log_probs = Vec::new();
    let mut b = [0u8; 8];
    loop {
        match r.read_exact(&mut b) {
            Ok(()) => log_probs.push(f64::from_le_bytes(b)),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(PosteriorTable::new(vocab, k, frames, log_probs)?)
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    frames: usize,
    context: usize,
    vocab: usize,
    /// same (frame, context code, symbol) order as the binary format
    log_probs: Vec<f64>,
}

pub fn save_table_json(path: &Path, table: &PosteriorTable) -> Result<()> {
    let json = TableJson {
        frames: table.frames(),
        context: table.k(),
        vocab: table.vocab().size(),
        log_probs: table.log_probs().to_vec(),
    };
    fs::write(path, serde_json::to_vec_pretty(&json)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Loads either format, sniffing the binary magic.
pub fn load_table(path: &Path) -> Result<PosteriorTable> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(TABLE_MAGIC) {
        return load_table_binary(&bytes, path);
    }
    let json: TableJson = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(PosteriorTable::new(
        Vocabulary::new(json.vocab)?,
        json.context,
        json.frames,
        json.log_probs,
    )?)
}

#[derive(Serialize, Deserialize)]
struct LmJson {
    vocab: usize,
    context: usize,
    /// (context code, phoneme) row-major conditional log-probabilities
    log_probs: Vec<f64>,
}

pub fn save_lm(path: &Path, lm: &NGramPhonemeLM) -> Result<()> {
    let json = LmJson {
        vocab: lm.vocab().size(),
        context: lm.k(),
        log_probs: lm.log_probs().to_vec(),
    };
    fs::write(path, serde_json::to_vec_pretty(&json)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_lm(path: &Path) -> Result<NGramPhonemeLM> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let json: LmJson = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(NGramPhonemeLM::from_log_probs(
        Vocabulary::new(json.vocab)?,
        json.context,
        json.log_probs,
    )?)
}

/// Target files are a bare JSON array of phoneme ids.
pub fn load_target(path: &Path, vocab: &Vocabulary) -> Result<LabelSequence> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ids: Vec<u32> = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(LabelSequence::new(
        ids.into_iter().map(Phoneme).collect(),
        vocab,
    )?)
}

pub fn save_target(path: &Path, target: &LabelSequence) -> Result<()> {
    let ids: Vec<u32> = target.labels().iter().map(|p| p.0).collect();
    fs::write(path, serde_json::to_vec(&ids)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DatasetLine {
    features: Vec<usize>,
    target: Vec<u32>,
}

/// JSON-lines dataset: one {"features": [...], "target": [...]} per line.
pub fn load_dataset(path: &Path, vocab: &Vocabulary) -> Result<ToyDataset> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut utterances = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        utterances.push(Utterance {
            features: parsed.features,
            target: LabelSequence::new(
                parsed.target.into_iter().map(Phoneme).collect(),
                vocab,
            )?,
        });
    }
    Ok(ToyDataset::new(utterances)?)
}

pub fn save_dataset(path: &Path, data: &ToyDataset) -> Result<()> {
    let mut out = Vec::new();
    for utt in data.utterances() {
        let line = DatasetLine {
            features: utt.features.clone(),
            target: utt.target.labels().iter().map(|p| p.0).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    num_features: usize,
    vocab: usize,
    context: usize,
    logits: Vec<f64>,
}

pub fn save_model(path: &Path, model: &ToyModel) -> Result<()> {
    let json = ModelJson {
        num_features: model.num_features(),
        vocab: model.vocab().size(),
        context: model.k(),
        logits: model.logits().to_vec(),
    };
    fs::write(path, serde_json::to_vec_pretty(&json)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ToyModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let json: ModelJson = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", path.display()))?;
    let mut model = ToyModel::new(
        json.num_features,
        Vocabulary::new(json.vocab)?,
        json.context,
    )?;
    if json.logits.len() != model.logits().len() {
        bail!(
            "{}: {} logits for a model needing {}",
            path.display(),
            json.logits.len(),
            model.logits().len()
        );
    }
    model.logits_mut().copy_from_slice(&json.logits);
    Ok(model)
}

#[derive(Serialize)]
pub struct TraceJson<'a> {
    pub criterion: &'a str,
    pub loss_trace: &'a [f64],
    pub blank_trace: &'a [f64],
}

pub fn save_trace(path: &Path, trace: &TraceJson) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(trace)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
