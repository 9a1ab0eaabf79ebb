//! Score records, datasets, and embedding tables.
//!
//! Scores travel as UTF-8 JSONL, one object per line with keys `pair_id`,
//! `text_id`, `audio_id`, `listener_id` (strings) and `score` (integer in
//! 0..=10). Embeddings travel as a TSV manifest (`dim=<N>` line, then an
//! `id<TAB>path` header, then one row per vector) pointing at raw
//! little-endian f32 files of exactly N values each.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One listener's integer rating of one audio-text pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub text_id: String,
    pub audio_id: String,
    pub listener_id: String,
    /// 11-point scale, 0 (lowest) to 10 (highest).
    pub score: u8,
}

/// A (text, audio) pair reference, independent of who rated it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairRef {
    pub pair_id: String,
    pub text_id: String,
    pub audio_id: String,
}

/// An ordered collection of score records with validated invariants:
/// scores in range, (pair_id, listener_id) unique, and each pair_id bound
/// to exactly one (text_id, audio_id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<ScoreRecord>,
    split_name: String,
}

impl Dataset {
    /// Build a dataset from records, validating all invariants.
    pub fn new(records: Vec<ScoreRecord>, split_name: impl Into<String>) -> Result<Self> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        let mut pair_map: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
        for rec in &records {
            if rec.score > 10 {
                return Err(Error::ScoreOutOfRange {
                    path: PathBuf::new(),
                    line: 0,
                    score: rec.score as i64,
                });
            }
            if !seen.insert((rec.pair_id.as_str(), rec.listener_id.as_str())) {
                return Err(Error::DuplicateRating {
                    pair_id: rec.pair_id.clone(),
                    listener_id: rec.listener_id.clone(),
                });
            }
            let ids = (rec.text_id.as_str(), rec.audio_id.as_str());
            if let Some(prev) = pair_map.insert(rec.pair_id.as_str(), ids) {
                if prev != ids {
                    return Err(Error::InconsistentPair {
                        pair_id: rec.pair_id.clone(),
                    });
                }
            }
        }
        Ok(Dataset {
            records,
            split_name: split_name.into(),
        })
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn split_name(&self) -> &str {
        &self.split_name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every distinct pair, sorted by pair_id.
    pub fn unique_pairs(&self) -> Vec<PairRef> {
        let mut map: BTreeMap<&str, PairRef> = BTreeMap::new();
        for rec in &self.records {
            map.entry(&rec.pair_id).or_insert_with(|| PairRef {
                pair_id: rec.pair_id.clone(),
                text_id: rec.text_id.clone(),
                audio_id: rec.audio_id.clone(),
            });
        }
        map.into_values().collect()
    }

    /// Distinct listener ids, sorted.
    pub fn listener_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.listener_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Keep only records whose listener passes `keep`, preserving order.
    pub fn filter_listeners(&self, keep: impl Fn(&str) -> bool) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| keep(&r.listener_id))
                .cloned()
                .collect(),
            split_name: self.split_name.clone(),
        }
    }

    /// Check that every text has exactly 3 distinct audios (the
    /// train/validation triplet shape).
    pub fn check_triplets(&self) -> Result<()> {
        let mut audios: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for rec in &self.records {
            audios
                .entry(&rec.text_id)
                .or_default()
                .insert(&rec.audio_id);
        }
        for (text_id, set) in audios {
            if set.len() != 3 {
                return Err(Error::TripletViolation {
                    text_id: text_id.to_owned(),
                    got: set.len(),
                });
            }
        }
        Ok(())
    }

    /// Deterministically split by text_id: a text and all of its pairs land
    /// on exactly one side. `eval_fraction` of texts (rounded down, at least
    /// one when possible) goes to the evaluation split.
    pub fn split_by_text(&self, eval_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let mut texts: Vec<&str> = {
            let set: BTreeSet<&str> = self.records.iter().map(|r| r.text_id.as_str()).collect();
            set.into_iter().collect()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        texts.shuffle(&mut rng);
        let mut n_eval = (texts.len() as f64 * eval_fraction).floor() as usize;
        if n_eval == 0 && texts.len() > 1 && eval_fraction > 0.0 {
            n_eval = 1;
        }
        let eval_texts: BTreeSet<&str> = texts.into_iter().take(n_eval).collect();
        let (eval, train): (Vec<ScoreRecord>, Vec<ScoreRecord>) = self
            .records
            .iter()
            .cloned()
            .partition(|r| eval_texts.contains(r.text_id.as_str()));
        (
            Dataset {
                records: train,
                split_name: format!("{}-train", self.split_name),
            },
            Dataset {
                records: eval,
                split_name: format!("{}-eval", self.split_name),
            },
        )
    }
}

#[derive(Deserialize)]
struct RawScoreLine {
    pair_id: String,
    text_id: String,
    audio_id: String,
    listener_id: String,
    score: i64,
}

/// Load a scores JSONL file. With `strict_triplets` on, every text must
/// have exactly 3 distinct audios.
pub fn load_scores(path: impl AsRef<Path>, strict_triplets: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawScoreLine =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_owned(),
                line: line_no,
                message: e.to_string(),
            })?;
        if !(0..=10).contains(&raw.score) {
            return Err(Error::ScoreOutOfRange {
                path: path.to_owned(),
                line: line_no,
                score: raw.score,
            });
        }
        records.push(ScoreRecord {
            pair_id: raw.pair_id,
            text_id: raw.text_id,
            audio_id: raw.audio_id,
            listener_id: raw.listener_id,
            score: raw.score as u8,
        });
    }

    let split_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".to_owned());
    let dataset = Dataset::new(records, split_name)?;
    if strict_triplets {
        dataset.check_triplets()?;
    }
    Ok(dataset)
}

/// Write a dataset as scores JSONL, one record per line in dataset order.
pub fn save_scores(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for rec in dataset.records() {
        out.push_str(&serde_json::to_string(rec).map_err(|e| Error::json(path, e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Fixed-dimension real vectors keyed by audio/text id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if let Some(idx) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding { id, index: idx });
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateEmbeddingId { id });
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.entries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding { id: id.to_owned() })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Ids in sorted order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Load an embedding table from a TSV manifest. Vector paths are resolved
/// relative to the manifest's directory; each file must hold exactly
/// `dim` little-endian f32 values.
pub fn load_embeddings(manifest_path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let manifest_path = manifest_path.as_ref();
    let content =
        fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut lines = content.lines();
    let dim_line = lines.next().ok_or_else(|| Error::BadManifest {
        path: manifest_path.to_owned(),
        message: "empty manifest".into(),
    })?;
    let dim: usize = dim_line
        .strip_prefix("dim=")
        .and_then(|v| v.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::BadManifest {
            path: manifest_path.to_owned(),
            message: format!("first line must be dim=<N> with N > 0, got {dim_line:?}"),
        })?;
    let header = lines.next().ok_or_else(|| Error::BadManifest {
        path: manifest_path.to_owned(),
        message: "missing id\tpath header".into(),
    })?;
    if header.trim_end() != "id\tpath" {
        return Err(Error::BadManifest {
            path: manifest_path.to_owned(),
            message: format!("expected header id\\tpath, got {header:?}"),
        });
    }

    let mut table = EmbeddingTable::new(dim)?;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rel_path) = line.split_once('\t').ok_or_else(|| Error::BadManifest {
            path: manifest_path.to_owned(),
            message: format!("row {}: expected id\\tpath", idx + 3),
        })?;
        let vec_path = base.join(rel_path);
        let bytes = fs::read(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        if bytes.len() != dim * 4 {
            return Err(Error::TruncatedEmbedding {
                id: id.to_owned(),
                path: vec_path,
                expected: dim * 4,
                actual: bytes.len(),
            });
        }
        let vector: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        table.insert(id, vector)?;
    }
    Ok(table)
}

/// Write an embedding table as `<dir>/manifest.tsv` plus one raw f32 file
/// per id under `<dir>/vectors/`. Returns the manifest path.
pub fn write_embeddings(table: &EmbeddingTable, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let vec_dir = dir.join("vectors");
    fs::create_dir_all(&vec_dir).map_err(|e| Error::io(&vec_dir, e))?;

    let mut manifest = format!("dim={}\nid\tpath\n", table.dim());
    for id in table.ids() {
        if id.is_empty() || id.contains(['/', '\\', '\t', '\n']) {
            return Err(Error::InvalidConfig(format!(
                "embedding id {id:?} is not filename-safe"
            )));
        }
        let rel = format!("vectors/{id}.f32");
        let vector = table.get(id)?;
        let mut bytes = Vec::with_capacity(vector.len() * 4);
        for &v in vector {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let vec_path = dir.join(&rel);
        let mut f = fs::File::create(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&vec_path, e))?;
        manifest.push_str(&format!("{id}\t{rel}\n"));
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Group raw scores by pair. Within a group, scores are ordered by
/// listener_id ascending so downstream consumers see a stable order.
pub fn group_scores_by_pair(dataset: &Dataset) -> BTreeMap<String, Vec<u8>> {
    let mut groups: BTreeMap<String, Vec<(&str, u8)>> = BTreeMap::new();
    for rec in dataset.records() {
        groups
            .entry(rec.pair_id.clone())
            .or_default()
            .push((&rec.listener_id, rec.score));
    }
    groups
        .into_iter()
        .map(|(pair, mut v)| {
            v.sort_by(|a, b| a.0.cmp(b.0));
            (pair, v.into_iter().map(|(_, s)| s).collect())
        })
        .collect()
}

/// Arithmetic mean of a pair's scores.
pub fn mean_pair_score(scores: &[u8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("mean_pair_score on empty list"));
    }
    Ok(scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64)
}
