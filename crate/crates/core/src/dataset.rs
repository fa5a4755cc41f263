//! Quadruple datasets: loading, inverse augmentation, snapshot building,
//! time-aware filter indexes, and noise injection.
//!
//! Input files follow the public ICEWS/RE-GCN release convention: one fact per
//! line, tab-separated integer columns `subject relation object timestamp`,
//! with optional trailing columns ignored. Raw timestamps are divided by the
//! dataset time interval and re-based to zero.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgrError};

/// One timestamped fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub time: usize,
}

/// All facts sharing one timestamp, with per-entity incoming-edge counts for
/// message normalization.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: usize,
    pub edges: Vec<(usize, usize, usize)>,
    pub in_degree: Vec<usize>,
}

impl Snapshot {
    /// Entities appearing as subject or object of any edge, sorted, deduplicated.
    pub fn active_entities(&self) -> Vec<usize> {
        let mut set: Vec<usize> = self
            .edges
            .iter()
            .flat_map(|&(s, _, o)| [s, o])
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    pub fn active_relations(&self) -> Vec<usize> {
        let mut set: Vec<usize> = self.edges.iter().map(|&(_, r, _)| r).collect();
        set.sort_unstable();
        set.dedup();
        set
    }
}

/// Train/valid/test splits plus vocabulary sizes.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_relations_aug: usize,
    pub time_unit: String,
}

impl DatasetBundle {
    pub fn all_facts(&self) -> impl Iterator<Item = &Quadruple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Map from (subject, relation, time) to every true object at that time,
/// across all splits. Used for time-aware filtered ranking.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    map: HashMap<(usize, usize, usize), HashSet<usize>>,
}

impl FilterIndex {
    pub fn objects(&self, subject: usize, relation: usize, time: usize) -> Option<&HashSet<usize>> {
        self.map.get(&(subject, relation, time))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|source| TkgrError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Optional `name \t id` vocabularies for symbolic data files.
#[derive(Clone, Debug, Default)]
pub struct IdMaps {
    pub entities: HashMap<String, usize>,
    pub relations: HashMap<String, usize>,
}

pub fn load_id_map(path: &Path) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts.next().unwrap_or_default().to_string();
        let id: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| TkgrError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected `name \\t id`".into(),
            })?;
        map.insert(name, id);
    }
    Ok(map)
}

fn resolve(token: &str, map: Option<&HashMap<String, usize>>, path: &Path, line: usize) -> Result<usize> {
    if let Ok(v) = token.trim().parse::<usize>() {
        return Ok(v);
    }
    if let Some(m) = map {
        return m.get(token).copied().ok_or_else(|| {
            TkgrError::Vocab(format!("unknown symbol `{token}` at {}:{line}", path.display()))
        });
    }
    Err(TkgrError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("`{token}` is not an integer id"),
    })
}

/// Load one split file. Raw timestamps are divided by `interval` to yield
/// contiguous 0-based indices (the caller re-bases across splits if needed).
pub fn load_quadruple_file(
    path: &Path,
    interval: u64,
    id_maps: Option<&IdMaps>,
) -> Result<Vec<Quadruple>> {
    assert!(interval > 0, "time interval must be positive");
    let mut out = Vec::new();
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(TkgrError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            });
        }
        let subject = resolve(cols[0], id_maps.map(|m| &m.entities), path, line_no)?;
        let relation = resolve(cols[1], id_maps.map(|m| &m.relations), path, line_no)?;
        let object = resolve(cols[2], id_maps.map(|m| &m.entities), path, line_no)?;
        let raw_time: u64 = cols[3].trim().parse().map_err(|_| TkgrError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("`{}` is not a timestamp", cols[3]),
        })?;
        out.push(Quadruple {
            subject,
            relation,
            object,
            time: (raw_time / interval) as usize,
        });
    }
    Ok(out)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Infer the dataset time interval as the gcd of all nonzero raw timestamps.
pub fn infer_interval(paths: &[PathBuf]) -> Result<u64> {
    let mut g = 0u64;
    for path in paths {
        for line in read_lines(path)? {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(t) = line.split('\t').nth(3).and_then(|s| s.trim().parse::<u64>().ok()) {
                g = gcd(g, t);
            }
        }
    }
    Ok(if g == 0 { 1 } else { g })
}

/// Load `train.txt`/`valid.txt`/`test.txt` from a directory, divide raw
/// timestamps by the (given or inferred) interval, re-base to zero, and
/// augment all splits with inverse relations.
pub fn load_bundle(dir: &Path, interval: Option<u64>) -> Result<DatasetBundle> {
    let files: Vec<PathBuf> = ["train.txt", "valid.txt", "test.txt"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    let interval = match interval {
        Some(i) => i,
        None => infer_interval(&files)?,
    };
    let id_maps = {
        let ent = dir.join("entity2id.txt");
        let rel = dir.join("relation2id.txt");
        if ent.exists() && rel.exists() {
            Some(IdMaps {
                entities: load_id_map(&ent)?,
                relations: load_id_map(&rel)?,
            })
        } else {
            None
        }
    };
    let mut splits: Vec<Vec<Quadruple>> = files
        .iter()
        .map(|p| load_quadruple_file(p, interval, id_maps.as_ref()))
        .collect::<Result<_>>()?;

    let t_min = splits
        .iter()
        .flatten()
        .map(|q| q.time)
        .min()
        .unwrap_or(0);
    for split in &mut splits {
        for q in split.iter_mut() {
            q.time -= t_min;
        }
    }

    let num_entities = match &id_maps {
        Some(m) => m.entities.values().max().map_or(0, |v| v + 1),
        None => splits
            .iter()
            .flatten()
            .map(|q| q.subject.max(q.object))
            .max()
            .map_or(0, |v| v + 1),
    };
    let num_relations = match &id_maps {
        Some(m) => m.relations.values().max().map_or(0, |v| v + 1),
        None => splits
            .iter()
            .flatten()
            .map(|q| q.relation)
            .max()
            .map_or(0, |v| v + 1),
    };

    for split in &splits {
        for q in split {
            if q.subject >= num_entities || q.object >= num_entities {
                return Err(TkgrError::Vocab(format!(
                    "entity id out of range in fact {q:?} (num_entities = {num_entities})"
                )));
            }
            if q.relation >= num_relations {
                return Err(TkgrError::Vocab(format!(
                    "relation id out of range in fact {q:?} (num_relations = {num_relations})"
                )));
            }
        }
    }

    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(DatasetBundle {
        train: augment_inverse(&train, num_relations),
        valid: augment_inverse(&valid, num_relations),
        test: augment_inverse(&test, num_relations),
        num_entities,
        num_relations,
        num_relations_aug: 2 * num_relations,
        time_unit: format!("{interval} raw units"),
    })
}

/// For each fact `(s, r, o, t)` add the inverse fact `(o, r + num_relations, s, t)`.
pub fn augment_inverse(quads: &[Quadruple], num_relations: usize) -> Vec<Quadruple> {
    let mut out = Vec::with_capacity(quads.len() * 2);
    for q in quads {
        debug_assert!(q.relation < num_relations, "relation id already augmented");
        out.push(*q);
        out.push(Quadruple {
            subject: q.object,
            relation: q.relation + num_relations,
            object: q.subject,
            time: q.time,
        });
    }
    out
}

/// Group facts into per-timestamp snapshots, sorted by time.
pub fn build_snapshots(quads: &[Quadruple], num_entities: usize) -> Vec<Snapshot> {
    let mut by_time: BTreeMap<usize, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for q in quads {
        by_time
            .entry(q.time)
            .or_default()
            .push((q.subject, q.relation, q.object));
    }
    by_time
        .into_iter()
        .map(|(time, edges)| {
            let mut in_degree = vec![0usize; num_entities];
            for &(_, _, o) in &edges {
                in_degree[o] += 1;
            }
            Snapshot {
                time,
                edges,
                in_degree,
            }
        })
        .collect()
}

/// Build the time-aware filter over every split of the bundle.
pub fn build_time_filter(bundle: &DatasetBundle) -> FilterIndex {
    let mut map: HashMap<(usize, usize, usize), HashSet<usize>> = HashMap::new();
    for q in bundle.all_facts() {
        map.entry((q.subject, q.relation, q.time))
            .or_default()
            .insert(q.object);
    }
    FilterIndex { map }
}

/// Which slot of a fact noise corruption rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSlot {
    Object,
    Subject,
}

/// Replace the chosen slot of exactly `floor(rate * N)` uniformly chosen facts
/// with a uniformly random *different* entity. Deterministic given the seed.
pub fn inject_noise(
    train: &[Quadruple],
    rate: f64,
    num_entities: usize,
    slot: NoiseSlot,
    seed: u64,
) -> Result<Vec<Quadruple>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(TkgrError::Argument(format!(
            "noise rate must be in [0, 1], got {rate}"
        )));
    }
    if num_entities < 2 && rate > 0.0 && !train.is_empty() {
        return Err(TkgrError::Argument(
            "need at least 2 entities to corrupt facts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (rate * train.len() as f64).floor() as usize;
    let mut positions: Vec<usize> = (0..train.len()).collect();
    positions.shuffle(&mut rng);
    positions.truncate(count);
    let chosen: HashSet<usize> = positions.iter().copied().collect();

    let mut out = train.to_vec();
    // Iterate in index order so the output is independent of shuffle internals
    // beyond the chosen set.
    for i in 0..out.len() {
        if !chosen.contains(&i) {
            continue;
        }
        let original = match slot {
            NoiseSlot::Object => out[i].object,
            NoiseSlot::Subject => out[i].subject,
        };
        let mut replacement = rng.gen_range(0..num_entities - 1);
        if replacement >= original {
            replacement += 1;
        }
        match slot {
            NoiseSlot::Object => out[i].object = replacement,
            NoiseSlot::Subject => out[i].subject = replacement,
        }
    }
    Ok(out)
}

/// One row of the per-dataset statistics table.
#[derive(Clone, Debug)]
pub struct DatasetStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub train_facts: usize,
    pub valid_facts: usize,
    pub test_facts: usize,
    pub num_timestamps: usize,
    pub time_unit: String,
}

/// Fact counts are reported pre-augmentation to mirror the usual dataset tables.
pub fn stats(bundle: &DatasetBundle) -> DatasetStats {
    let times: HashSet<usize> = bundle.all_facts().map(|q| q.time).collect();
    DatasetStats {
        num_entities: bundle.num_entities,
        num_relations: bundle.num_relations,
        train_facts: bundle.train.len() / 2,
        valid_facts: bundle.valid.len() / 2,
        test_facts: bundle.test.len() / 2,
        num_timestamps: times.len(),
        time_unit: bundle.time_unit.clone(),
    }
}
