//! Interaction logs, k-core filtering, leave-one-out splits, padding and
//! batching with same-target ("semantic") positives.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `user<TAB>item<TAB>timestamp`, no header.
    Tsv,
    /// Comma separated with a header naming `user`, `item` and `timestamp`
    /// columns.
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown format {other:?} (expected tsv or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

pub fn load_interactions(path: &Path, format: Format) -> Result<InteractionLog> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    parse_interactions(BufReader::new(file), format, &path.display().to_string())
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
}

/// Parses an interaction log; `label` names the source in error messages.
pub fn parse_interactions<R: Read>(reader: R, format: Format, label: &str) -> Result<InteractionLog> {
    let mut builder = csv::ReaderBuilder::new();
    builder.flexible(true).trim(csv::Trim::All);
    match format {
        Format::Tsv => builder.delimiter(b'\t').has_headers(false),
        Format::Csv => builder.delimiter(b',').has_headers(true),
    };
    let mut rdr = builder.from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: label.into(),
        line: line as usize,
        message,
    };

    let (user_col, item_col, time_col) = match format {
        Format::Tsv => (0, 1, 2),
        Format::Csv => {
            let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
            if headers.is_empty() {
                return Ok(InteractionLog::default());
            }
            let find = |names: &[&str]| {
                column(&headers, names)
                    .ok_or_else(|| parse_err(1, format!("header lacks a {} column", names[0])))
            };
            (
                find(&["user", "user_id", "userid"])?,
                find(&["item", "item_id", "itemid"])?,
                find(&["timestamp", "time", "ts"])?,
            )
        }
    };
    let width = user_col.max(item_col).max(time_col) + 1;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() < width {
            return Err(parse_err(
                line,
                format!("expected at least {width} fields, found {}", row.len()),
            ));
        }
        let timestamp = row[time_col]
            .parse::<i64>()
            .map_err(|_| parse_err(line, format!("unparseable timestamp {:?}", &row[time_col])))?;
        records.push(Interaction {
            user: row[user_col].to_string(),
            item: row[item_col].to_string(),
            timestamp,
        });
    }
    Ok(InteractionLog { records })
}

/// Per-user chronological item sequences over a dense vocabulary.
///
/// Item `id` (1-based) is `items[id - 1]`; id 0 is padding. The last item
/// of each sequence is the test target, the one before it the validation
/// target, and the rest is the training prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub sequences: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    Test,
}

impl FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" | "validation" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected valid or test)"
            ))),
        }
    }
}

/// One next-item example: unpadded input history and its target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: usize,
    pub input: Vec<usize>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub actions: usize,
    pub avg_length: f64,
    pub sparsity: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "# Users     {}", self.users)?;
        writeln!(f, "# Items     {}", self.items)?;
        writeln!(f, "# Actions   {}", self.actions)?;
        writeln!(f, "Avg. length {:.2}", self.avg_length)?;
        write!(f, "Sparsity    {:.2}%", self.sparsity * 100.0)
    }
}

impl SequenceDataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn stats(&self) -> DatasetStats {
        let actions: usize = self.sequences.iter().map(Vec::len).sum();
        let (u, i) = (self.num_users(), self.num_items());
        let cells = (u * i).max(1) as f64;
        DatasetStats {
            users: u,
            items: i,
            actions,
            avg_length: actions as f64 / u.max(1) as f64,
            sparsity: 1.0 - actions as f64 / cells,
        }
    }

    /// Training prefix of user `u`.
    pub fn train(&self, u: usize) -> &[usize] {
        let s = &self.sequences[u];
        &s[..s.len() - 2]
    }

    /// Input history and target for evaluating user `u` on `split`.
    pub fn eval_example(&self, u: usize, split: EvalSplit) -> (&[usize], usize) {
        let s = &self.sequences[u];
        let n = s.len();
        match split {
            EvalSplit::Valid => (&s[..n - 2], s[n - 2]),
            EvalSplit::Test => (&s[..n - 1], s[n - 1]),
        }
    }

    /// Next-item examples from the training prefixes. By default one per
    /// user (the last training item predicted from everything before it);
    /// with `all_prefixes` every prefix of length >= 1 becomes an example.
    pub fn training_examples(&self, all_prefixes: bool) -> Vec<Example> {
        let mut out = Vec::new();
        for u in 0..self.num_users() {
            let train = self.train(u);
            let first = if all_prefixes { 1 } else { train.len() - 1 };
            for end in first..train.len() {
                out.push(Example {
                    user: u,
                    input: train[..end].to_vec(),
                    target: train[end],
                });
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let ds: Self = serde_json::from_reader(BufReader::new(file))?;
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.users.len() != self.sequences.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} user names for {} sequences",
                self.users.len(),
                self.sequences.len()
            )));
        }
        for s in &self.sequences {
            if s.len() < 3 {
                return Err(Error::Vocabulary(
                    "every sequence needs at least 3 items for a leave-one-out split".into(),
                ));
            }
            if let Some(&id) = s.iter().find(|&&id| id == 0 || id > self.items.len()) {
                return Err(Error::ItemOutOfRange {
                    id,
                    max: self.items.len(),
                });
            }
        }
        Ok(())
    }
}

/// Iterative k-core filtering, dense id assignment and chronological
/// ordering.
///
/// A user's degree is their number of interactions; an item's degree is the
/// number of distinct users who interacted with it. Filtering repeats until
/// both floors hold. Users with fewer than 3 interactions cannot be split
/// and are dropped even when `min_count` is lower.
pub fn build_dataset(log: &InteractionLog, min_count: usize) -> Result<SequenceDataset> {
    if log.records.is_empty() {
        return Err(Error::Empty("interaction log"));
    }
    let user_floor = min_count.max(3);
    let mut alive = vec![true; log.records.len()];
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_users: HashMap<&str, HashSet<&str>> = HashMap::new();
        for (r, _) in log.records.iter().zip(&alive).filter(|(_, &a)| a) {
            *user_deg.entry(&r.user).or_default() += 1;
            item_users.entry(&r.item).or_default().insert(&r.user);
        }
        let mut changed = false;
        for (r, a) in log.records.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[r.user.as_str()] < user_floor || item_users[r.item.as_str()].len() < min_count) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut user_ids: HashMap<&str, usize> = HashMap::new();
    let mut item_ids: HashMap<&str, usize> = HashMap::new();
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut per_user: Vec<Vec<(i64, usize)>> = Vec::new();
    for (r, _) in log.records.iter().zip(&alive).filter(|(_, &a)| a) {
        let u = *user_ids.entry(&r.user).or_insert_with(|| {
            users.push(r.user.clone());
            per_user.push(Vec::new());
            users.len() - 1
        });
        let i = *item_ids.entry(&r.item).or_insert_with(|| {
            items.push(r.item.clone());
            items.len()
        });
        per_user[u].push((r.timestamp, i));
    }
    if users.is_empty() {
        return Err(Error::EmptyAfterKCore(min_count));
    }
    let sequences = per_user
        .into_iter()
        .map(|mut v| {
            // Stable: equal timestamps keep file order.
            v.sort_by_key(|&(t, _)| t);
            v.into_iter().map(|(_, i)| i).collect()
        })
        .collect();
    Ok(SequenceDataset {
        users,
        items,
        sequences,
    })
}

/// The most recent `n` items, left-padded with 0 to length `n`.
pub fn pad_truncate(seq: &[usize], n: usize) -> Vec<usize> {
    let tail = &seq[seq.len().saturating_sub(n)..];
    let mut out = vec![0; n - tail.len()];
    out.extend_from_slice(tail);
    out
}

/// Target item -> indices of the training examples predicting it.
#[derive(Debug, Clone, Default)]
pub struct SemanticIndex {
    map: BTreeMap<usize, Vec<usize>>,
}

impl SemanticIndex {
    pub fn build(examples: &[Example]) -> Self {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (idx, ex) in examples.iter().enumerate() {
            map.entry(ex.target).or_default().push(idx);
        }
        Self { map }
    }

    pub fn candidates(&self, target: usize) -> &[usize] {
        self.map.get(&target).map_or(&[], Vec::as_slice)
    }

    /// Uniform draw among the other examples sharing `target`; `example`
    /// itself when it is the only one.
    pub fn sample_partner(&self, example: usize, target: usize, rng: &mut crate::rng::Rng) -> usize {
        let cands = self.candidates(target);
        let others = cands.iter().filter(|&&c| c != example).count();
        if others == 0 {
            return example;
        }
        let mut pick = rng.random_range(0..others);
        for &c in cands {
            if c == example {
                continue;
            }
            if pick == 0 {
                return c;
            }
            pick -= 1;
        }
        unreachable!("pick is below the number of candidates")
    }
}

/// Padded inputs, targets and semantic-positive inputs of one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceBatch {
    pub ids: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub positive_ids: Vec<Vec<usize>>,
    /// Indices of the examples (in the example list) forming this batch.
    pub examples: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

const BATCH_STREAM: u64 = 0xBA7C;

/// Shuffles the examples under `(seed, epoch)` and cuts them into batches
/// of `batch_size`. Positives are resampled every epoch. A trailing batch
/// of a single example is merged into the previous batch so that every
/// batch has in-batch negatives.
pub fn make_batches(
    examples: &[Example],
    index: &SemanticIndex,
    batch_size: usize,
    max_len: usize,
    seed: u64,
    epoch: u64,
) -> Vec<SequenceBatch> {
    let mut rng = stream(seed, &[BATCH_STREAM, epoch]);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut chunks: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() == 1) {
        let last = chunks.pop().expect("non-empty");
        chunks.last_mut().expect("non-empty").extend(last);
    }
    chunks
        .into_iter()
        .map(|members| {
            let mut batch = SequenceBatch {
                ids: Vec::with_capacity(members.len()),
                targets: Vec::with_capacity(members.len()),
                positive_ids: Vec::with_capacity(members.len()),
                examples: members.clone(),
            };
            for e in members {
                let ex = &examples[e];
                let partner = index.sample_partner(e, ex.target, &mut rng);
                batch.ids.push(pad_truncate(&ex.input, max_len));
                batch.targets.push(ex.target);
                batch.positive_ids.push(pad_truncate(&examples[partner].input, max_len));
            }
            batch
        })
        .collect()
}

const SYNTHETIC_STREAM: u64 = 0x5E71;

/// Every user repeats a private motif of `period` distinct items, drawn
/// uniformly from the catalog, for `n + 2` steps. Item `id` is named
/// `i{id}`, user `u` is named `u{u}`; the catalog always has `num_items`
/// entries whether or not every item is used.
pub fn synthetic_periodic(
    num_users: usize,
    num_items: usize,
    period: usize,
    n: usize,
    seed: u64,
) -> Result<SequenceDataset> {
    if period < 2 || period > n / 2 {
        return Err(Error::InvalidConfig(format!(
            "period {period} must lie in [2, {}]",
            n / 2
        )));
    }
    if num_items < period {
        return Err(Error::InvalidConfig(format!(
            "{num_items} items cannot fill a motif of {period} distinct items"
        )));
    }
    if num_users == 0 {
        return Err(Error::Empty("synthetic user set"));
    }
    let mut rng = stream(seed, &[SYNTHETIC_STREAM]);
    let catalog: Vec<usize> = (1..=num_items).collect();
    let sequences = (0..num_users)
        .map(|_| {
            let motif: Vec<usize> = catalog.choose_multiple(&mut rng, period).copied().collect();
            (0..n + 2).map(|t| motif[t % period]).collect()
        })
        .collect();
    Ok(SequenceDataset {
        users: (0..num_users).map(|u| format!("u{u}")).collect(),
        items: (1..=num_items).map(|i| format!("i{i}")).collect(),
        sequences,
    })
}
