//! Dataset ingestion, train/test protocol, empirical evaluation, grid
//! search, clustering, and model persistence.

pub mod cluster;
pub mod eval;
pub mod model_io;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learn::DataOracle;
use crate::types::{ItemId, TopKList, Universe};

pub use cluster::{kmedoids_cluster, ClusterResult};
pub use eval::{
    draw_assortments, empirical_choice_probs, evaluate, grid_search, ChoicePredictor, EvalConfig,
    EvalReport, GmmPredictor, GridConfig, GridResult, MnlPredictor,
};
pub use model_io::{load_model, read_model, save_model, write_model, SavedModel};

/// On-disk layouts the loader understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderFormat {
    /// First line: record count (extra tokens ignored). Each record line:
    /// two leading integer tokens, then k external item ids in preference
    /// order.
    Sushi3,
    /// One record per line: k space-separated item ids, already dense.
    Plain,
}

/// A collection of equal-length preference lists over one universe, with the
/// external-id mapping used at ingestion.
#[derive(Debug, Clone)]
pub struct PreferenceDataset {
    records: Vec<TopKList>,
    universe: Universe,
    k: usize,
    /// Dense id -> external label; index 0 is the reserved no-purchase slot.
    labels: Vec<i64>,
}

impl PreferenceDataset {
    pub fn from_records(records: Vec<TopKList>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyDataset)?;
        let universe = first.universe();
        let k = first.k();
        for r in &records {
            if r.universe() != universe {
                return Err(Error::UniverseMismatch);
            }
            if r.k() != k {
                return Err(Error::InconsistentK {
                    line: 0,
                    expected: k,
                    got: r.k(),
                });
            }
        }
        let labels = (0..universe.size() as i64)
            .map(|i| if i == 0 { -1 } else { i })
            .collect();
        Ok(PreferenceDataset {
            records,
            universe,
            k,
            labels,
        })
    }

    pub fn records(&self) -> &[TopKList] {
        &self.records
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// External label of a dense id (-1 for the no-purchase slot).
    pub fn label_of(&self, id: ItemId) -> i64 {
        self.labels
            .get(id as usize)
            .copied()
            .unwrap_or(id as i64)
    }

    /// A seeded oracle answering choice queries from this dataset.
    pub fn oracle(&self, seed: u64) -> Result<DataOracle> {
        DataOracle::new(self.records.clone(), seed)
    }

    /// Disjoint uniform random split, reproducible from the seed.
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must be in (0, 1), got {train_frac}"
            )));
        }
        let mut indices: Vec<usize> = (0..self.records.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let n_train = (self.records.len() as f64 * train_frac).floor() as usize;
        let take = |idx: &[usize]| PreferenceDataset {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            universe: self.universe,
            k: self.k,
            labels: self.labels.clone(),
        };
        Ok((take(&indices[..n_train]), take(&indices[n_train..])))
    }
}

/// Loads a preference dataset, remapping external ids to dense ids with id 0
/// reserved for the no-purchase option.
///
/// `universe_hint` fixes the universe size when the file alone cannot (items
/// that exist but never appear in any record).
pub fn load_orders(
    path: &Path,
    format: OrderFormat,
    universe_hint: Option<u32>,
) -> Result<PreferenceDataset> {
    let reader = BufReader::new(File::open(path)?);
    read_orders(reader, format, universe_hint)
}

pub fn read_orders<R: BufRead>(
    reader: R,
    format: OrderFormat,
    universe_hint: Option<u32>,
) -> Result<PreferenceDataset> {
    let mut lines = reader.lines().enumerate();
    let mut raw_records: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut expected_k: Option<usize> = None;

    let mut parse_ids = |line_no: usize, tokens: &[&str]| -> Result<Vec<i64>> {
        let ids: Vec<i64> = tokens
            .iter()
            .map(|t| {
                t.parse::<i64>().map_err(|_| Error::MalformedLine {
                    line: line_no + 1,
                    msg: format!("bad item id {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(k) = expected_k {
            if ids.len() != k {
                return Err(Error::InconsistentK {
                    line: line_no + 1,
                    expected: k,
                    got: ids.len(),
                });
            }
        } else {
            if ids.is_empty() {
                return Err(Error::MalformedLine {
                    line: line_no + 1,
                    msg: "record holds no items".into(),
                });
            }
            expected_k = Some(ids.len());
        }
        Ok(ids)
    };

    match format {
        OrderFormat::Sushi3 => {
            let (line_no, header) = lines
                .next()
                .ok_or_else(|| Error::Malformed("empty order file".into()))?;
            let header = header?;
            let declared: usize = header
                .split_whitespace()
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or(Error::MalformedLine {
                    line: line_no + 1,
                    msg: "header must start with the record count".into(),
                })?;
            for (line_no, line) in lines {
                let line = line?;
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.is_empty() {
                    continue;
                }
                if tokens.len() < 3 {
                    return Err(Error::MalformedLine {
                        line: line_no + 1,
                        msg: "record needs two leading tokens and at least one item".into(),
                    });
                }
                raw_records.push((line_no, parse_ids(line_no, &tokens[2..])?));
                if raw_records.len() == declared {
                    break;
                }
            }
            if raw_records.len() < declared {
                return Err(Error::Malformed(format!(
                    "header declares {declared} records, found {}",
                    raw_records.len()
                )));
            }
        }
        OrderFormat::Plain => {
            for (line_no, line) in lines {
                let line = line?;
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.is_empty() {
                    continue;
                }
                raw_records.push((line_no, parse_ids(line_no, &tokens)?));
            }
        }
    }

    if raw_records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // Dense mapping: external ids sorted ascending -> 1..=n.
    let dense_of: BTreeMap<i64, u32> = match format {
        OrderFormat::Sushi3 => {
            let mut externals: Vec<i64> = raw_records
                .iter()
                .flat_map(|(_, ids)| ids.iter().copied())
                .collect();
            externals.sort_unstable();
            externals.dedup();
            externals
                .into_iter()
                .enumerate()
                .map(|(i, e)| (e, i as u32 + 1))
                .collect()
        }
        OrderFormat::Plain => {
            // Ids are taken as already dense; 0 stays reserved.
            let mut map = BTreeMap::new();
            for (line_no, ids) in &raw_records {
                for &id in ids {
                    if id < 1 {
                        return Err(Error::MalformedLine {
                            line: line_no + 1,
                            msg: format!("plain ids must be >= 1, got {id}"),
                        });
                    }
                    map.insert(id, id as u32);
                }
            }
            map
        }
    };

    let max_dense = dense_of.values().max().copied().unwrap_or(0);
    let u = match universe_hint {
        Some(hint) => {
            if hint < max_dense + 1 {
                return Err(Error::InvalidParameter(format!(
                    "universe hint {hint} too small for {max_dense} distinct items"
                )));
            }
            hint
        }
        None => max_dense + 1,
    };
    let universe = Universe::with_null(u)?;

    let mut records = Vec::with_capacity(raw_records.len());
    let mut labels = vec![-1i64; u as usize];
    for (&external, &dense) in &dense_of {
        labels[dense as usize] = external;
    }
    for (line_no, ids) in raw_records {
        let dense: Vec<u32> = ids.iter().map(|e| dense_of[e]).collect();
        let list = TopKList::new(dense, universe).map_err(|e| Error::MalformedLine {
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        records.push(list);
    }

    let k = records[0].k();
    Ok(PreferenceDataset {
        records,
        universe,
        k,
        labels,
    })
}
