//! Datasets, subsets, and deterministic sampling.
//!
//! Datasets are stored as line-delimited JSON: one header object
//! `{"d", "kind", "num_classes"}` followed by one record per line
//! `{"id", "features", "label", "tag"}`. Subset manifests are a JSON array
//! of `{"subset_id", "member_ids"}`.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Real(f64),
    Class(usize),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real(v) => v,
            Label::Class(c) => c as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: Label,
    pub tag: Option<String>,
}

impl Example {
    pub fn new(id: usize, features: Vec<f64>, label: Label) -> Self {
        Example {
            id,
            features,
            label,
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Regression,
    Classification { num_classes: usize },
}

impl DatasetKind {
    pub fn num_classes(self) -> Option<usize> {
        match self {
            DatasetKind::Regression => None,
            DatasetKind::Classification { num_classes } => Some(num_classes),
        }
    }
}

/// An ordered, validated collection of examples. `examples[i].id == i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    d: usize,
    kind: DatasetKind,
}

impl Dataset {
    /// Builds a dataset, ordering examples by id and checking every invariant:
    /// dense unique ids, fixed finite feature length, labels matching the kind.
    pub fn new(mut examples: Vec<Example>, d: usize, kind: DatasetKind) -> Result<Self> {
        if let DatasetKind::Classification { num_classes } = kind {
            if num_classes == 0 {
                return Err(Error::InvalidDataset("num_classes must be positive".into()));
            }
        }
        examples.sort_by_key(|e| e.id);
        for (i, ex) in examples.iter().enumerate() {
            if ex.id != i {
                return Err(Error::InvalidDataset(format!(
                    "ids must be unique and dense in [0, {}); found id {} at position {}",
                    examples.len(),
                    ex.id,
                    i
                )));
            }
            if ex.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: ex.features.len(),
                });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("example {i} has non-finite features")));
            }
            match (kind, ex.label) {
                (DatasetKind::Regression, Label::Real(v)) if v.is_finite() => {}
                (DatasetKind::Classification { num_classes }, Label::Class(c)) if c < num_classes => {}
                _ => {
                    return Err(Error::InvalidDataset(format!(
                        "example {i} has label {:?} incompatible with {:?}",
                        ex.label, kind
                    )))
                }
            }
        }
        Ok(Dataset { examples, d, kind })
    }

    /// Builds a dataset from examples whose ids are ignored and reassigned 0..n.
    pub fn from_reindexed(examples: Vec<Example>, d: usize, kind: DatasetKind) -> Result<Self> {
        let examples = examples
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| {
                e.id = i;
                e
            })
            .collect();
        Dataset::new(examples, d, kind)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, id: usize) -> Option<&Example> {
        self.examples.get(id)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    /// Resolves a subset to its member examples (duplicates repeated).
    pub fn members<'a>(&'a self, subset: &SubsetRef) -> Result<Vec<&'a Example>> {
        subset
            .member_ids
            .iter()
            .map(|&id| {
                self.get(id).ok_or_else(|| {
                    Error::InvalidDataset(format!(
                        "subset {} references id {} outside pool of {}",
                        subset.subset_id,
                        id,
                        self.len()
                    ))
                })
            })
            .collect()
    }

    /// New dataset holding copies of the given ids, re-densified in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Dataset> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let ex = self
                .get(id)
                .ok_or_else(|| Error::InvalidDataset(format!("id {id} out of range")))?;
            out.push(ex.clone());
        }
        Dataset::from_reindexed(out, self.d, self.kind)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            d: self.d,
            kind: match self.kind {
                DatasetKind::Regression => TaskKind::Regression,
                DatasetKind::Classification { .. } => TaskKind::Classification,
            },
            num_classes: self.kind.num_classes().unwrap_or(0),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for ex in &self.examples {
            let label = match ex.label {
                Label::Real(v) => serde_json::Number::from_f64(v)
                    .ok_or_else(|| Error::NonFinite(format!("label of example {}", ex.id)))?,
                Label::Class(c) => serde_json::Number::from(c as u64),
            };
            let rec = Record {
                id: ex.id as u64,
                features: ex.features.clone(),
                label,
                tag: ex.tag.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset> {
        let mut lines = r.lines();
        let header_line = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Format("missing dataset header".into())),
            }
        };
        let header: Header = serde_json::from_str(&header_line)?;
        let kind = match header.kind {
            TaskKind::Regression => DatasetKind::Regression,
            TaskKind::Classification => DatasetKind::Classification {
                num_classes: header.num_classes,
            },
        };
        let mut examples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)?;
            let label = match kind {
                DatasetKind::Regression => Label::Real(
                    rec.label
                        .as_f64()
                        .ok_or_else(|| Error::Format(format!("bad label for id {}", rec.id)))?,
                ),
                DatasetKind::Classification { .. } => Label::Class(
                    rec.label
                        .as_u64()
                        .ok_or_else(|| Error::Format(format!("class label for id {} must be a nonnegative integer", rec.id)))?
                        as usize,
                ),
            };
            let id = usize::try_from(rec.id).map_err(|_| Error::Format("id overflow".into()))?;
            examples.push(Example {
                id,
                features: rec.features,
                label,
                tag: rec.tag,
            });
        }
        Dataset::new(examples, header.d, kind)
    }

    pub fn from_jsonl_str(s: &str) -> Result<Dataset> {
        Dataset::read_jsonl(s.as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d: usize,
    kind: TaskKind,
    #[serde(default)]
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: u64,
    features: Vec<f64>,
    label: serde_json::Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

/// A subset of a pool stored by id. Duplicate ids are repeated examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetRef {
    pub subset_id: usize,
    pub dataset_id: String,
    pub member_ids: Vec<usize>,
}

impl SubsetRef {
    pub fn n(&self) -> usize {
        self.member_ids.len()
    }

    /// The whole pool as one subset.
    pub fn full(pool: &Dataset, dataset_id: impl Into<String>) -> SubsetRef {
        SubsetRef {
            subset_id: 0,
            dataset_id: dataset_id.into(),
            member_ids: (0..pool.len()).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    subset_id: usize,
    member_ids: Vec<usize>,
}

pub fn write_manifest<W: Write>(subsets: &[SubsetRef], w: W) -> Result<()> {
    let entries: Vec<ManifestEntry> = subsets
        .iter()
        .map(|s| ManifestEntry {
            subset_id: s.subset_id,
            member_ids: s.member_ids.clone(),
        })
        .collect();
    serde_json::to_writer(w, &entries)?;
    Ok(())
}

/// Parses a manifest. When `pool` is given every member id is checked against it.
pub fn parse_manifest(bytes: &[u8], dataset_id: &str, pool: Option<&Dataset>) -> Result<Vec<SubsetRef>> {
    let entries: Vec<ManifestEntry> = serde_json::from_slice(bytes)?;
    let subsets: Vec<SubsetRef> = entries
        .into_iter()
        .map(|e| SubsetRef {
            subset_id: e.subset_id,
            dataset_id: dataset_id.to_string(),
            member_ids: e.member_ids,
        })
        .collect();
    if let Some(pool) = pool {
        for s in &subsets {
            pool.members(s)?;
        }
    }
    Ok(subsets)
}

/// Draws `m_subsets` subsets of `n_per_subset` ids uniformly with replacement.
pub fn sample_subsets(
    pool: &Dataset,
    dataset_id: &str,
    m_subsets: usize,
    n_per_subset: usize,
    seed: RngSeed,
) -> Result<Vec<SubsetRef>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if m_subsets == 0 || n_per_subset == 0 {
        return Err(Error::InvalidSize("m_subsets and n_per_subset must be positive".into()));
    }
    let mut rng = seed.rng();
    Ok((0..m_subsets)
        .map(|subset_id| SubsetRef {
            subset_id,
            dataset_id: dataset_id.to_string(),
            member_ids: (0..n_per_subset).map(|_| rng.random_range(0..pool.len())).collect(),
        })
        .collect())
}

/// Splits `full` into disjoint (validation, training) datasets of the requested sizes.
pub fn split_pool(full: &Dataset, n_valid: usize, n_train: usize, seed: RngSeed) -> Result<(Dataset, Dataset)> {
    if n_valid + n_train > full.len() {
        return Err(Error::InvalidSize(format!(
            "n_valid + n_train = {} exceeds pool of {}",
            n_valid + n_train,
            full.len()
        )));
    }
    let mut ids: Vec<usize> = (0..full.len()).collect();
    ids.shuffle(&mut seed.rng());
    let valid = full.select(&ids[..n_valid])?;
    let train = full.select(&ids[n_valid..n_valid + n_train])?;
    Ok((valid, train))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pool(n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| Example::new(i, vec![i as f64, 1.0], Label::Real(i as f64 * 0.5)))
            .collect();
        Dataset::new(ex, 2, DatasetKind::Regression).unwrap()
    }

    #[test]
    fn singleton_pool_draws_only_zero() {
        let subsets = sample_subsets(&pool(1), "p", 3, 2, RngSeed(9)).unwrap();
        assert_eq!(subsets.len(), 3);
        for s in subsets {
            assert_eq!(s.member_ids, vec![0, 0]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = pool(10);
        let a = sample_subsets(&p, "p", 2, 3, RngSeed(42)).unwrap();
        let b = sample_subsets(&p, "p", 2, 3, RngSeed(42)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.n() == 3));
    }

    #[test]
    fn full_size_sampling_config() {
        let p = pool(2000);
        let subsets = sample_subsets(&p, "p", 100, 1000, RngSeed(1)).unwrap();
        assert_eq!(subsets.len(), 100);
        assert!(subsets.iter().all(|s| s.n() == 1000));
        assert!(subsets.iter().flat_map(|s| &s.member_ids).all(|&i| i < 2000));
    }

    #[test]
    fn empty_pool_is_rejected() {
        let p = Dataset::new(vec![], 2, DatasetKind::Regression).unwrap();
        let err = sample_subsets(&p, "p", 1, 1, RngSeed(0)).unwrap_err();
        assert_eq!(err.to_string(), "empty pool");
    }

    #[test]
    fn split_is_disjoint_partition() {
        let p = pool(10);
        let (v, t) = split_pool(&p, 4, 6, RngSeed(3)).unwrap();
        assert_eq!((v.len(), t.len()), (4, 6));
        let key = |e: &Example| e.features[0] as i64;
        let vs: HashSet<_> = v.examples().iter().map(key).collect();
        let ts: HashSet<_> = t.examples().iter().map(key).collect();
        assert!(vs.is_disjoint(&ts));
        let union: HashSet<_> = vs.union(&ts).copied().collect();
        assert_eq!(union, (0..10).collect());
        // re-densified ids
        assert!(v.examples().iter().enumerate().all(|(i, e)| e.id == i));
    }

    #[test]
    fn full_size_split_config() {
        let p = pool(110_000);
        let (v, t) = split_pool(&p, 10_000, 100_000, RngSeed(5)).unwrap();
        assert_eq!((v.len(), t.len()), (10_000, 100_000));
    }

    #[test]
    fn split_rejects_oversize() {
        assert!(matches!(split_pool(&pool(5), 3, 3, RngSeed(0)), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn dataset_rejects_bad_invariants() {
        let gap = vec![Example::new(0, vec![0.0], Label::Real(0.0)), Example::new(2, vec![0.0], Label::Real(0.0))];
        assert!(Dataset::new(gap, 1, DatasetKind::Regression).is_err());
        let nan = vec![Example::new(0, vec![f64::NAN], Label::Real(0.0))];
        assert!(Dataset::new(nan, 1, DatasetKind::Regression).is_err());
        let class = vec![Example::new(0, vec![0.0], Label::Class(3))];
        assert!(Dataset::new(class, 1, DatasetKind::Classification { num_classes: 3 }).is_err());
    }

    #[test]
    fn jsonl_roundtrip_with_tags() {
        let ex = vec![
            Example::new(0, vec![0.5, -1.25], Label::Class(1)).with_tag("task-0"),
            Example::new(1, vec![1e-300, 3.0], Label::Class(0)),
        ];
        let ds = Dataset::new(ex, 2, DatasetKind::Classification { num_classes: 2 }).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(r#"{"d":2,"kind":"classification","num_classes":2}"#));
        assert_eq!(Dataset::from_jsonl_str(&text).unwrap(), ds);
    }

    #[test]
    fn manifest_checks_membership() {
        let p = pool(3);
        let subsets = vec![SubsetRef { subset_id: 0, dataset_id: "p".into(), member_ids: vec![0, 2, 2] }];
        let mut buf = Vec::new();
        write_manifest(&subsets, &mut buf).unwrap();
        assert_eq!(parse_manifest(&buf, "p", Some(&p)).unwrap(), subsets);
        assert!(parse_manifest(br#"[{"subset_id":0,"member_ids":[5]}]"#, "p", Some(&p)).is_err());
    }
}
