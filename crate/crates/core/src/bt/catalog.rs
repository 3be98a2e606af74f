use std::collections::{HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::InfoHash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ecosystem {
    Public,
    Private,
    /// Circulates on the overlay only; absent from public and private lists.
    Underground,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcosystemShares {
    pub public: f64,
    pub private: f64,
    pub underground: f64,
}

impl Default for EcosystemShares {
    fn default() -> Self {
        Self {
            public: 0.90,
            private: 0.07,
            underground: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagWeight {
    pub tag: String,
    pub weight: f64,
}

/// One point of the swarm-size distribution: items get popularity `size`
/// with probability `weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSizeWeight {
    pub size: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub n_items: usize,
    pub ecosystem_shares: EcosystemShares,
    pub tags: Vec<TagWeight>,
    pub tags_per_item: usize,
    pub swarm_size: Vec<SwarmSizeWeight>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        let tags = [
            ("video", 0.25),
            ("tv", 0.15),
            ("music", 0.15),
            ("software", 0.1),
            ("games", 0.1),
            ("books", 0.07),
            ("anime", 0.08),
            ("adult", 0.1),
        ];
        // Heavy-tailed with a median of 2.
        let sizes = [
            (1, 0.30),
            (2, 0.22),
            (4, 0.18),
            (8, 0.14),
            (16, 0.09),
            (32, 0.05),
            (64, 0.02),
        ];
        Self {
            n_items: 2000,
            ecosystem_shares: EcosystemShares::default(),
            tags: tags
                .iter()
                .map(|&(tag, weight)| TagWeight {
                    tag: tag.into(),
                    weight,
                })
                .collect(),
            tags_per_item: 2,
            swarm_size: sizes
                .iter()
                .map(|&(size, weight)| SwarmSizeWeight { size, weight })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentItem {
    pub info_hash: InfoHash,
    pub ecosystem: Ecosystem,
    pub tags: Vec<String>,
    pub popularity: f64,
}

#[derive(Clone, Debug)]
pub struct Catalog {
    items: Vec<ContentItem>,
    index: HashMap<InfoHash, usize>,
    picker: Option<WeightedIndex<f64>>,
}

impl Catalog {
    /// Builds a catalog from explicit items.
    pub fn from_items(items: Vec<ContentItem>) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, c)| (c.info_hash, i))
            .collect();
        let picker = WeightedIndex::new(items.iter().map(|c| c.popularity)).ok();
        Self {
            items,
            index,
            picker,
        }
    }

    /// Generates a catalog whose ecosystem counts match the configured shares
    /// (rounded), with popularity drawn from the swarm-size distribution.
    pub fn generate<R: Rng + ?Sized>(cfg: &CatalogConfig, rng: &mut R) -> Self {
        let n = cfg.n_items;
        let n_under = (n as f64 * cfg.ecosystem_shares.underground).round() as usize;
        let n_private =
            ((n as f64 * cfg.ecosystem_shares.private).round() as usize).min(n - n_under.min(n));
        let mut labels = vec![Ecosystem::Underground; n_under.min(n)];
        labels.extend(std::iter::repeat_n(Ecosystem::Private, n_private));
        labels.resize(n, Ecosystem::Public);
        labels.shuffle(rng);

        let sizes = WeightedIndex::new(cfg.swarm_size.iter().map(|s| s.weight)).ok();
        let tags = WeightedIndex::new(cfg.tags.iter().map(|t| t.weight)).ok();
        let mut seen = HashSet::with_capacity(n);
        let items = labels
            .into_iter()
            .map(|ecosystem| {
                let info_hash = loop {
                    let h = InfoHash::random(rng);
                    if seen.insert(h) {
                        break h;
                    }
                };
                let popularity = sizes
                    .as_ref()
                    .map_or(1.0, |d| f64::from(cfg.swarm_size[d.sample(rng)].size));
                let mut item_tags: Vec<String> = Vec::new();
                if let Some(d) = &tags {
                    let want = cfg.tags_per_item.min(cfg.tags.len());
                    while item_tags.len() < want {
                        let t = &cfg.tags[d.sample(rng)].tag;
                        if !item_tags.contains(t) {
                            item_tags.push(t.clone());
                        }
                    }
                    item_tags.sort();
                }
                ContentItem {
                    info_hash,
                    ecosystem,
                    tags: item_tags,
                    popularity,
                }
            })
            .collect();
        Self::from_items(items)
    }

    pub fn items(&self) -> &[ContentItem] {
        &self.items
    }

    pub fn get(&self, info_hash: &InfoHash) -> Option<&ContentItem> {
        self.index.get(info_hash).map(|&i| &self.items[i])
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Draws an item with probability proportional to its popularity.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&ContentItem> {
        self.picker.as_ref().map(|p| &self.items[p.sample(rng)])
    }
}
