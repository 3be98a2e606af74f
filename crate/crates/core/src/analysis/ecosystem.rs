use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{Catalog, Ecosystem};
use crate::InfoHash;

/// What an observer can say about content: listed publicly, listed on a
/// private site, or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EcosystemLabel {
    Public,
    Private,
    Unknown,
}

impl From<Ecosystem> for EcosystemLabel {
    fn from(e: Ecosystem) -> Self {
        match e {
            Ecosystem::Public => EcosystemLabel::Public,
            Ecosystem::Private => EcosystemLabel::Private,
            Ecosystem::Underground => EcosystemLabel::Unknown,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EcosystemError {
    #[error("no downloads to classify")]
    EmptyInput,
    #[error("download {0:?} is not in the catalog")]
    NotInCatalog(InfoHash),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcosystemBreakdown {
    pub counts: BTreeMap<EcosystemLabel, u64>,
    /// Sums to 1.
    pub shares: BTreeMap<EcosystemLabel, f64>,
}

pub fn ecosystem_breakdown(
    downloads: &[InfoHash],
    catalog: &Catalog,
) -> Result<EcosystemBreakdown, EcosystemError> {
    if downloads.is_empty() {
        return Err(EcosystemError::EmptyInput);
    }
    let mut counts: BTreeMap<EcosystemLabel, u64> = [
        EcosystemLabel::Public,
        EcosystemLabel::Private,
        EcosystemLabel::Unknown,
    ]
    .into_iter()
    .map(|l| (l, 0))
    .collect();
    for h in downloads {
        let item = catalog.get(h).ok_or(EcosystemError::NotInCatalog(*h))?;
        *counts.entry(item.ecosystem.into()).or_default() += 1;
    }
    let n = downloads.len() as f64;
    let shares = counts.iter().map(|(&l, &c)| (l, c as f64 / n)).collect();
    Ok(EcosystemBreakdown { counts, shares })
}
