use std::collections::BTreeMap;

use crate::data::{BandName, FeatureFamily};
use crate::error::{Error, Result};

pub type CellKey = (FeatureFamily, BandName);

/// Bands whose log-likelihood ratios are summed, per feature family.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionSpec {
    pub bands: BTreeMap<FeatureFamily, Vec<BandName>>,
}

impl Default for FusionSpec {
    /// All bands for the network families; log power only over beta and gamma.
    fn default() -> Self {
        let mut bands = BTreeMap::new();
        bands.insert(FeatureFamily::ConnectivityStructure, BandName::ALL.to_vec());
        bands.insert(FeatureFamily::GraphVariability, BandName::ALL.to_vec());
        bands.insert(FeatureFamily::LogPower, vec![BandName::Beta, BandName::Gamma]);
        FusionSpec { bands }
    }
}

impl FusionSpec {
    pub fn bands_for(&self, family: FeatureFamily) -> &[BandName] {
        self.bands.get(&family).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Cells summed when fusing `families`, in family then band order.
    pub fn cells(&self, families: &[FeatureFamily]) -> Vec<CellKey> {
        families
            .iter()
            .flat_map(|&f| self.bands_for(f).iter().map(move |&b| (f, b)))
            .collect()
    }
}

/// Per-trial sum of the selected cells' scores.
pub fn fuse(
    llrs: &BTreeMap<CellKey, Vec<f64>>,
    spec: &FusionSpec,
    families: &[FeatureFamily],
) -> Result<Vec<f64>> {
    let cells = spec.cells(families);
    let missing: Vec<String> = cells
        .iter()
        .filter(|c| !llrs.contains_key(c))
        .map(|(f, b)| format!("{f}/{b}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCell(missing.join(", ")));
    }
    let Some(first) = cells.first() else {
        return Err(Error::InvalidArgument("fusion selects no cells".into()));
    };
    let n = llrs[first].len();
    let mut fused = vec![0.0; n];
    for cell in &cells {
        let scores = &llrs[cell];
        if scores.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: scores.len(),
            });
        }
        for (acc, s) in fused.iter_mut().zip(scores) {
            *acc += s;
        }
    }
    Ok(fused)
}
