//! Combined ratio restricted to disjoint bins of the sample.

use serde::{Deserialize, Serialize};

use super::{
    check_u_grid, CurveKind, DiagnosticCurve, DiagnosticError, ForecastObservationPair, PitRandomizer,
    TailSample, DEGENERATE_DENOMINATOR,
};
use crate::numeric;

/// How pairs are split into bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinPartition {
    /// Bin `j` holds pairs whose covariate lies in `[b_{j-1}, b_j)`, with
    /// `b_0 = -inf` and a final bin `[b_last, inf)`.
    Covariate { name: String, breakpoints: Vec<f64> },
    /// Explicit disjoint index sets.
    IndexSets(Vec<Vec<usize>>),
}

impl BinPartition {
    /// `bins` bins of roughly equal size, split at empirical quantiles of the
    /// covariate.
    pub fn quantile_bins(
        pairs: &[ForecastObservationPair],
        covariate: &str,
        bins: usize,
    ) -> Result<Self, DiagnosticError> {
        if bins == 0 {
            return Err(DiagnosticError::InvalidPartition("need at least one bin".into()));
        }
        let mut values = covariate_values(pairs, covariate)?;
        if values.is_empty() {
            return Err(DiagnosticError::EmptySample);
        }
        values.sort_by(f64::total_cmp);
        let breakpoints = (1..bins)
            .map(|k| numeric::empirical_quantile(&values, k as f64 / bins as f64))
            .collect();
        Ok(BinPartition::Covariate {
            name: covariate.to_string(),
            breakpoints,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            BinPartition::Covariate { breakpoints, .. } => breakpoints.len() + 1,
            BinPartition::IndexSets(sets) => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Member indices of each bin, ascending.
    pub fn assign(&self, pairs: &[ForecastObservationPair]) -> Result<Vec<Vec<usize>>, DiagnosticError> {
        match self {
            BinPartition::Covariate { name, breakpoints } => {
                if breakpoints.windows(2).any(|w| w[0] > w[1]) || breakpoints.iter().any(|b| b.is_nan()) {
                    return Err(DiagnosticError::InvalidPartition(
                        "breakpoints must be nondecreasing".into(),
                    ));
                }
                let values = covariate_values(pairs, name)?;
                let mut bins = vec![Vec::new(); breakpoints.len() + 1];
                for (i, x) in values.into_iter().enumerate() {
                    bins[breakpoints.partition_point(|&b| b <= x)].push(i);
                }
                Ok(bins)
            }
            BinPartition::IndexSets(sets) => {
                let mut seen = vec![false; pairs.len()];
                for set in sets {
                    for &i in set {
                        if i >= pairs.len() {
                            return Err(DiagnosticError::InvalidPartition(format!(
                                "index {i} out of range for {} pairs",
                                pairs.len()
                            )));
                        }
                        if std::mem::replace(&mut seen[i], true) {
                            return Err(DiagnosticError::InvalidPartition(format!(
                                "index {i} appears in more than one bin"
                            )));
                        }
                    }
                }
                Ok(sets
                    .iter()
                    .map(|s| {
                        let mut s = s.clone();
                        s.sort_unstable();
                        s
                    })
                    .collect())
            }
        }
    }
}

fn covariate_values(pairs: &[ForecastObservationPair], name: &str) -> Result<Vec<f64>, DiagnosticError> {
    pairs
        .iter()
        .enumerate()
        .map(|(index, p)| {
            p.covariates.get(name).ok_or_else(|| DiagnosticError::MissingCovariate {
                name: name.to_string(),
                index,
            })
        })
        .collect()
}

/// Result for one bin. `curve` is `None` (and `degenerate` set) when the bin
/// is empty or its forecast exceedance probabilities sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub bin: usize,
    pub n: usize,
    pub curve: Option<DiagnosticCurve>,
    pub degenerate: bool,
}

impl TailSample {
    /// Per-bin combined ratio: numerator over exceedances in the bin,
    /// denominator `Σ_{i in bin} (1 - F_i(t))`.
    pub fn binned_combined_curves(
        &self,
        bins: &[Vec<usize>],
        u_grid: &[f64],
    ) -> Result<Vec<BinnedCurve>, DiagnosticError> {
        check_u_grid(u_grid)?;
        Ok(bins
            .iter()
            .enumerate()
            .map(|(bin, members)| {
                let denominator = numeric::sum(members.iter().map(|&i| self.survival()[i]));
                if members.is_empty() || denominator < DEGENERATE_DENOMINATOR {
                    return BinnedCurve {
                        bin,
                        n: members.len(),
                        curve: None,
                        degenerate: true,
                    };
                }
                let mut pits: Vec<f64> = members.iter().filter_map(|&i| self.pits()[i]).collect();
                pits.sort_by(f64::total_cmp);
                let values = u_grid
                    .iter()
                    .map(|&u| pits.partition_point(|&z| z <= u) as f64 / denominator)
                    .collect();
                BinnedCurve {
                    bin,
                    n: members.len(),
                    curve: Some(DiagnosticCurve {
                        kind: CurveKind::Combined,
                        threshold: self.threshold(),
                        grid: u_grid.to_vec(),
                        values,
                        band: None,
                        n_exceedances: pits.len(),
                    }),
                    degenerate: false,
                }
            })
            .collect())
    }
}

/// Combined ratio per bin of `partition` at threshold `t`.
pub fn binned_combined_ratio(
    pairs: &[ForecastObservationPair],
    partition: &BinPartition,
    t: f64,
    u_grid: &[f64],
) -> Result<Vec<BinnedCurve>, DiagnosticError> {
    let bins = partition.assign(pairs)?;
    TailSample::new(pairs, t, &PitRandomizer::default())?.binned_combined_curves(&bins, u_grid)
}

#[cfg(test)]
mod tests {
    use super::super::tests::three_uniform_pairs;
    use super::super::{combined_ratio_curve, default_u_grid};
    use super::*;

    #[test]
    fn single_bin_matches_pooled() {
        let pairs = three_uniform_pairs();
        let grid = default_u_grid();
        let pooled = combined_ratio_curve(&pairs, 0.5, &grid).unwrap();
        let binned = binned_combined_ratio(&pairs, &BinPartition::IndexSets(vec![vec![0, 1, 2]]), 0.5, &grid).unwrap();
        assert_eq!(binned[0].curve.as_ref().unwrap(), &pooled);
    }

    #[test]
    fn explicit_bins() {
        let pairs = three_uniform_pairs();
        let partition = BinPartition::IndexSets(vec![vec![0, 1], vec![2]]);
        let binned = binned_combined_ratio(&pairs, &partition, 0.5, &[1.0]).unwrap();
        assert!((binned[0].curve.as_ref().unwrap().values[0] - 1.0).abs() < 1e-12);
        assert!((binned[1].curve.as_ref().unwrap().values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bin_is_flagged_not_fatal() {
        let pairs = three_uniform_pairs();
        let partition = BinPartition::IndexSets(vec![vec![0, 1, 2], vec![]]);
        let binned = binned_combined_ratio(&pairs, &partition, 0.5, &[1.0]).unwrap();
        assert!(!binned[0].degenerate);
        assert!(binned[1].degenerate && binned[1].curve.is_none());
    }

    #[test]
    fn overlapping_bins_rejected() {
        let pairs = three_uniform_pairs();
        let partition = BinPartition::IndexSets(vec![vec![0, 1], vec![1]]);
        assert!(matches!(partition.assign(&pairs), Err(DiagnosticError::InvalidPartition(_))));
        let partition = BinPartition::IndexSets(vec![vec![5]]);
        assert!(partition.assign(&pairs).is_err());
    }

    #[test]
    fn covariate_breakpoints() {
        let pairs: Vec<_> = three_uniform_pairs()
            .into_iter()
            .zip([1.0, 2.0, 3.0])
            .map(|(p, c)| p.with_covariate("delta", c))
            .collect();
        let partition = BinPartition::Covariate {
            name: "delta".into(),
            breakpoints: vec![2.0],
        };
        assert_eq!(partition.assign(&pairs).unwrap(), vec![vec![0], vec![1, 2]]);
        let terciles = BinPartition::quantile_bins(&pairs, "delta", 3).unwrap();
        assert_eq!(terciles.assign(&pairs).unwrap(), vec![vec![0], vec![1], vec![2]]);
        let missing = BinPartition::quantile_bins(&pairs, "tau", 2);
        assert!(matches!(missing, Err(DiagnosticError::MissingCovariate { .. })));
    }
}
