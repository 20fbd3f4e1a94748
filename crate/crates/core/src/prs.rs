//! Polygenic risk scores built from summary statistics.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::gwas::{threshold_select, SummaryStats};
use crate::kernels::{self, DEFAULT_ROW_BLOCK};
use crate::scalar::Scalar;

pub use crate::gwas::ScreenRule;

/// Outcome of matching summary statistics to genotype columns by SNP id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentReport {
    pub matched: usize,
    pub missing_in_genotypes: usize,
    pub missing_in_summary: usize,
}

/// A risk score for every sample of a target cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct PrsVector<T = f64> {
    pub scores: Vec<T>,
    /// Genotype columns that entered the score.
    pub selected: Vec<usize>,
    pub alignment: AlignmentReport,
}

impl<T: Scalar> PrsVector<T> {
    /// True when no SNP passed the screening rule; all scores are then zero.
    pub fn is_empty_selection(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Weights on the genotype columns of `w`, matched by SNP id. Columns keep the order
/// of the genotype matrix; SNPs absent from the summary get weight zero.
fn aligned_weights<T: Scalar>(
    w: &GenotypeMatrix,
    stats: &SummaryStats<T>,
    keep: &[bool],
) -> (Vec<T>, Vec<usize>, AlignmentReport) {
    let mut weights = vec![T::zero(); w.p()];
    let mut selected = Vec::new();
    if w.snp_ids() == &stats.snp_id[..] {
        for j in 0..w.p() {
            if keep[j] {
                weights[j] = stats.effect[j];
                selected.push(j);
            }
        }
        let report = AlignmentReport { matched: w.p(), ..Default::default() };
        return (weights, selected, report);
    }
    let index: HashMap<&str, usize> =
        stats.snp_id.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut matched = 0;
    for (j, id) in w.snp_ids().iter().enumerate() {
        if let Some(&k) = index.get(id.as_str()) {
            matched += 1;
            if keep[k] {
                weights[j] = stats.effect[k];
                selected.push(j);
            }
        }
    }
    let report = AlignmentReport {
        matched,
        missing_in_genotypes: stats.len() - matched,
        missing_in_summary: w.p() - matched,
    };
    (weights, selected, report)
}

/// Scores the target genotypes `w` with the effects in `stats` that pass `rule`.
pub fn score<T: Scalar>(w: &GenotypeMatrix, stats: &SummaryStats<T>, rule: ScreenRule) -> Result<PrsVector<T>> {
    stats.validate()?;
    let sel = threshold_select(stats, rule, None)?;
    let mut keep = vec![false; stats.len()];
    for &j in &sel.indices {
        keep[j] = true;
    }
    let (weights, selected, alignment) = aligned_weights(w, stats, &keep);
    if alignment.matched == 0 {
        return Err(Error::degenerate("summary statistics share no SNP ids with the genotypes"));
    }
    let scores = kernels::score(w, &weights, Some(&selected), DEFAULT_ROW_BLOCK);
    Ok(PrsVector { scores, selected, alignment })
}

/// Scores with positional weights restricted to `selected` columns.
pub fn score_weights<T: Scalar>(w: &GenotypeMatrix, weights: &[T], selected: Option<&[usize]>) -> Result<Vec<T>> {
    if weights.len() != w.p() {
        return Err(Error::dim(format!("{} weights for {} SNPs", weights.len(), w.p())));
    }
    if let Some(&j) = selected.and_then(|s| s.iter().find(|&&j| j >= w.p())) {
        return Err(Error::dim(format!("selected SNP {j} out of range")));
    }
    Ok(kernels::score(w, weights, selected, DEFAULT_ROW_BLOCK))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::gen_genotypes;
    use crate::gwas::{marginal_gwas, GwasOptions};

    #[test]
    fn permuted_summary_gives_same_score() {
        let g = gen_genotypes(40, 8, 3).unwrap();
        let y: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let s = marginal_gwas(&g, &y, GwasOptions::default()).unwrap();
        let direct = score(&g, &s, ScreenRule::All).unwrap();
        let perm: Vec<usize> = vec![3, 1, 7, 0, 5, 2, 6, 4];
        let shuffled = SummaryStats {
            snp_id: perm.iter().map(|&j| s.snp_id[j].clone()).collect(),
            effect: perm.iter().map(|&j| s.effect[j]).collect(),
            se: perm.iter().map(|&j| s.se[j]).collect(),
            tstat: perm.iter().map(|&j| s.tstat[j]).collect(),
            pvalue: perm.iter().map(|&j| s.pvalue[j]).collect(),
            n: perm.iter().map(|&j| s.n[j]).collect(),
        };
        let again = score(&g, &shuffled, ScreenRule::All).unwrap();
        assert_eq!(direct.scores, again.scores);
        assert_eq!(again.alignment.matched, 8);
    }

    #[test]
    fn empty_selection_yields_zero_scores() {
        let g = gen_genotypes(20, 5, 4).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let s = marginal_gwas(&g, &y, GwasOptions::default()).unwrap();
        let v = score(&g, &s, ScreenRule::PValue(0.0)).unwrap();
        assert!(v.is_empty_selection());
        assert!(v.scores.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_ids_are_an_error() {
        let g = gen_genotypes(20, 3, 4).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut s = marginal_gwas(&g, &y, GwasOptions::default()).unwrap();
        s.snp_id = vec!["a".into(), "b".into(), "c".into()];
        assert!(score(&g, &s, ScreenRule::All).is_err());
    }
}
