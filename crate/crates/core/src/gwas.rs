//! Marginal association scans, screening rules and screening diagnostics.

use libm::erfc;

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::kernels::{xt_y, DEFAULT_COLUMN_BLOCK};
use crate::scalar::{mean_sd, Scalar};

/// Options for [`marginal_gwas`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GwasOptions {
    /// Center and scale the phenotype to unit variance before the scan.
    pub standardize_phenotype: bool,
    /// Columns per parallel task.
    pub block: usize,
}

impl Default for GwasOptions {
    fn default() -> Self {
        Self { standardize_phenotype: true, block: DEFAULT_COLUMN_BLOCK }
    }
}

impl GwasOptions {
    /// Raw phenotype scale.
    pub fn raw() -> Self {
        Self { standardize_phenotype: false, ..Self::default() }
    }
}

/// Per-SNP marginal regression results.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStats<T = f64> {
    pub snp_id: Vec<String>,
    pub effect: Vec<T>,
    pub se: Vec<T>,
    pub tstat: Vec<T>,
    pub pvalue: Vec<T>,
    /// Sample size behind each SNP.
    pub n: Vec<usize>,
}

impl<T: Scalar> SummaryStats<T> {
    pub fn len(&self) -> usize {
        self.effect.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effect.is_empty()
    }

    /// Checks that all columns have the same length and p-values lie in (0, 1].
    pub fn validate(&self) -> Result<()> {
        let p = self.effect.len();
        if [self.snp_id.len(), self.se.len(), self.tstat.len(), self.pvalue.len(), self.n.len()]
            .iter()
            .any(|&l| l != p)
        {
            return Err(Error::dim("summary statistic columns differ in length"));
        }
        if let Some(pv) = self.pvalue.iter().find(|v| !(**v > T::zero() && **v <= T::one())) {
            return Err(Error::param(format!("p-value {pv} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Two-sided normal p-value `erfc(|t| / sqrt 2)`, floored at the smallest positive
/// normal double.
pub fn two_sided_pvalue(t: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return f64::MIN_POSITIVE;
    }
    erfc(t.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Regresses `y` on every standardized SNP separately.
///
/// The effect is `X_std^T y / n`. Standard errors are those of simple least squares
/// with an intercept, `se^2 = (var(y) - b^2) / (n - 2)` with `var` using divisor `n`.
pub fn marginal_gwas<T: Scalar>(g: &GenotypeMatrix, y: &[T], opts: GwasOptions) -> Result<SummaryStats<T>> {
    let n = g.n();
    if y.len() != n {
        return Err(Error::dim(format!("phenotype has {} entries, genotypes have {n} samples", y.len())));
    }
    if n < 3 {
        return Err(Error::param("association scan needs at least three samples"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("phenotype contains non-finite values"));
    }
    let (mean, sd) = mean_sd(y);
    if sd <= T::zero() {
        return Err(Error::degenerate("phenotype has zero variance"));
    }
    let scaled: Vec<T>;
    let (yy, var_y) = if opts.standardize_phenotype {
        scaled = y.iter().map(|&v| (v - mean) / sd).collect();
        (&scaled[..], T::one())
    } else {
        (y, sd * sd)
    };
    let nn = T::of_usize(n);
    let effect: Vec<T> = xt_y(g, yy, opts.block.max(1)).into_iter().map(|v| v / nn).collect();
    let dof = T::of_usize(n - 2);
    let mut se = Vec::with_capacity(effect.len());
    let mut tstat = Vec::with_capacity(effect.len());
    let mut pvalue = Vec::with_capacity(effect.len());
    for &b in &effect {
        let s = ((var_y - b * b).max(T::zero()) / dof).sqrt();
        let t = if s > T::zero() {
            b / s
        } else if b == T::zero() {
            T::zero()
        } else {
            b.signum() * T::infinity()
        };
        se.push(s);
        tstat.push(t);
        pvalue.push(T::of(two_sided_pvalue(t.to_f64_lossy())).max(T::min_positive_value()));
    }
    Ok(SummaryStats { snp_id: g.snp_ids().to_vec(), effect, se, tstat, pvalue, n: vec![n; g.p()] })
}

/// How SNPs are chosen for a score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScreenRule {
    /// Keep every SNP.
    All,
    /// Keep SNPs with p-value at or below the cutoff.
    PValue(f64),
    /// Keep SNPs whose absolute effect exceeds the cutoff.
    Effect(f64),
}

impl ScreenRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScreenRule::All => Ok(()),
            ScreenRule::PValue(c) if (0.0..=1.0).contains(&c) => Ok(()),
            ScreenRule::PValue(c) => Err(Error::param(format!("p-value cutoff {c} outside [0, 1]"))),
            ScreenRule::Effect(c) if c >= 0.0 && c.is_finite() => Ok(()),
            ScreenRule::Effect(c) => Err(Error::param(format!("effect cutoff {c} must be non-negative"))),
        }
    }
}

/// SNPs retained by a screening rule, with counts against a known causal set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Selected SNP indices in increasing order.
    pub indices: Vec<usize>,
    /// Number of selected causal SNPs, when the causal set is known.
    pub q_causal: Option<usize>,
}

impl Selection {
    pub fn q(&self) -> usize {
        self.indices.len()
    }

    /// Number of selected causal SNPs, or an error when the causal set was not given.
    pub fn q1(&self) -> Result<usize> {
        self.q_causal.ok_or_else(|| Error::param("selection was made without a known causal set"))
    }

    /// Number of selected SNPs outside the causal set.
    pub fn q2(&self) -> Result<usize> {
        Ok(self.q() - self.q1()?)
    }
}

/// Number of indices present in every sorted list.
pub fn intersection_count(lists: &[&[usize]]) -> usize {
    let Some((first, rest)) = lists.split_first() else { return 0 };
    first.iter().filter(|j| rest.iter().all(|l| l.binary_search(j).is_ok())).count()
}

/// Applies a screening rule. `causal` (sorted) enables the causal counts.
pub fn threshold_select<T: Scalar>(
    stats: &SummaryStats<T>,
    rule: ScreenRule,
    causal: Option<&[usize]>,
) -> Result<Selection> {
    rule.validate()?;
    let keep = |j: usize| match rule {
        ScreenRule::All => true,
        ScreenRule::PValue(c) => stats.pvalue[j].to_f64_lossy() <= c,
        ScreenRule::Effect(c) => stats.effect[j].abs().to_f64_lossy() > c,
    };
    let indices: Vec<usize> = (0..stats.len()).filter(|&j| keep(j)).collect();
    let q_causal = causal.map(|c| intersection_count(&[&indices, c]));
    Ok(Selection { indices, q_causal })
}

/// Diagnostics of a scan against the true effects.
#[derive(Clone, Debug, PartialEq)]
pub struct ScreenMetrics {
    /// Sum of squared estimation errors over all SNPs.
    pub beta_mse: f64,
    /// Area under the ROC curve of `|t|` separating causal from null SNPs.
    pub auc: f64,
    /// Fraction of causal SNPs passing the Bonferroni level `alpha_level / p`.
    pub power: f64,
    /// Fraction of causal SNPs among the top `top_frac` share of SNPs by `|t|`.
    pub enrichment: f64,
}

/// Scores a scan against the true effects `truth` (zero means null).
pub fn screen_metrics<T: Scalar>(
    stats: &SummaryStats<T>,
    truth: &[f64],
    alpha_level: f64,
    top_frac: f64,
) -> Result<ScreenMetrics> {
    let p = stats.len();
    if truth.len() != p {
        return Err(Error::dim("true effect vector length differs from summary statistics"));
    }
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::param(format!("top fraction {top_frac} outside (0, 1]")));
    }
    let causal: Vec<bool> = truth.iter().map(|&b| b != 0.0).collect();
    let n_causal = causal.iter().filter(|&&c| c).count();
    if n_causal == 0 || n_causal == p {
        return Err(Error::degenerate("screening metrics need both causal and null SNPs"));
    }
    let beta_mse = (0..p).map(|j| (stats.effect[j].to_f64_lossy() - truth[j]).powi(2)).sum();
    let abs_t: Vec<f64> = stats.tstat.iter().map(|t| t.to_f64_lossy().abs()).collect();

    // Rank by |t| descending, ties broken by SNP index.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| abs_t[b].total_cmp(&abs_t[a]).then(a.cmp(&b)));

    // Mann-Whitney statistic with mid-ranks for ties.
    let mut asc = order.clone();
    asc.reverse();
    asc.sort_by(|&a, &b| abs_t[a].total_cmp(&abs_t[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < p {
        let mut k = i;
        while k + 1 < p && abs_t[asc[k + 1]] == abs_t[asc[i]] {
            k += 1;
        }
        let mid = (i + k) as f64 / 2.0 + 1.0;
        rank_sum += (i..=k).filter(|&r| causal[asc[r]]).count() as f64 * mid;
        i = k + 1;
    }
    let n1 = n_causal as f64;
    let n0 = (p - n_causal) as f64;
    let auc = (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);

    let level = alpha_level / p as f64;
    let hits = (0..p).filter(|&j| causal[j] && stats.pvalue[j].to_f64_lossy() < level).count();
    let top = ((top_frac * p as f64).ceil() as usize).clamp(1, p);
    let top_causal = order[..top].iter().filter(|&&j| causal[j]).count();
    Ok(ScreenMetrics {
        beta_mse,
        auc,
        power: hits as f64 / n1,
        enrichment: top_causal as f64 / top as f64,
    })
}
