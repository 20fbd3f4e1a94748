//! Monte Carlo studies over grids of architectures.
//!
//! A run simulates `replicates` independent data sets. Each replicate draws its
//! genotypes once and reuses them for every grid point; effects, noise and
//! phenotypes are drawn per point from the stream `(replicate, point)`. Rows are
//! ordered by point, estimator and replicate before they are persisted, so the
//! output does not depend on the number of workers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{correct, raw_cosine, CaseTag, DesignMeta, ScreenCounts, TraitScreen};
use crate::genotype::{gen_genotypes, GenotypeMatrix};
use crate::gwas::{intersection_count, marginal_gwas, screen_metrics, threshold_select, GwasOptions, ScreenRule};
use crate::prs::score_weights;
use crate::scalar::{mean_sample_sd, quantile_sorted};
use crate::seed;
use crate::synth::{
    gen_bundle_genotypes, gen_bundle_phenotypes, gen_effects, gen_phenotype, gen_phenotype_noise_var,
    BundleGenotypes, CohortSizes, DistributionSpec, OverlapDesign, OverlapPair, Trait, TraitArchitecture,
};

/// Named study designs with their own defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Fig1GwasProperties,
    Fig2AllSnp,
    Fig3Screening,
    Fig4Overlap,
    FigS2Sparsity,
    FigS5SummaryOnly,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Fig1GwasProperties,
        Scenario::Fig2AllSnp,
        Scenario::Fig3Screening,
        Scenario::Fig4Overlap,
        Scenario::FigS2Sparsity,
        Scenario::FigS5SummaryOnly,
        Scenario::Custom,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Fig1GwasProperties => "fig1_gwas_properties",
            Scenario::Fig2AllSnp => "fig2_all_snp",
            Scenario::Fig3Screening => "fig3_screening",
            Scenario::Fig4Overlap => "fig4_overlap",
            Scenario::FigS2Sparsity => "figS2_sparsity",
            Scenario::FigS5SummaryOnly => "figS5_summary_only",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::param(format!("unknown scenario '{s}'")))
    }
}

/// How the cohorts of a run share samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Independent,
    /// The `alpha` discovery cohort shares `n_s` samples with the target cohort.
    DiscoveryTarget,
    /// The two discovery cohorts share `n_s` samples.
    DiscoveryDiscovery,
    /// Both traits are measured on one cohort of `n_s` samples.
    Full,
}

impl Layout {
    pub fn tag(self) -> &'static str {
        match self {
            Layout::Independent => "independent",
            Layout::DiscoveryTarget => "i",
            Layout::DiscoveryDiscovery => "ii",
            Layout::Full => "full",
        }
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independent" | "none" => Ok(Layout::Independent),
            "i" | "discovery_target" => Ok(Layout::DiscoveryTarget),
            "ii" | "discovery_discovery" => Ok(Layout::DiscoveryDiscovery),
            "full" => Ok(Layout::Full),
            other => Err(Error::param(format!("unknown overlap layout '{other}'"))),
        }
    }
}

/// Quantities recorded for every grid point and replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// Target phenotype against the all-SNP score.
    GAe,
    /// Two all-SNP scores on the target cohort.
    GAb,
    /// Cosine of the two effect-estimate vectors.
    SummaryAb,
    /// Target phenotype against a screened score, one row per threshold.
    GTAe,
    /// Two screened scores, one row per threshold.
    GTAb,
    /// Two scores evaluated on the cohort that measured both traits.
    CaseIv,
    /// Two scores evaluated on the `alpha` discovery cohort.
    GXSplit,
    /// Effect estimate of the first held-out null SNP.
    NullEffect,
    /// Mean squared effect estimate over all held-out null SNPs.
    NullEffectMsq,
    BetaMse,
    Auc,
    Power,
    Enrichment,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 13] = [
        EstimatorKind::GAe,
        EstimatorKind::GAb,
        EstimatorKind::SummaryAb,
        EstimatorKind::GTAe,
        EstimatorKind::GTAb,
        EstimatorKind::CaseIv,
        EstimatorKind::GXSplit,
        EstimatorKind::NullEffect,
        EstimatorKind::NullEffectMsq,
        EstimatorKind::BetaMse,
        EstimatorKind::Auc,
        EstimatorKind::Power,
        EstimatorKind::Enrichment,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::GAe => "g_ae",
            EstimatorKind::GAb => "g_ab",
            EstimatorKind::SummaryAb => "summary_ab",
            EstimatorKind::GTAe => "g_t_ae",
            EstimatorKind::GTAb => "g_t_ab",
            EstimatorKind::CaseIv => "case_iv",
            EstimatorKind::GXSplit => "g_x_split",
            EstimatorKind::NullEffect => "null_effect",
            EstimatorKind::NullEffectMsq => "null_effect_msq",
            EstimatorKind::BetaMse => "beta_mse",
            EstimatorKind::Auc => "auc",
            EstimatorKind::Power => "power",
            EstimatorKind::Enrichment => "enrichment",
        }
    }

    /// Tag written to result rows, which names the overlap variant where one applies.
    pub fn row_tag(self, layout: Layout) -> &'static str {
        match (self, layout) {
            (EstimatorKind::GAe, Layout::DiscoveryTarget) => "g_s_ae",
            (EstimatorKind::GAb, Layout::DiscoveryDiscovery | Layout::Full) => "g_s_ab",
            (EstimatorKind::SummaryAb, Layout::Full) => "case_iii",
            _ => self.tag(),
        }
    }

    fn is_gwas_metric(self) -> bool {
        matches!(
            self,
            EstimatorKind::NullEffect
                | EstimatorKind::NullEffectMsq
                | EstimatorKind::BetaMse
                | EstimatorKind::Auc
                | EstimatorKind::Power
                | EstimatorKind::Enrichment
        )
    }

    /// Correction case under `layout`, or `None` when the estimator is not defined there.
    fn case(self, layout: Layout) -> Option<CaseTag> {
        use EstimatorKind::*;
        match (self, layout) {
            (GAe, Layout::Independent) => Some(CaseTag::IndepAe),
            (GAe, Layout::DiscoveryTarget) => Some(CaseTag::OverlapCaseI),
            (GAb, Layout::Independent) => Some(CaseTag::IndepAb),
            (GAb, Layout::DiscoveryDiscovery | Layout::Full) => Some(CaseTag::OverlapCaseII),
            (SummaryAb, Layout::Independent) => Some(CaseTag::SummaryAb),
            (SummaryAb, Layout::Full) => Some(CaseTag::CaseIii),
            (GTAe, Layout::Independent) => Some(CaseTag::ScreenedAe),
            (GTAb, Layout::Independent) => Some(CaseTag::ScreenedAb),
            (CaseIv, Layout::Full) => Some(CaseTag::CaseIv),
            (GXSplit, Layout::Independent) => Some(CaseTag::CaseV),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| Error::param(format!("unknown estimator '{s}'")))
    }
}

/// Size of the default cohorts, SNP panels and replicate counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Reduced,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Scale::Full),
            "reduced" => Ok(Scale::Reduced),
            other => Err(Error::param(format!("unknown scale '{other}'"))),
        }
    }
}

/// A complete description of a simulation study.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Private size of the `alpha` discovery cohort.
    pub n1: usize,
    /// Private size of the `beta` discovery cohort.
    pub n2: usize,
    /// Private size of the target cohort.
    pub n3: usize,
    /// Size of the shared sample block.
    pub n_s: usize,
    pub p: usize,
    /// Causal SNPs of `alpha` when `sparsity` is empty.
    pub m: usize,
    /// Grid of `m / p` ratios. Overrides `m` when non-empty.
    pub sparsity: Vec<f64>,
    /// Grid of ratios `m_beta / m_alpha = m_eta / m_alpha`.
    pub k_ratio: Vec<f64>,
    /// Fraction of the smaller causal set that is shared between traits.
    pub overlap_fraction: f64,
    /// Per-SNP effect variance of every trait.
    pub sigma2: f64,
    pub h2_alpha: f64,
    pub h2_beta: f64,
    pub h2_eta: f64,
    /// Noise variance of `alpha`, overriding `h2_alpha` in GWAS-property runs.
    pub sigma2_eps: Option<f64>,
    /// Grid of genetic correlations.
    pub phi: Vec<f64>,
    /// P-value cutoffs for the screened estimators.
    pub thresholds: Vec<f64>,
    pub layout: Layout,
    /// Noise correlation of the two traits on shared samples.
    pub rho_eps: f64,
    /// Extra null SNPs appended to the genotype matrix in GWAS-property runs.
    pub held_out_nulls: usize,
    /// Estimators to record. Empty means the scenario default.
    pub estimators: Vec<EstimatorKind>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Directory that receives the result tables.
    pub output: Option<PathBuf>,
    /// Worker threads. `None` uses the global pool.
    pub workers: Option<usize>,
    /// Draw genotypes once for the whole run instead of once per replicate.
    pub reuse_genotypes: bool,
}

/// P-value cutoffs of the default screening grid.
pub const DEFAULT_THRESHOLDS: [f64; 17] =
    [1.0, 0.8, 0.5, 0.4, 0.3, 0.2, 0.1, 0.08, 0.05, 0.02, 0.01, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

fn phi_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

impl ExperimentConfig {
    /// Defaults of `scenario` at the given scale.
    ///
    /// Full scale uses ten thousand samples per cohort and 200 replicates. Reduced
    /// scale uses four thousand samples and SNPs, 800 causal SNPs and 100 replicates,
    /// except the GWAS-property study which uses 5000 samples, 1000 SNPs and 500
    /// replicates.
    pub fn defaults(scenario: Scenario, scale: Scale) -> Self {
        let (n, p, m, replicates) = match scale {
            Scale::Full => (10_000, 10_000, 2000, 200),
            Scale::Reduced => (4000, 4000, 800, 100),
        };
        let mut c = ExperimentConfig {
            scenario,
            n1: n,
            n2: n,
            n3: n,
            n_s: 0,
            p,
            m,
            sparsity: Vec::new(),
            k_ratio: vec![1.0],
            overlap_fraction: 1.0,
            sigma2: 1.0,
            h2_alpha: 1.0,
            h2_beta: 1.0,
            h2_eta: 1.0,
            sigma2_eps: None,
            phi: phi_grid(),
            thresholds: Vec::new(),
            layout: Layout::Independent,
            rho_eps: 0.0,
            held_out_nulls: 0,
            estimators: Vec::new(),
            replicates,
            master_seed: 1,
            output: None,
            workers: None,
            reuse_genotypes: false,
        };
        match scenario {
            Scenario::Fig1GwasProperties => {
                c.n2 = 0;
                c.n3 = 0;
                c.phi = vec![0.0];
                c.sigma2_eps = Some(1.0);
                c.held_out_nulls = 100;
                match scale {
                    Scale::Full => {
                        c.p = 100_000;
                        c.sparsity = vec![0.001, 0.01, 0.1, 0.5, 0.8];
                    }
                    Scale::Reduced => {
                        c.n1 = 5000;
                        c.p = 1000;
                        c.m = 1000;
                        c.replicates = 500;
                    }
                }
            }
            Scenario::Fig2AllSnp | Scenario::Custom => {}
            Scenario::Fig3Screening => {
                c.n2 = 0;
                c.phi = vec![0.8];
                c.thresholds = DEFAULT_THRESHOLDS.to_vec();
                c.sparsity = vec![0.01, 0.1, 0.5, 0.8];
            }
            Scenario::Fig4Overlap => {
                c.layout = Layout::DiscoveryTarget;
                c.n_s = n / 2;
                c.n1 = n / 2;
                c.n2 = 0;
                c.n3 = n / 2;
            }
            Scenario::FigS2Sparsity => {
                c.phi = vec![0.5];
                c.sparsity = vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.6, 0.7, 0.8];
            }
            Scenario::FigS5SummaryOnly => {
                c.n3 = 0;
            }
        }
        c
    }

    /// Estimators recorded by this run.
    pub fn estimator_set(&self) -> Vec<EstimatorKind> {
        use EstimatorKind::*;
        if !self.estimators.is_empty() {
            return self.estimators.clone();
        }
        match self.scenario {
            Scenario::Fig1GwasProperties => vec![NullEffect, NullEffectMsq, BetaMse, Auc, Power, Enrichment],
            Scenario::Fig2AllSnp | Scenario::FigS2Sparsity | Scenario::Custom => vec![GAe, GAb],
            Scenario::Fig3Screening if self.n2 > 0 => vec![GAe, GTAe, GTAb],
            Scenario::Fig3Screening => vec![GAe, GTAe],
            Scenario::Fig4Overlap => match self.layout {
                Layout::Independent => vec![GAe, GAb],
                Layout::DiscoveryTarget => vec![GAe],
                Layout::DiscoveryDiscovery => vec![GAb],
                Layout::Full if self.n3 > 0 => vec![SummaryAb, CaseIv, GAb],
                Layout::Full => vec![SummaryAb, CaseIv],
            },
            Scenario::FigS5SummaryOnly => vec![SummaryAb, GXSplit],
        }
    }

    /// Checks that grids are usable and that every estimator can be computed.
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::param("replicates must be at least 1"));
        }
        if self.p == 0 {
            return Err(Error::param("p must be positive"));
        }
        if self.phi.is_empty() || self.k_ratio.is_empty() {
            return Err(Error::param("phi and k_ratio grids must be non-empty"));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers must be at least 1"));
        }
        for (name, h) in [("h2_alpha", self.h2_alpha), ("h2_beta", self.h2_beta), ("h2_eta", self.h2_eta)] {
            if !(h > 0.0 && h <= 1.0) {
                return Err(Error::param(format!("{name} = {h} must lie in (0, 1]")));
            }
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return Err(Error::param("overlap_fraction must lie in (0, 1]"));
        }
        if let Some(s) = self.sigma2_eps {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param("sigma2_eps must be non-negative"));
            }
        }
        let shared_ok = match self.layout {
            Layout::Independent => self.n_s == 0,
            _ => self.n_s > 0,
        };
        if !shared_ok {
            return Err(Error::param(format!(
                "layout {} is inconsistent with n_s = {}",
                self.layout.tag(),
                self.n_s
            )));
        }
        if self.layout == Layout::Full && (self.n1 > 0 || self.n2 > 0) {
            return Err(Error::param("full overlap has no private discovery samples; set n1 = n2 = 0"));
        }
        let estimators = self.estimator_set();
        let gwas_run = self.scenario == Scenario::Fig1GwasProperties;
        for k in &estimators {
            if k.is_gwas_metric() != gwas_run {
                return Err(Error::param(format!("estimator {k} is not available in scenario {}", self.scenario)));
            }
            if !gwas_run && k.case(self.layout).is_none() {
                return Err(Error::param(format!("estimator {k} is not defined for layout {}", self.layout.tag())));
            }
            let needs_beta = matches!(
                k,
                EstimatorKind::GAb | EstimatorKind::SummaryAb | EstimatorKind::GTAb | EstimatorKind::CaseIv | EstimatorKind::GXSplit
            );
            let needs_target = matches!(k, EstimatorKind::GAe | EstimatorKind::GAb | EstimatorKind::GTAe | EstimatorKind::GTAb);
            let has_beta = self.n2 > 0 || matches!(self.layout, Layout::DiscoveryDiscovery | Layout::Full);
            let has_target = self.n3 > 0 || self.layout == Layout::DiscoveryTarget;
            if (needs_beta && !has_beta) || (needs_target && !has_target) {
                return Err(Error::param(format!("estimator {k} needs a cohort this configuration lacks")));
            }
            if matches!(k, EstimatorKind::GTAe | EstimatorKind::GTAb) {
                if self.thresholds.is_empty() {
                    return Err(Error::param("screened estimators need a threshold list"));
                }
                for &c in &self.thresholds {
                    ScreenRule::PValue(c).validate()?;
                }
            }
        }
        if gwas_run && (self.held_out_nulls == 0 && estimators.iter().any(|k| matches!(k, EstimatorKind::NullEffect | EstimatorKind::NullEffectMsq))) {
            return Err(Error::param("null-effect estimators need held_out_nulls > 0"));
        }
        for point in self.points()? {
            point.arch.validate()?;
        }
        Ok(())
    }

    fn m_grid(&self) -> Result<Vec<usize>> {
        if self.sparsity.is_empty() {
            return Ok(vec![self.m]);
        }
        self.sparsity
            .iter()
            .map(|&a| {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::param(format!("sparsity {a} outside (0, 1]")));
                }
                Ok(((a * self.p as f64).round() as usize).max(1))
            })
            .collect()
    }

    /// Architecture of each grid point, in output order.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::new();
        let gwas_run = self.scenario == Scenario::Fig1GwasProperties;
        for m in self.m_grid()? {
            for &k in &self.k_ratio {
                for &phi in &self.phi {
                    let id = if gwas_run {
                        format!("m={m}")
                    } else {
                        format!("m={m};k={k};phi={phi}")
                    };
                    out.push(GridPoint { id, arch: self.architecture(m, k, phi)?, phi });
                }
            }
        }
        Ok(out)
    }

    fn architecture(&self, m: usize, k: f64, phi: f64) -> Result<TraitArchitecture> {
        if k.is_nan() || k <= 0.0 {
            return Err(Error::param(format!("k_ratio {k} must be positive")));
        }
        let m_other = ((k * m as f64).round() as usize).max(1);
        let shared = (self.overlap_fraction * m.min(m_other) as f64).round() as usize;
        let rho = if phi == 0.0 {
            0.0
        } else if shared == 0 {
            return Err(Error::param(format!("phi = {phi} needs shared causal SNPs")));
        } else {
            phi * ((m * m_other) as f64).sqrt() / shared as f64
        };
        if rho.abs() > 1.0 {
            return Err(Error::param(format!("phi = {phi} is unreachable with m = {m}, k = {k}")));
        }
        let p = self.p + if self.scenario == Scenario::Fig1GwasProperties { self.held_out_nulls } else { 0 };
        Ok(TraitArchitecture {
            p,
            m_alpha: m,
            m_beta: m_other,
            m_eta: m_other,
            m_alpha_beta: shared,
            m_alpha_eta: shared,
            sigma2_alpha: self.sigma2,
            sigma2_beta: self.sigma2,
            sigma2_eta: self.sigma2,
            rho_alpha_beta: rho,
            rho_alpha_eta: rho,
            h2_alpha: self.h2_alpha,
            h2_beta: self.h2_beta,
            h2_eta: self.h2_eta,
            distribution: DistributionSpec::Gaussian,
        })
    }

    fn design(&self) -> (CohortSizes, OverlapDesign) {
        let sizes = CohortSizes { n1: self.n1, n2: self.n2, n3: self.n3 };
        let pair = match self.layout {
            Layout::Independent => OverlapPair::Independent,
            Layout::DiscoveryTarget => OverlapPair::DiscoveryTarget,
            Layout::DiscoveryDiscovery | Layout::Full => OverlapPair::DiscoveryDiscovery,
        };
        (sizes, OverlapDesign { pair, n_shared: self.n_s, rho_eps: self.rho_eps })
    }
}

/// One point of the parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub id: String,
    pub arch: TraitArchitecture,
    pub phi: f64,
}

/// One estimate from one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRow {
    pub scenario: String,
    pub point_id: String,
    pub estimator: String,
    pub replicate: usize,
    pub raw: f64,
    /// Raw value divided by the bias factor. NaN when no correction applies.
    pub corrected: f64,
    pub factor: f64,
    /// Regime tag of the correction, or a marker for rows without one.
    pub flag: String,
}

/// A replicate that could not be completed.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub reason: String,
}

/// Order statistics and moments of one column. Non-finite values are skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`).
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    /// Summarizes `values` in the given order.
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let (mean, sd) = mean_sample_sd(&finite);
        let mut sorted = finite.clone();
        sorted.sort_by(f64::total_cmp);
        Summary {
            n: finite.len(),
            mean,
            sd,
            min: sorted.first().copied().unwrap_or(f64::NAN),
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Summary of all replicates of one (scenario, point, estimator) key.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub point_id: String,
    pub estimator: String,
    pub raw: Summary,
    pub corrected: Summary,
    pub factor: Summary,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AggregateResult {
    pub rows: Vec<AggregateRow>,
}

impl AggregateResult {
    pub fn get(&self, point_id: &str, estimator: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.point_id == point_id && r.estimator == estimator)
    }
}

/// Groups rows by (scenario, point, estimator) in lexicographic key order. Within a
/// group values are taken in replicate order, so the result does not depend on the
/// order of `rows`.
pub fn aggregate(rows: &[ReplicateRow]) -> AggregateResult {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&ReplicateRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.scenario, &r.point_id, &r.estimator)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((scenario, point_id, estimator), mut group)| {
            group.sort_by(|a, b| {
                a.replicate
                    .cmp(&b.replicate)
                    .then(a.raw.total_cmp(&b.raw))
                    .then(a.corrected.total_cmp(&b.corrected))
            });
            let col = |f: fn(&ReplicateRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
            AggregateRow {
                scenario: scenario.to_string(),
                point_id: point_id.to_string(),
                estimator: estimator.to_string(),
                raw: Summary::of(&col(|r| r.raw)),
                corrected: Summary::of(&col(|r| r.corrected)),
                factor: Summary::of(&col(|r| r.factor)),
            }
        })
        .collect();
    AggregateResult { rows }
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ReplicateRow>,
    pub aggregate: AggregateResult,
    pub failures: Vec<ReplicateFailure>,
}

/// Row marker for GWAS diagnostics, which carry no correction.
pub const FLAG_NONE: &str = "none";
/// Row marker for a screened score that selected no SNP.
pub const FLAG_EMPTY_SELECTION: &str = "empty_selection";
/// Row marker for a raw estimate whose bias factor is zero.
pub const FLAG_NO_CORRECTION: &str = "no_correction";

/// Runs a study. Results are written to `config.output` when it is set.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let points = config.points()?;
    let work = || -> Vec<std::result::Result<Vec<ReplicateRow>, ReplicateFailure>> {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                run_replicate(config, &points, r).map_err(|e| ReplicateFailure { replicate: r, reason: e.to_string() })
            })
            .collect()
    };
    let results = match config.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::param(format!("cannot start {k} workers: {e}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(r) => rows.extend(r),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() * 20 > config.replicates {
        return Err(Error::TooManyFailures { failed: failures.len(), total: config.replicates });
    }
    let point_rank: BTreeMap<&str, usize> = points.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let est_rank = |tag: &str| EstimatorKind::ALL.iter().position(|k| k.tag() == tag || k.row_tag(config.layout) == tag);
    rows.sort_by(|a, b| {
        let pa = point_rank.get(a.point_id.split(";c=").next().unwrap_or_default());
        let pb = point_rank.get(b.point_id.split(";c=").next().unwrap_or_default());
        pa.cmp(&pb)
            .then_with(|| est_rank(&a.estimator).cmp(&est_rank(&b.estimator)))
            .then_with(|| threshold_rank(config, &a.point_id).cmp(&threshold_rank(config, &b.point_id)))
            .then(a.replicate.cmp(&b.replicate))
    });
    let aggregate = aggregate(&rows);
    let out = ExperimentOutput { rows, aggregate, failures };
    if let Some(dir) = &config.output {
        crate::io::write_experiment(dir, config, &out)?;
    }
    Ok(out)
}

fn threshold_rank(config: &ExperimentConfig, point_id: &str) -> Option<usize> {
    let c = point_id.split(";c=").nth(1)?;
    config.thresholds.iter().position(|t| format!("{t}") == c)
}

/// Simulated genotypes of one replicate.
enum Genotypes {
    Bundle(Box<BundleGenotypes>),
    Single(GenotypeMatrix),
}

fn replicate_genotypes(config: &ExperimentConfig, seed: u64) -> Result<Genotypes> {
    if config.scenario == Scenario::Fig1GwasProperties {
        let p = config.p + config.held_out_nulls;
        return gen_genotypes(config.n1, p, seed).map(Genotypes::Single);
    }
    let (sizes, design) = config.design();
    gen_bundle_genotypes(config.p, sizes, design, seed).map(|b| Genotypes::Bundle(Box::new(b)))
}

fn run_replicate(config: &ExperimentConfig, points: &[GridPoint], r: usize) -> Result<Vec<ReplicateRow>> {
    let rep_seed = seed::derive(config.master_seed, "replicate", r as u64);
    let geno_seed = if config.reuse_genotypes {
        seed::derive(config.master_seed, "shared-genotypes", 0)
    } else {
        seed::derive(rep_seed, "genotypes", 0)
    };
    let genos = replicate_genotypes(config, geno_seed)?;
    let estimators = config.estimator_set();
    let mut rows = Vec::new();
    for (k, point) in points.iter().enumerate() {
        let point_seed = seed::derive(rep_seed, "point", k as u64);
        let mut emit = |point_id: String, estimator: &str, v: Value| {
            rows.push(ReplicateRow {
                scenario: config.scenario.tag().to_string(),
                point_id,
                estimator: estimator.to_string(),
                replicate: r,
                raw: v.raw,
                corrected: v.corrected,
                factor: v.factor,
                flag: v.flag,
            });
        };
        match &genos {
            Genotypes::Single(g) => gwas_point(config, point, g, point_seed, &estimators, &mut emit)?,
            Genotypes::Bundle(b) => prs_point(config, point, b, point_seed, &estimators, &mut emit)?,
        }
    }
    Ok(rows)
}

struct Value {
    raw: f64,
    corrected: f64,
    factor: f64,
    flag: String,
}

impl Value {
    fn plain(raw: f64) -> Self {
        Value { raw, corrected: raw, factor: 1.0, flag: FLAG_NONE.to_string() }
    }
}

fn gwas_point(
    config: &ExperimentConfig,
    point: &GridPoint,
    g: &GenotypeMatrix,
    seed: u64,
    estimators: &[EstimatorKind],
    emit: &mut impl FnMut(String, &str, Value),
) -> Result<()> {
    let arch = &point.arch;
    let effects = gen_effects(arch, &[], seed::derive(seed, "effects", 0))?;
    let pheno_seed = seed::derive(seed, "noise", 0);
    let pheno = match config.sigma2_eps {
        Some(s2) => gen_phenotype_noise_var(g, &effects.alpha, s2, pheno_seed)?,
        None => gen_phenotype(g, &effects.alpha, arch.h2_alpha, pheno_seed)?,
    };
    let stats = marginal_gwas(g, &pheno.values, GwasOptions::raw())?;
    let held = config.p..config.p + config.held_out_nulls;
    let metrics = estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::BetaMse | EstimatorKind::Auc | EstimatorKind::Power | EstimatorKind::Enrichment))
        .then(|| screen_metrics(&stats, &effects.alpha.values, 0.05, 0.1))
        .transpose()?;
    for &k in estimators {
        let v = match k {
            EstimatorKind::NullEffect => stats.effect[held.start],
            EstimatorKind::NullEffectMsq => {
                let sq: Vec<f64> = stats.effect[held.clone()].iter().map(|b| b * b).collect();
                crate::scalar::pairwise_sum(&sq) / sq.len() as f64
            }
            EstimatorKind::BetaMse => metrics.as_ref().map_or(f64::NAN, |m| m.beta_mse),
            EstimatorKind::Auc => metrics.as_ref().map_or(f64::NAN, |m| m.auc),
            EstimatorKind::Power => metrics.as_ref().map_or(f64::NAN, |m| m.power),
            EstimatorKind::Enrichment => metrics.as_ref().map_or(f64::NAN, |m| m.enrichment),
            other => return Err(Error::param(format!("{other} is not a GWAS diagnostic"))),
        };
        emit(point.id.clone(), k.tag(), Value::plain(v));
    }
    Ok(())
}

/// Correction metadata of an estimator at a grid point.
fn meta_for(config: &ExperimentConfig, arch: &TraitArchitecture, case: CaseTag) -> DesignMeta<f64> {
    let h = |t: Trait| {
        let h = arch.h_cross(t, config.rho_eps);
        if h.is_finite() && h > 0.0 { h.min(1.0) } else { 1.0 }
    };
    let full = config.layout == Layout::Full && matches!(case, CaseTag::CaseIii | CaseTag::CaseIv);
    DesignMeta {
        n1: if full { config.n_s } else { config.n1 },
        n2: config.n2,
        n3: config.n3,
        n_s: if full { 0 } else { config.n_s },
        h2_alpha: Some(config.h2_alpha),
        h2_beta: Some(config.h2_beta),
        h2_eta: Some(config.h2_eta),
        h_alpha_eta: Some(h(Trait::Eta)),
        h_alpha_beta: Some(h(Trait::Beta)),
        ..DesignMeta::new(case, arch.p)
    }
}

fn corrected(raw: f64, meta: &DesignMeta<f64>) -> Result<Value> {
    match correct(raw, meta) {
        Ok(est) => Ok(Value {
            raw,
            corrected: est.corrected,
            factor: est.bias_factor,
            flag: est.regime.tag().to_string(),
        }),
        Err(Error::Degenerate(_)) => Ok(Value {
            raw,
            corrected: f64::NAN,
            factor: 0.0,
            flag: FLAG_NO_CORRECTION.to_string(),
        }),
        Err(e) => Err(e),
    }
}

fn prs_point(
    config: &ExperimentConfig,
    point: &GridPoint,
    genos: &BundleGenotypes,
    seed: u64,
    estimators: &[EstimatorKind],
    emit: &mut impl FnMut(String, &str, Value),
) -> Result<()> {
    let arch = &point.arch;
    let ph = gen_bundle_phenotypes(genos, arch, seed)?;
    let opts = GwasOptions::default();
    let ga = &genos.alpha.genotypes;
    let stats_a = marginal_gwas(ga, &ph.alpha.values, opts)?;
    let stats_b = match (&genos.beta, &ph.beta) {
        (Some(g), Some(y)) => Some(marginal_gwas(&g.genotypes, &y.values, opts)?),
        _ => None,
    };
    let need = |what: &str| Error::param(format!("configuration lacks the {what} cohort"));
    let target = || genos.target.as_ref().map(|t| &t.genotypes).ok_or_else(|| need("target"));
    let y_eta = || ph.eta.as_ref().map(|y| y.values.as_slice()).ok_or_else(|| need("target"));
    let beta = || stats_b.as_ref().ok_or_else(|| need("beta"));
    let mut target_a: Option<Vec<f64>> = None;
    for &k in estimators {
        let case = k.case(config.layout).ok_or_else(|| Error::param(format!("{k} is undefined here")))?;
        let tag = k.row_tag(config.layout);
        let meta = meta_for(config, arch, case);
        match k {
            EstimatorKind::GAe => {
                let s = cached(&mut target_a, || score_weights(target()?, &stats_a.effect, None))?;
                emit(point.id.clone(), tag, corrected(raw_cosine(y_eta()?, s)?, &meta)?);
            }
            EstimatorKind::GAb => {
                let w = target()?;
                let sa = cached(&mut target_a, || score_weights(w, &stats_a.effect, None))?;
                let sb = score_weights(w, &beta()?.effect, None)?;
                emit(point.id.clone(), tag, corrected(raw_cosine(sa, &sb)?, &meta)?);
            }
            EstimatorKind::SummaryAb => {
                emit(point.id.clone(), tag, corrected(raw_cosine(&stats_a.effect, &beta()?.effect)?, &meta)?);
            }
            EstimatorKind::CaseIv | EstimatorKind::GXSplit => {
                let sa = score_weights(ga, &stats_a.effect, None)?;
                let sb = score_weights(ga, &beta()?.effect, None)?;
                emit(point.id.clone(), tag, corrected(raw_cosine(&sa, &sb)?, &meta)?);
            }
            EstimatorKind::GTAe | EstimatorKind::GTAb => {
                let w = target()?;
                let causal_a = arch.causal_set(Trait::Alpha);
                let causal_b = arch.causal_set(Trait::Beta);
                for &c in &config.thresholds {
                    let id = format!("{};c={c}", point.id);
                    let rule = ScreenRule::PValue(c);
                    let sel_a = threshold_select(&stats_a, rule, Some(&causal_a))?;
                    let screen_a = TraitScreen { q: sel_a.q(), q1: sel_a.q1()?, m: arch.m_alpha };
                    let v = if k == EstimatorKind::GTAe {
                        let ms = arch.m_shared(Trait::Eta);
                        let counts = ScreenCounts {
                            alpha: screen_a,
                            beta: None,
                            q_shared: sel_a.indices.partition_point(|&j| j < ms),
                            m_shared: ms,
                        };
                        screened_value(&meta, counts, || {
                            let s = score_weights(w, &stats_a.effect, Some(&sel_a.indices))?;
                            raw_cosine(y_eta()?, &s)
                        })?
                    } else {
                        let sb = beta()?;
                        let sel_b = threshold_select(sb, rule, Some(&causal_b))?;
                        let ms = arch.m_shared(Trait::Beta);
                        let shared: Vec<usize> = (0..ms).collect();
                        let counts = ScreenCounts {
                            alpha: screen_a,
                            beta: Some(TraitScreen { q: sel_b.q(), q1: sel_b.q1()?, m: arch.m_beta }),
                            q_shared: intersection_count(&[&sel_a.indices, &sel_b.indices, &shared]),
                            m_shared: ms,
                        };
                        screened_value(&meta, counts, || {
                            let sa = score_weights(w, &stats_a.effect, Some(&sel_a.indices))?;
                            let s_b = score_weights(w, &sb.effect, Some(&sel_b.indices))?;
                            raw_cosine(&sa, &s_b)
                        })?
                    };
                    emit(id, tag, v);
                }
            }
            other => return Err(Error::param(format!("{other} is a GWAS diagnostic"))),
        }
    }
    Ok(())
}

fn cached(slot: &mut Option<Vec<f64>>, f: impl FnOnce() -> Result<Vec<f64>>) -> Result<&Vec<f64>> {
    if slot.is_none() {
        *slot = Some(f()?);
    }
    Ok(slot.as_ref().expect("filled above"))
}

fn screened_value(meta: &DesignMeta<f64>, counts: ScreenCounts, raw: impl FnOnce() -> Result<f64>) -> Result<Value> {
    let empty = counts.alpha.q == 0 || counts.beta.is_some_and(|b| b.q == 0);
    if empty {
        return Ok(Value { raw: 0.0, corrected: f64::NAN, factor: 0.0, flag: FLAG_EMPTY_SELECTION.to_string() });
    }
    let meta = DesignMeta { screening: Some(counts), ..meta.clone() };
    corrected(raw()?, &meta)
}
