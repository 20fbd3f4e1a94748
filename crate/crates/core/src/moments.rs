//! Closed-form expectations of the quadratic forms behind each estimator, and
//! Monte Carlo checks of them.
//!
//! All quantities are unnormalized: scores are `W X^T y` rather than `W X^T y / n1`,
//! so expectations are polynomials in the sample sizes. Effects, noise and
//! genotypes are all random; expectations are over all of them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{CaseTag, DesignMeta, ScreenCounts, TraitScreen};
use crate::genotype::GenotypeMatrix;
use crate::gwas::intersection_count;
use crate::kernels::{score, xt_y, DEFAULT_COLUMN_BLOCK, DEFAULT_ROW_BLOCK};
use crate::scalar::{dot, mean_sample_sd, Scalar};
use crate::seed;
use crate::synth::{
    gen_overlapping_cohorts, CohortBundle, CohortSizes, OverlapDesign, OverlapPair, TraitArchitecture, Trait,
};

/// A quadratic form with a closed-form expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantityTag {
    /// `y_eta^T W X^T y_alpha`, independent cohorts.
    CovAeNum,
    /// `|y_eta|^2`.
    VarEtaDen,
    /// `|W X^T y_alpha|^2`.
    VarAlphaDen,
    /// `(W Z^T y_beta)^T W X^T y_alpha`.
    CovAbNum,
    /// `|W Z^T y_beta|^2`.
    VarBetaDen,
    /// `(Z^T y_beta)^T X^T y_alpha`.
    SummaryNum,
    /// `|X^T y_alpha|^2`.
    SummaryDenAlpha,
    /// `|Z^T y_beta|^2`.
    SummaryDenBeta,
    /// Screened `y_eta^T W_T X_T^T y_alpha`.
    ScreenedCovAe,
    /// Screened `|W_T X_T^T y_alpha|^2`.
    ScreenedVarAlpha,
    /// Screened `(W_T Z_T^T y_beta)^T W_T X_T^T y_alpha`.
    ScreenedCovAb,
    /// Screened `|W_T Z_T^T y_beta|^2`.
    ScreenedVarBeta,
    /// `y_eta^T S_alpha` when discovery and target share samples.
    OverlapCovAe,
    /// `|y_eta|^2` on a target cohort with shared samples.
    OverlapVarEta,
    /// `|S_alpha|^2` when discovery and target share samples.
    OverlapVarAlphaI,
    /// `|S_alpha|^2` on an independent target when the discovery cohorts overlap.
    OverlapVarAlphaII,
    /// `|S_beta|^2` on an independent target when the discovery cohorts overlap.
    OverlapVarBetaII,
    /// `S_beta^T S_alpha` on an independent target when the discovery cohorts overlap.
    OverlapCovAb,
    /// `(X^T y_beta)^T X^T y_alpha`, both traits on one cohort.
    FullSummaryNum,
    /// `|X X^T y_alpha|^2`.
    FullPrsVarAlpha,
    /// `(X X^T y_beta)^T X X^T y_alpha`, both traits on one cohort.
    FullPrsCov,
    /// `|X Z^T y_beta|^2`.
    SplitPrsVarBeta,
    /// `(X Z^T y_beta)^T X X^T y_alpha`.
    SplitPrsCov,
}

/// How the cohorts behind a quantity are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Independent,
    Screened,
    OverlapI,
    OverlapII,
    /// Both traits measured on a single cohort of `n1` samples.
    Full,
    /// Scores evaluated on the `alpha` discovery cohort.
    Split,
}

impl QuantityTag {
    pub const ALL: [QuantityTag; 23] = [
        QuantityTag::CovAeNum,
        QuantityTag::VarEtaDen,
        QuantityTag::VarAlphaDen,
        QuantityTag::CovAbNum,
        QuantityTag::VarBetaDen,
        QuantityTag::SummaryNum,
        QuantityTag::SummaryDenAlpha,
        QuantityTag::SummaryDenBeta,
        QuantityTag::ScreenedCovAe,
        QuantityTag::ScreenedVarAlpha,
        QuantityTag::ScreenedCovAb,
        QuantityTag::ScreenedVarBeta,
        QuantityTag::OverlapCovAe,
        QuantityTag::OverlapVarEta,
        QuantityTag::OverlapVarAlphaI,
        QuantityTag::OverlapVarAlphaII,
        QuantityTag::OverlapVarBetaII,
        QuantityTag::OverlapCovAb,
        QuantityTag::FullSummaryNum,
        QuantityTag::FullPrsVarAlpha,
        QuantityTag::FullPrsCov,
        QuantityTag::SplitPrsVarBeta,
        QuantityTag::SplitPrsCov,
    ];

    pub fn tag(self) -> &'static str {
        use QuantityTag::*;
        match self {
            CovAeNum => "cov_ae_num",
            VarEtaDen => "var_eta_den",
            VarAlphaDen => "var_alpha_den",
            CovAbNum => "cov_ab_num",
            VarBetaDen => "var_beta_den",
            SummaryNum => "summary_num",
            SummaryDenAlpha => "summary_den_alpha",
            SummaryDenBeta => "summary_den_beta",
            ScreenedCovAe => "screened_cov_ae",
            ScreenedVarAlpha => "screened_var_alpha",
            ScreenedCovAb => "screened_cov_ab",
            ScreenedVarBeta => "screened_var_beta",
            OverlapCovAe => "overlap_cov_ae",
            OverlapVarEta => "overlap_var_eta",
            OverlapVarAlphaI => "overlap_var_alpha_i",
            OverlapVarAlphaII => "overlap_var_alpha_ii",
            OverlapVarBetaII => "overlap_var_beta_ii",
            OverlapCovAb => "overlap_cov_ab",
            FullSummaryNum => "full_summary_num",
            FullPrsVarAlpha => "full_prs_var_alpha",
            FullPrsCov => "full_prs_cov",
            SplitPrsVarBeta => "split_prs_var_beta",
            SplitPrsCov => "split_prs_cov",
        }
    }

    pub fn family(self) -> Family {
        use QuantityTag::*;
        match self {
            CovAeNum | VarEtaDen | VarAlphaDen | CovAbNum | VarBetaDen | SummaryNum | SummaryDenAlpha
            | SummaryDenBeta => Family::Independent,
            ScreenedCovAe | ScreenedVarAlpha | ScreenedCovAb | ScreenedVarBeta => Family::Screened,
            OverlapCovAe | OverlapVarEta | OverlapVarAlphaI => Family::OverlapI,
            OverlapVarAlphaII | OverlapVarBetaII | OverlapCovAb => Family::OverlapII,
            FullSummaryNum | FullPrsVarAlpha | FullPrsCov => Family::Full,
            SplitPrsVarBeta | SplitPrsCov => Family::Split,
        }
    }

    /// The trait paired with `alpha` in this quantity.
    fn partner(self) -> Trait {
        use QuantityTag::*;
        match self {
            CovAeNum | VarEtaDen | ScreenedCovAe | OverlapCovAe | OverlapVarEta | OverlapVarAlphaI => Trait::Eta,
            _ => Trait::Beta,
        }
    }
}

impl fmt::Display for QuantityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for QuantityTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        QuantityTag::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::param(format!("unknown quantity tag '{s}'")))
    }
}

/// Expected value of a quantity, with a rough variance scale where one is known.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPrediction<T = f64> {
    pub tag: QuantityTag,
    pub expected: T,
    /// Order-of-magnitude variance scale. Not used for pass/fail decisions.
    pub variance_bound: Option<T>,
}

/// Architecture parameters converted to the working scalar.
struct Params<T> {
    m_a: T,
    m_b: T,
    m_e: T,
    m_ab: T,
    m_ae: T,
    s2_a: T,
    s2_b: T,
    s2_e: T,
    s_ab: T,
    s_ae: T,
    e2_a: T,
    e2_b: T,
    e2_e: T,
}

impl<T: Scalar> Params<T> {
    fn new(a: &TraitArchitecture) -> Self {
        Self {
            m_a: T::of_usize(a.m_alpha),
            m_b: T::of_usize(a.m_beta),
            m_e: T::of_usize(a.m_eta),
            m_ab: T::of_usize(a.m_alpha_beta),
            m_ae: T::of_usize(a.m_alpha_eta),
            s2_a: T::of(a.sigma2_alpha),
            s2_b: T::of(a.sigma2_beta),
            s2_e: T::of(a.sigma2_eta),
            s_ab: T::of(a.sigma_alpha(Trait::Beta)),
            s_ae: T::of(a.sigma_alpha(Trait::Eta)),
            e2_a: T::of(a.sigma2_eps(Trait::Alpha)),
            e2_b: T::of(a.sigma2_eps(Trait::Beta)),
            e2_e: T::of(a.sigma2_eps(Trait::Eta)),
        }
    }
}

/// Noise covariance implied by `h = m sigma / (m sigma + sigma_eps)`.
fn noise_cov<T: Scalar>(m: T, sigma: T, h: Option<T>, name: &'static str, case: &'static str) -> Result<T> {
    let h = h.ok_or(Error::MissingParameter { case, missing: vec![name] })?;
    if h <= T::zero() {
        return Err(Error::param(format!("{name} must be positive to recover the noise covariance")));
    }
    Ok(m * sigma * (T::one() / h - T::one()))
}

/// `{n m (n + m) + n m (p - m)} s2 + n p e2`, the expected `|X^T y|^2`.
fn summary_den<T: Scalar>(n: T, p: T, m: T, s2: T, e2: T) -> T {
    (n * m * (n + m) + n * m * (p - m)) * s2 + n * p * e2
}

fn screened_var<T: Scalar>(n: T, n3: T, m: T, s: TraitScreen, s2: T, e2: T) -> T {
    let q = T::of_usize(s.q);
    let q1 = T::of_usize(s.q1);
    let q2 = q - q1;
    (n * n3 * m * q2 + n * n3 * q1 * (m + n)) * s2 + n * n3 * q * e2
}

/// Evaluates the expectation of `tag`.
///
/// Sizes come from `meta` (`n1`, `n2`, `n3`, `n_s`, `p`). Overlap quantities recover
/// the noise covariance from `meta.h_alpha_eta` or `meta.h_alpha_beta`; screened
/// quantities read `meta.screening`. The `Full` family uses `meta.n1` as the size of
/// the single cohort.
pub fn predict<T: Scalar>(tag: QuantityTag, arch: &TraitArchitecture, meta: &DesignMeta<T>) -> Result<MomentPrediction<T>> {
    arch.validate()?;
    if meta.p != arch.p {
        return Err(Error::dim(format!("meta p = {} but architecture p = {}", meta.p, arch.p)));
    }
    let c = Params::<T>::new(arch);
    let n1 = T::of_usize(meta.n1);
    let n2 = T::of_usize(meta.n2);
    let n3 = T::of_usize(meta.n3);
    let ns = T::of_usize(meta.n_s);
    let p = T::of_usize(meta.p);
    let one = T::one();
    let two = one + one;
    let screening = || meta.screening.ok_or(Error::MissingParameter { case: tag.tag(), missing: vec!["screening"] });
    use QuantityTag::*;
    let (expected, variance_bound) = match tag {
        CovAeNum => {
            let a22 = c.s2_a * c.s2_e + two * c.s_ae * c.s_ae;
            let m = c.m_ae;
            let var = (n1 * n3 * m * m * p + two * n1 * n1 * n3 * m * m + two * n1 * n3 * n3 * m * m) * c.s_ae * c.s_ae
                + n1 * n1 * n3 * n3 * m * (a22 - c.s_ae * c.s_ae);
            (n1 * n3 * c.m_ae * c.s_ae, Some(var))
        }
        VarEtaDen => (n3 * (c.m_e * c.s2_e + c.e2_e), None),
        VarAlphaDen => (n3 * summary_den(n1, p, c.m_a, c.s2_a, c.e2_a), None),
        CovAbNum => {
            let var = n1 * n2 * n3 * c.m_ab * c.m_ab * p * p * c.s_ab * c.s_ab;
            (n1 * n2 * n3 * c.m_ab * c.s_ab, Some(var))
        }
        VarBetaDen => (n3 * summary_den(n2, p, c.m_b, c.s2_b, c.e2_b), None),
        SummaryNum => {
            let var = n1 * n2 * c.m_ab * c.m_ab * p * c.s_ab * c.s_ab;
            (n1 * n2 * c.m_ab * c.s_ab, Some(var))
        }
        SummaryDenAlpha => (summary_den(n1, p, c.m_a, c.s2_a, c.e2_a), None),
        SummaryDenBeta => (summary_den(n2, p, c.m_b, c.s2_b, c.e2_b), None),
        ScreenedCovAe => {
            let s = screening()?;
            let var = c.m_ae * c.m_ae * n1 * n3 * T::of_usize(s.alpha.q) * c.s_ae * c.s_ae;
            (n1 * n3 * T::of_usize(s.q_shared) * c.s_ae, Some(var))
        }
        ScreenedVarAlpha => (screened_var(n1, n3, c.m_a, screening()?.alpha, c.s2_a, c.e2_a), None),
        ScreenedCovAb => (n1 * n2 * n3 * T::of_usize(screening()?.q_shared) * c.s_ab, None),
        ScreenedVarBeta => {
            let b = screening()?
                .beta
                .ok_or(Error::MissingParameter { case: tag.tag(), missing: vec!["screening.beta"] })?;
            (screened_var(n2, n3, c.m_b, b, c.s2_b, c.e2_b), None)
        }
        OverlapCovAe => {
            let see = noise_cov(c.m_ae, c.s_ae, meta.h_alpha_eta, "h_alpha_eta", tag.tag())?;
            let e = ((n1 + ns) * (n3 + ns) + ns * p) * c.m_ae * c.s_ae + ns * p * see;
            (e, None)
        }
        OverlapVarEta => ((n3 + ns) * (c.m_e * c.s2_e + c.e2_e), None),
        OverlapVarAlphaI => {
            let (m, s2, e2) = (c.m_a, c.s2_a, c.e2_a);
            let target = n3 * summary_den(n1 + ns, p, m, s2, e2);
            let shared = ns * summary_den(n1, p, m, s2, e2)
                + two * n1 * ns * (ns + p) * m * s2
                + ns * m * (ns * ns + p * p + (one + two) * ns * p) * s2
                + ns * p * (ns + p) * e2;
            (target + shared, None)
        }
        OverlapVarAlphaII => (n3 * summary_den(n1 + ns, p, c.m_a, c.s2_a, c.e2_a), None),
        OverlapVarBetaII => (n3 * summary_den(n2 + ns, p, c.m_b, c.s2_b, c.e2_b), None),
        OverlapCovAb => {
            let sbb = noise_cov(c.m_ab, c.s_ab, meta.h_alpha_beta, "h_alpha_beta", tag.tag())?;
            let e = n3 * ((n1 + ns) * (n2 + ns) + ns * p) * c.m_ab * c.s_ab + n3 * ns * p * sbb;
            (e, None)
        }
        FullSummaryNum => {
            let sbb = noise_cov(c.m_ab, c.s_ab, meta.h_alpha_beta, "h_alpha_beta", tag.tag())?;
            (n1 * c.m_ab * (n1 + p) * c.s_ab + n1 * p * sbb, None)
        }
        FullPrsVarAlpha => {
            let k = (n1 + p) * (n1 + p) + n1 * p;
            (n1 * c.m_a * k * c.s2_a + n1 * p * (n1 + p) * c.e2_a, None)
        }
        FullPrsCov => {
            let sbb = noise_cov(c.m_ab, c.s_ab, meta.h_alpha_beta, "h_alpha_beta", tag.tag())?;
            let k = (n1 + p) * (n1 + p) + n1 * p;
            (n1 * c.m_ab * k * c.s_ab + n1 * p * (n1 + p) * sbb, None)
        }
        SplitPrsVarBeta => (n1 * n2 * c.m_b * (p + n2) * c.s2_b + n1 * n2 * p * c.e2_b, None),
        SplitPrsCov => (n1 * n2 * c.m_ab * (n1 + p) * c.s_ab, None),
    };
    if !expected.is_finite() {
        return Err(Error::param(format!("{tag} prediction is not finite")));
    }
    Ok(MomentPrediction { tag, expected, variance_bound })
}

/// A data-independent choice of SNPs for the screened quantities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedSelection {
    /// Sorted SNP indices used in the `alpha` score.
    pub alpha: Vec<usize>,
    /// Sorted SNP indices used in the `beta` score.
    pub beta: Vec<usize>,
}

impl FixedSelection {
    /// Takes the first `causal` causal SNPs and the first `null` non-causal SNPs of each
    /// discovery trait.
    pub fn leading(arch: &TraitArchitecture, causal: usize, null: usize) -> Self {
        let pick = |t: Trait| {
            let set = arch.causal_set(t);
            let mut sel: Vec<usize> = set.iter().copied().take(causal).collect();
            sel.extend((0..arch.p).filter(|j| set.binary_search(j).is_err()).take(null));
            sel.sort_unstable();
            sel
        };
        Self { alpha: pick(Trait::Alpha), beta: pick(Trait::Beta) }
    }

    /// Screening counts of this selection against the architecture, for the pairing of
    /// `alpha` with `partner`.
    pub fn counts(&self, arch: &TraitArchitecture, partner: Trait) -> ScreenCounts {
        let trait_screen = |sel: &[usize], t: Trait| {
            let set = arch.causal_set(t);
            TraitScreen { q: sel.len(), q1: intersection_count(&[sel, &set]), m: set.len() }
        };
        let shared: Vec<usize> = (0..arch.m_shared(partner)).collect();
        let q_shared = match partner {
            Trait::Beta => intersection_count(&[&self.alpha, &self.beta, &shared]),
            _ => intersection_count(&[&self.alpha, &shared]),
        };
        ScreenCounts {
            alpha: trait_screen(&self.alpha, Trait::Alpha),
            beta: Some(trait_screen(&self.beta, Trait::Beta)),
            q_shared,
            m_shared: arch.m_shared(partner),
        }
    }
}

/// Simulation settings for [`monte_carlo_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentConfig {
    pub arch: TraitArchitecture,
    /// Private sizes. The `Full` family uses `n1` as its single cohort.
    pub sizes: CohortSizes,
    pub n_shared: usize,
    pub rho_eps: f64,
    pub selection: Option<FixedSelection>,
    /// Largest |z| that passes.
    pub z_threshold: f64,
}

impl MomentConfig {
    /// The design metadata that [`predict`] needs for `tag` under this configuration.
    pub fn meta_for(&self, tag: QuantityTag) -> DesignMeta<f64> {
        let a = &self.arch;
        let family = tag.family();
        let ns = match family {
            Family::OverlapI | Family::OverlapII => self.n_shared,
            _ => 0,
        };
        let rho = match family {
            Family::OverlapI | Family::OverlapII | Family::Full => self.rho_eps,
            _ => 0.0,
        };
        let h = |t: Trait| {
            let h = a.h_cross(t, rho);
            if h.is_finite() { h } else { 1.0 }
        };
        DesignMeta {
            n1: self.sizes.n1,
            n2: self.sizes.n2,
            n3: self.sizes.n3,
            n_s: ns,
            h2_alpha: Some(a.h2_alpha),
            h2_beta: Some(a.h2_beta),
            h2_eta: Some(a.h2_eta),
            h_alpha_eta: Some(h(Trait::Eta)),
            h_alpha_beta: Some(h(Trait::Beta)),
            screening: self.selection.as_ref().map(|s| s.counts(a, tag.partner())),
            ..DesignMeta::new(CaseTag::IndepAe, a.p)
        }
    }

    fn design(&self, family: Family) -> (CohortSizes, OverlapDesign) {
        let s = self.sizes;
        match family {
            Family::Independent | Family::Screened => (s, OverlapDesign::independent()),
            Family::Split => (CohortSizes { n3: 0, ..s }, OverlapDesign::independent()),
            Family::OverlapI => (
                CohortSizes { n2: 0, ..s },
                OverlapDesign { pair: OverlapPair::DiscoveryTarget, n_shared: self.n_shared, rho_eps: self.rho_eps },
            ),
            Family::OverlapII => (
                s,
                OverlapDesign { pair: OverlapPair::DiscoveryDiscovery, n_shared: self.n_shared, rho_eps: self.rho_eps },
            ),
            Family::Full => (
                CohortSizes::default(),
                OverlapDesign { pair: OverlapPair::DiscoveryDiscovery, n_shared: s.n1, rho_eps: self.rho_eps },
            ),
        }
    }
}

/// Outcome of a Monte Carlo comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub tag: QuantityTag,
    pub predicted: f64,
    pub empirical_mean: f64,
    pub empirical_se: f64,
    pub z: f64,
    pub replicates: usize,
    pub pass: bool,
}

fn unnormalized_effects(g: &GenotypeMatrix, y: &[f64]) -> Vec<f64> {
    xt_y(g, y, DEFAULT_COLUMN_BLOCK)
}

fn scores(g: &GenotypeMatrix, w: &[f64], sel: Option<&[usize]>) -> Vec<f64> {
    score(g, w, sel, DEFAULT_ROW_BLOCK)
}

fn missing(what: &str) -> Error {
    Error::param(format!("configuration lacks the {what} cohort"))
}

/// Value of `tag` on one simulated replicate.
fn realize(tag: QuantityTag, b: &CohortBundle, sel: Option<&FixedSelection>) -> Result<f64> {
    use QuantityTag::*;
    let ga = &b.genotypes.alpha.genotypes;
    let ya = &b.phenotypes.alpha.values;
    let beta = || -> Result<(&GenotypeMatrix, &[f64])> {
        let g = b.genotypes.beta.as_ref().ok_or_else(|| missing("beta"))?;
        let y = b.phenotypes.beta.as_ref().ok_or_else(|| missing("beta"))?;
        Ok((&g.genotypes, &y.values))
    };
    let target = || -> Result<&GenotypeMatrix> {
        Ok(&b.genotypes.target.as_ref().ok_or_else(|| missing("target"))?.genotypes)
    };
    let y_eta = || -> Result<&[f64]> { Ok(&b.phenotypes.eta.as_ref().ok_or_else(|| missing("target"))?.values) };
    let sel_a = sel.map(|s| s.alpha.as_slice());
    let sel_b = sel.map(|s| s.beta.as_slice());
    let v = match tag {
        CovAeNum | ScreenedCovAe | OverlapCovAe => {
            let s = scores(target()?, &unnormalized_effects(ga, ya), sel_a);
            dot(y_eta()?, &s)
        }
        VarEtaDen | OverlapVarEta => {
            let y = y_eta()?;
            dot(y, y)
        }
        VarAlphaDen | ScreenedVarAlpha | OverlapVarAlphaI | OverlapVarAlphaII => {
            let s = scores(target()?, &unnormalized_effects(ga, ya), sel_a);
            dot(&s, &s)
        }
        VarBetaDen | ScreenedVarBeta | OverlapVarBetaII => {
            let (gb, yb) = beta()?;
            let s = scores(target()?, &unnormalized_effects(gb, yb), sel_b);
            dot(&s, &s)
        }
        CovAbNum | ScreenedCovAb | OverlapCovAb => {
            let (gb, yb) = beta()?;
            let w = target()?;
            let sa = scores(w, &unnormalized_effects(ga, ya), sel_a);
            let sb = scores(w, &unnormalized_effects(gb, yb), sel_b);
            dot(&sa, &sb)
        }
        SummaryNum => {
            let (gb, yb) = beta()?;
            dot(&unnormalized_effects(ga, ya), &unnormalized_effects(gb, yb))
        }
        SummaryDenAlpha => {
            let a = unnormalized_effects(ga, ya);
            dot(&a, &a)
        }
        SummaryDenBeta => {
            let (gb, yb) = beta()?;
            let e = unnormalized_effects(gb, yb);
            dot(&e, &e)
        }
        FullSummaryNum => {
            let (_, yb) = beta()?;
            dot(&unnormalized_effects(ga, ya), &unnormalized_effects(ga, yb))
        }
        FullPrsVarAlpha => {
            let s = scores(ga, &unnormalized_effects(ga, ya), None);
            dot(&s, &s)
        }
        FullPrsCov => {
            let (_, yb) = beta()?;
            let sa = scores(ga, &unnormalized_effects(ga, ya), None);
            let sb = scores(ga, &unnormalized_effects(ga, yb), None);
            dot(&sa, &sb)
        }
        SplitPrsVarBeta => {
            let (gb, yb) = beta()?;
            let s = scores(ga, &unnormalized_effects(gb, yb), None);
            dot(&s, &s)
        }
        SplitPrsCov => {
            let (gb, yb) = beta()?;
            let sa = scores(ga, &unnormalized_effects(ga, ya), None);
            let sb = scores(ga, &unnormalized_effects(gb, yb), None);
            dot(&sa, &sb)
        }
    };
    Ok(v)
}

/// Simulates `replicates` independent draws of `tag` and compares their mean with
/// [`predict`].
pub fn monte_carlo_check(tag: QuantityTag, cfg: &MomentConfig, replicates: usize, seed: u64) -> Result<MomentReport> {
    if replicates < 30 {
        return Err(Error::param(format!("need at least 30 replicates, got {replicates}")));
    }
    if tag.family() == Family::Screened && cfg.selection.is_none() {
        return Err(Error::param(format!("{tag} needs a fixed selection")));
    }
    let predicted = predict(tag, &cfg.arch, &cfg.meta_for(tag))?.expected;
    let (sizes, design) = cfg.design(tag.family());
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let bundle = gen_overlapping_cohorts(&cfg.arch, sizes, design, seed::derive(seed, "moment-replicate", r as u64))?;
            let sel = if tag.family() == Family::Screened { cfg.selection.as_ref() } else { None };
            realize(tag, &bundle, sel)
        })
        .collect::<Result<_>>()?;
    let (mean, sd) = mean_sample_sd(&values);
    let se = sd / (replicates as f64).sqrt();
    let z = if se > 0.0 {
        (mean - predicted) / se
    } else if mean == predicted {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MomentReport {
        tag,
        predicted,
        empirical_mean: mean,
        empirical_se: se,
        z,
        replicates,
        pass: z.abs() < cfg.z_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> TraitArchitecture {
        TraitArchitecture::shared(1000, 200, 1.0, 0.9, 1.0)
    }

    fn meta(n1: usize, n2: usize, n3: usize) -> DesignMeta<f64> {
        DesignMeta { n1, n2, n3, ..DesignMeta::new(CaseTag::IndepAe, 1000) }
    }

    #[test]
    fn hand_evaluations() {
        let e = predict(QuantityTag::CovAeNum, &arch(), &meta(500, 0, 500)).unwrap().expected;
        assert!((e - 4.5e7).abs() < 1e-3);
        let e = predict(QuantityTag::VarAlphaDen, &arch(), &meta(500, 0, 500)).unwrap().expected;
        assert!((e - 7.5e10).abs() < 1e-2);
        let mut a = arch();
        a.rho_alpha_eta = 0.0;
        assert_eq!(predict(QuantityTag::CovAeNum, &a, &meta(500, 0, 500)).unwrap().expected, 0.0);
    }

    #[test]
    fn screened_forms_reduce_at_full_selection() {
        let a = TraitArchitecture { h2_alpha: 0.5, h2_beta: 0.7, ..arch() };
        let all = FixedSelection { alpha: (0..1000).collect(), beta: (0..1000).collect() };
        for (screened, plain, partner) in [
            (QuantityTag::ScreenedCovAe, QuantityTag::CovAeNum, Trait::Eta),
            (QuantityTag::ScreenedVarAlpha, QuantityTag::VarAlphaDen, Trait::Eta),
            (QuantityTag::ScreenedCovAb, QuantityTag::CovAbNum, Trait::Beta),
            (QuantityTag::ScreenedVarBeta, QuantityTag::VarBetaDen, Trait::Beta),
        ] {
            let m = DesignMeta { screening: Some(all.counts(&a, partner)), ..meta(400, 300, 200) };
            let x = predict(screened, &a, &m).unwrap().expected;
            let y = predict(plain, &a, &m).unwrap().expected;
            assert!(((x - y) / y).abs() <= 1e-12, "{screened}");
        }
    }

    #[test]
    fn overlap_forms_reduce_without_shared_samples() {
        let a = TraitArchitecture { h2_alpha: 0.5, h2_eta: 0.6, h2_beta: 0.8, ..arch() };
        let m = DesignMeta { h_alpha_eta: Some(1.0), h_alpha_beta: Some(1.0), ..meta(400, 300, 200) };
        for (overlap, plain) in [
            (QuantityTag::OverlapCovAe, QuantityTag::CovAeNum),
            (QuantityTag::OverlapVarEta, QuantityTag::VarEtaDen),
            (QuantityTag::OverlapVarAlphaI, QuantityTag::VarAlphaDen),
            (QuantityTag::OverlapVarAlphaII, QuantityTag::VarAlphaDen),
            (QuantityTag::OverlapVarBetaII, QuantityTag::VarBetaDen),
            (QuantityTag::OverlapCovAb, QuantityTag::CovAbNum),
        ] {
            let x = predict(overlap, &a, &m).unwrap().expected;
            let y = predict(plain, &a, &m).unwrap().expected;
            assert!(((x - y) / y).abs() <= 1e-12, "{overlap}");
        }
    }

    #[test]
    fn tags_round_trip() {
        for t in QuantityTag::ALL {
            assert_eq!(t.tag().parse::<QuantityTag>().unwrap(), t);
        }
        assert!("nope".parse::<QuantityTag>().is_err());
    }

    #[test]
    fn screened_quantities_require_counts() {
        assert!(predict(QuantityTag::ScreenedCovAe, &arch(), &meta(10, 10, 10)).is_err());
    }

    #[test]
    fn leading_selection_counts() {
        let a = TraitArchitecture { m_alpha_beta: 100, ..arch() };
        let sel = FixedSelection::leading(&a, 150, 50);
        let c = sel.counts(&a, Trait::Beta);
        assert_eq!(c.alpha.q, 200);
        assert_eq!(c.alpha.q1, 150);
        assert_eq!(c.q_shared, 100);
    }
}
