//! Raw genetic-correlation estimators, their asymptotic bias factors and the
//! corresponding corrections.
//!
//! The closed forms live in [`formula`] and take plain numbers. The functions at the
//! top level read their inputs from a [`DesignMeta`] and report missing parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Which estimator and sampling design a correction refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// Target phenotype against a score, independent cohorts.
    IndepAe,
    /// Two scores on an independent target cohort.
    IndepAb,
    /// Cosine of two summary-statistic vectors from independent cohorts.
    SummaryAb,
    /// As `IndepAe` with a screened score.
    ScreenedAe,
    /// As `IndepAb` with screened scores.
    ScreenedAb,
    /// Discovery and target cohorts share samples.
    OverlapCaseI,
    /// The two discovery cohorts share samples.
    OverlapCaseII,
    /// Summary-statistic cosine, both traits measured on one cohort.
    CaseIii,
    /// Two scores evaluated on the single discovery cohort of both traits.
    CaseIv,
    /// Two scores evaluated on the discovery cohort of the first trait.
    CaseV,
}

impl CaseTag {
    pub const ALL: [CaseTag; 10] = [
        CaseTag::IndepAe,
        CaseTag::IndepAb,
        CaseTag::SummaryAb,
        CaseTag::ScreenedAe,
        CaseTag::ScreenedAb,
        CaseTag::OverlapCaseI,
        CaseTag::OverlapCaseII,
        CaseTag::CaseIii,
        CaseTag::CaseIv,
        CaseTag::CaseV,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            CaseTag::IndepAe => "indep_ae",
            CaseTag::IndepAb => "indep_ab",
            CaseTag::SummaryAb => "summary_ab",
            CaseTag::ScreenedAe => "screened_ae",
            CaseTag::ScreenedAb => "screened_ab",
            CaseTag::OverlapCaseI => "overlap_case_i",
            CaseTag::OverlapCaseII => "overlap_case_ii",
            CaseTag::CaseIii => "case_iii",
            CaseTag::CaseIv => "case_iv",
            CaseTag::CaseV => "case_v",
        }
    }

    /// Parameters a correction for this case cannot do without.
    pub fn required(self) -> &'static [&'static str] {
        match self {
            CaseTag::IndepAe => &["n1", "p", "h2_alpha", "h2_eta"],
            CaseTag::IndepAb | CaseTag::SummaryAb => &["n1", "n2", "p", "h2_alpha", "h2_beta"],
            CaseTag::ScreenedAe => &["n1", "h2_alpha", "h2_eta", "screening"],
            CaseTag::ScreenedAb => &["n1", "n2", "h2_alpha", "h2_beta", "screening"],
            CaseTag::OverlapCaseI => &["n1", "n3", "n_s", "p", "h2_alpha", "h2_eta", "h_alpha_eta"],
            CaseTag::OverlapCaseII => &["n1", "n2", "n_s", "p", "h2_alpha", "h2_beta", "h_alpha_beta"],
            CaseTag::CaseIii | CaseTag::CaseIv => &["n1", "p", "h2_alpha", "h2_beta", "h_alpha_beta"],
            CaseTag::CaseV => &["n1", "n2", "p", "h2_alpha", "h2_beta"],
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CaseTag {
    type Err = Error;

    /// Accepts the canonical tags and the short command-line spellings.
    fn from_str(s: &str) -> Result<Self> {
        let t = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "indep_ae" | "ae" => CaseTag::IndepAe,
            "indep_ab" | "ab" => CaseTag::IndepAb,
            "summary_ab" => CaseTag::SummaryAb,
            "screened_ae" => CaseTag::ScreenedAe,
            "screened_ab" => CaseTag::ScreenedAb,
            "overlap_case_i" | "overlap_i" => CaseTag::OverlapCaseI,
            "overlap_case_ii" | "overlap_ii" => CaseTag::OverlapCaseII,
            "case_iii" | "iii" => CaseTag::CaseIii,
            "case_iv" | "iv" => CaseTag::CaseIv,
            "case_v" | "v" => CaseTag::CaseV,
            other => return Err(Error::param(format!("unknown case tag '{other}'"))),
        };
        Ok(t)
    }
}

/// Selected and causal counts of one trait's screened score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraitScreen {
    /// Selected SNPs.
    pub q: usize,
    /// Selected causal SNPs.
    pub q1: usize,
    /// Causal SNPs.
    pub m: usize,
}

/// Screening bookkeeping for the screened cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScreenCounts {
    pub alpha: TraitScreen,
    /// Present for `ScreenedAb`.
    pub beta: Option<TraitScreen>,
    /// Selected SNPs that are causal for both traits (and selected for both scores).
    pub q_shared: usize,
    /// Causal SNPs shared by the two traits.
    pub m_shared: usize,
}

/// Sample sizes, heritabilities and case of an estimate.
///
/// `n1`, `n2` and `n3` count private samples of the `alpha` discovery, `beta`
/// discovery and target cohorts; `n_s` counts the shared samples. For cases iii and
/// iv, `n1` is the size of the single cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMeta<T = f64> {
    pub case: CaseTag,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n_s: usize,
    pub p: usize,
    pub h2_alpha: Option<T>,
    pub h2_beta: Option<T>,
    pub h2_eta: Option<T>,
    pub h_alpha_eta: Option<T>,
    pub h_alpha_beta: Option<T>,
    pub screening: Option<ScreenCounts>,
}

impl<T: Scalar> DesignMeta<T> {
    /// Metadata with all sizes zero and no heritabilities.
    pub fn new(case: CaseTag, p: usize) -> Self {
        Self {
            case,
            n1: 0,
            n2: 0,
            n3: 0,
            n_s: 0,
            p,
            h2_alpha: None,
            h2_beta: None,
            h2_eta: None,
            h_alpha_eta: None,
            h_alpha_beta: None,
            screening: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::param("p must be positive"));
        }
        let missing: Vec<&'static str> = self
            .case
            .required()
            .iter()
            .copied()
            .filter(|name| match *name {
                "n1" => self.n1 == 0,
                "n2" => self.n2 == 0,
                "n3" => self.n3 == 0,
                "p" => false,
                "n_s" => false,
                "h2_alpha" => self.h2_alpha.is_none(),
                "h2_beta" => self.h2_beta.is_none(),
                "h2_eta" => self.h2_eta.is_none(),
                "h_alpha_eta" => self.h_alpha_eta.is_none(),
                "h_alpha_beta" => self.h_alpha_beta.is_none(),
                "screening" => self.screening.is_none(),
                _ => false,
            })
            .collect();
        // Overlap cases may have no private samples when the shared block is everything.
        let missing: Vec<&'static str> = missing
            .into_iter()
            .filter(|name| {
                !(matches!(self.case, CaseTag::OverlapCaseI | CaseTag::OverlapCaseII)
                    && matches!(*name, "n1" | "n2" | "n3")
                    && self.n_s > 0)
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingParameter { case: self.case.tag(), missing });
        }
        for (name, v) in [
            ("h2_alpha", self.h2_alpha),
            ("h2_beta", self.h2_beta),
            ("h2_eta", self.h2_eta),
            ("h_alpha_eta", self.h_alpha_eta),
            ("h_alpha_beta", self.h_alpha_beta),
        ] {
            if let Some(v) = v {
                if !(v >= T::zero() && v <= T::one()) {
                    return Err(Error::param(format!("{name} = {v} must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Whether the design sits in the regime where the raw estimator tracks the true
/// correlation, judged by a finite-sample surrogate of the asymptotic condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegimeFlag {
    Consistent,
    Degenerate,
}

impl RegimeFlag {
    pub fn tag(self) -> &'static str {
        match self {
            RegimeFlag::Consistent => "consistent_regime",
            RegimeFlag::Degenerate => "degenerate_regime",
        }
    }
}

/// Multiplier applied to the sample-size product before comparing with the
/// dimension. A design is flagged when `p^k >= scale * product`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeThresholds {
    pub scale: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

/// A raw estimate together with its correction.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationEstimate<T = f64> {
    pub raw: T,
    pub bias_factor: T,
    pub corrected: T,
    pub regime: RegimeFlag,
    /// Set when `|corrected| > 1`. The corrected value is never clamped.
    pub out_of_range: bool,
    pub meta: DesignMeta<T>,
}

/// Uncentered cosine `u.v / (|u| |v|)`.
pub fn raw_cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::dim(format!("cosine of vectors of length {} and {}", u.len(), v.len())));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if !(nu > T::zero() && nv > T::zero()) {
        return Err(Error::degenerate("cosine of a zero-norm vector (empty score?)"));
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Closed-form bias factors.
pub mod formula {
    use crate::scalar::Scalar;

    fn c<T: Scalar>(x: usize) -> T {
        T::of_usize(x)
    }

    /// `sqrt(n1 / (n1 + p / h2a)) * h_eta`.
    pub fn ae<T: Scalar>(n1: usize, p: usize, h2a: T, h2e: T) -> T {
        (c::<T>(n1) / (c::<T>(n1) + c::<T>(p) / h2a)).sqrt() * h2e.sqrt()
    }

    /// `sqrt(n1 / (n1 + p / h2a) * n2 / (n2 + p / h2b))`.
    pub fn ab<T: Scalar>(n1: usize, n2: usize, p: usize, h2a: T, h2b: T) -> T {
        let a = c::<T>(n1) / (c::<T>(n1) + c::<T>(p) / h2a);
        let b = c::<T>(n2) / (c::<T>(n2) + c::<T>(p) / h2b);
        (a * b).sqrt()
    }

    fn screened_part<T: Scalar>(n: usize, q: usize, q1: usize, m: usize, h2: T) -> T {
        let num = c::<T>(n) * c::<T>(m);
        num / (c::<T>(n) * c::<T>(q1) + c::<T>(m) * c::<T>(q) / h2)
    }

    /// `sqrt(n1 m / (n1 q1 + m q / h2a)) * (q_shared / m_shared) * h_eta`.
    #[allow(clippy::too_many_arguments)]
    pub fn screened_ae<T: Scalar>(
        n1: usize,
        q: usize,
        q1: usize,
        m: usize,
        q_shared: usize,
        m_shared: usize,
        h2a: T,
        h2e: T,
    ) -> T {
        if q == 0 {
            return T::zero();
        }
        screened_part(n1, q, q1, m, h2a).sqrt() * (c::<T>(q_shared) / c::<T>(m_shared)) * h2e.sqrt()
    }

    /// Screened factor when exactly the causal SNPs are selected.
    pub fn screened_ae_optimistic<T: Scalar>(n1: usize, m: usize, h2a: T, h2e: T) -> T {
        ae(n1, m, h2a, h2e)
    }

    /// Screened factor when causal and null SNPs are indistinguishable:
    /// `sqrt(n1 q / (n1 p + p^2 / h2a)) * h_eta`.
    pub fn screened_ae_mixed<T: Scalar>(n1: usize, p: usize, q: usize, h2a: T, h2e: T) -> T {
        let (n1, p, q) = (c::<T>(n1), c::<T>(p), c::<T>(q));
        (n1 * q / (n1 * p + p * p / h2a)).sqrt() * h2e.sqrt()
    }

    /// Product of the two per-trait screened terms times `q_shared / m_shared`.
    #[allow(clippy::too_many_arguments)]
    pub fn screened_ab<T: Scalar>(
        n1: usize,
        n2: usize,
        a: (usize, usize, usize),
        b: (usize, usize, usize),
        q_shared: usize,
        m_shared: usize,
        h2a: T,
        h2b: T,
    ) -> T {
        if a.0 == 0 || b.0 == 0 {
            return T::zero();
        }
        let pa = screened_part(n1, a.0, a.1, a.2, h2a);
        let pb = screened_part(n2, b.0, b.1, b.2, h2b);
        (pa * pb).sqrt() * (c::<T>(q_shared) / c::<T>(m_shared))
    }

    /// Screened factor when exactly the causal SNPs of each trait are selected.
    pub fn screened_ab_optimistic<T: Scalar>(n1: usize, n2: usize, ma: usize, mb: usize, h2a: T, h2b: T) -> T {
        let a = c::<T>(n1) / (c::<T>(n1) + c::<T>(ma) / h2a);
        let b = c::<T>(n2) / (c::<T>(n2) + c::<T>(mb) / h2b);
        (a * b).sqrt()
    }

    /// Screened factor when causal and null SNPs are indistinguishable for both traits.
    pub fn screened_ab_mixed<T: Scalar>(n1: usize, n2: usize, p: usize, qa: usize, qb: usize, h2a: T, h2b: T) -> T {
        let (n1, n2, p) = (c::<T>(n1), c::<T>(n2), c::<T>(p));
        let a = n1 / (n1 * p + p * p / h2a);
        let b = n2 / (n2 * p + p * p / h2b);
        (a * b * c::<T>(qa) * c::<T>(qb)).sqrt()
    }

    /// Discovery and target cohorts share `ns` samples.
    #[allow(clippy::too_many_arguments)]
    pub fn overlap_case_i<T: Scalar>(n1: usize, n3: usize, ns: usize, p: usize, h2a: T, h2e: T, hae: T) -> T {
        let big1 = c::<T>(n1 + ns);
        let big3 = c::<T>(n3 + ns);
        let (ns, p) = (c::<T>(ns), c::<T>(p));
        let one = T::one();
        let two = one + one;
        let num = (one + ns * p / (big1 * big3 * hae)) * h2e.sqrt();
        let den = one + p / (big1 * h2a) + two * ns * p / (big1 * big3) + ns * p * p / (big1 * big1 * big3 * h2a);
        num / den.sqrt()
    }

    /// The two discovery cohorts share `ns` samples.
    #[allow(clippy::too_many_arguments)]
    pub fn overlap_case_ii<T: Scalar>(n1: usize, n2: usize, ns: usize, p: usize, h2a: T, h2b: T, hab: T) -> T {
        let big1 = c::<T>(n1 + ns);
        let big2 = c::<T>(n2 + ns);
        let root = (big1 * big2).sqrt();
        let (ns, p) = (c::<T>(ns), c::<T>(p));
        let num = root + ns * p / (root * hab);
        num / ((big1 + p / h2a) * (big2 + p / h2b)).sqrt()
    }

    /// Summary-statistic cosine with both traits measured on the same `n1` samples.
    pub fn case_iii<T: Scalar>(n1: usize, p: usize, h2a: T, h2b: T, hab: T) -> T {
        let (n1, p) = (c::<T>(n1), c::<T>(p));
        (n1 + p / hab) / ((n1 + p / h2a) * (n1 + p / h2b)).sqrt()
    }

    /// Two scores evaluated on the single discovery cohort of both traits.
    pub fn case_iv<T: Scalar>(n1: usize, p: usize, h2a: T, h2b: T, hab: T) -> T {
        let (n1, p) = (c::<T>(n1), c::<T>(p));
        let two = T::one() + T::one();
        let base = n1 * n1 + two * n1 * p;
        let tail = p * (n1 + p);
        (base + tail / hab) / ((base + tail / h2a) * (base + tail / h2b)).sqrt()
    }

    /// Two scores evaluated on the `n1` discovery samples of the first trait.
    pub fn case_v<T: Scalar>(n1: usize, n2: usize, p: usize, h2a: T, h2b: T) -> T {
        let (n1, n2, p) = (c::<T>(n1), c::<T>(n2), c::<T>(p));
        let two = T::one() + T::one();
        let den_a = n1 * n1 + two * n1 * p + p * (n1 + p) / h2a;
        (n1 + p) * n2.sqrt() / (den_a.sqrt() * (n2 + p / h2b).sqrt())
    }
}

fn get<T: Scalar>(v: Option<T>) -> T {
    v.expect("checked by DesignMeta::check")
}

fn screen_of<T: Scalar>(meta: &DesignMeta<T>) -> Result<ScreenCounts> {
    let s = meta.screening.ok_or(Error::MissingParameter { case: meta.case.tag(), missing: vec!["screening"] })?;
    if s.m_shared == 0 {
        return Err(Error::param("screened factor needs at least one shared causal SNP"));
    }
    Ok(s)
}

/// Factor for a target phenotype against an all-SNP score.
pub fn bias_factor_ae<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    Ok(formula::ae(meta.n1, meta.p, get(meta.h2_alpha), get(meta.h2_eta)))
}

/// Factor for two all-SNP scores on an independent target cohort.
pub fn bias_factor_ab<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    Ok(formula::ab(meta.n1, meta.n2, meta.p, get(meta.h2_alpha), get(meta.h2_beta)))
}

/// Factor for the cosine of two summary-statistic vectors. Same closed form as
/// [`bias_factor_ab`]; the regime condition differs.
pub fn bias_factor_summary_ab<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    Ok(formula::ab(meta.n1, meta.n2, meta.p, get(meta.h2_alpha), get(meta.h2_beta)))
}

/// Factor for a target phenotype against a screened score.
pub fn screened_factor_ae<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    let s = screen_of(meta)?;
    let a = s.alpha;
    Ok(formula::screened_ae(meta.n1, a.q, a.q1, a.m, s.q_shared, s.m_shared, get(meta.h2_alpha), get(meta.h2_eta)))
}

/// Factor for two screened scores.
pub fn screened_factor_ab<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    let s = screen_of(meta)?;
    let b = s.beta.ok_or(Error::MissingParameter { case: meta.case.tag(), missing: vec!["screening.beta"] })?;
    let a = s.alpha;
    Ok(formula::screened_ab(
        meta.n1,
        meta.n2,
        (a.q, a.q1, a.m),
        (b.q, b.q1, b.m),
        s.q_shared,
        s.m_shared,
        get(meta.h2_alpha),
        get(meta.h2_beta),
    ))
}

/// Factor when the discovery and target cohorts overlap.
pub fn overlap_factor_case_i<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    Ok(formula::overlap_case_i(
        meta.n1,
        meta.n3,
        meta.n_s,
        meta.p,
        get(meta.h2_alpha),
        get(meta.h2_eta),
        get(meta.h_alpha_eta),
    ))
}

/// Factor when the two discovery cohorts overlap.
pub fn overlap_factor_case_ii<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    meta.check()?;
    Ok(formula::overlap_case_ii(
        meta.n1,
        meta.n2,
        meta.n_s,
        meta.p,
        get(meta.h2_alpha),
        get(meta.h2_beta),
        get(meta.h_alpha_beta),
    ))
}

/// Factor for the full-overlap cases iii, iv and v.
pub fn overlap_factor_cases_iii_iv_v<T: Scalar>(meta: &DesignMeta<T>, case: CaseTag) -> Result<T> {
    let mut m = meta.clone();
    m.case = case;
    m.check()?;
    let (h2a, h2b) = (get(m.h2_alpha), get(m.h2_beta));
    match case {
        CaseTag::CaseIii => Ok(formula::case_iii(m.n1, m.p, h2a, h2b, get(m.h_alpha_beta))),
        CaseTag::CaseIv => Ok(formula::case_iv(m.n1, m.p, h2a, h2b, get(m.h_alpha_beta))),
        CaseTag::CaseV => Ok(formula::case_v(m.n1, m.n2, m.p, h2a, h2b)),
        other => Err(Error::param(format!("{other} is not one of case_iii, case_iv, case_v"))),
    }
}

/// Bias factor of the case named in `meta`.
pub fn bias_factor<T: Scalar>(meta: &DesignMeta<T>) -> Result<T> {
    match meta.case {
        CaseTag::IndepAe => bias_factor_ae(meta),
        CaseTag::IndepAb => bias_factor_ab(meta),
        CaseTag::SummaryAb => bias_factor_summary_ab(meta),
        CaseTag::ScreenedAe => screened_factor_ae(meta),
        CaseTag::ScreenedAb => screened_factor_ab(meta),
        CaseTag::OverlapCaseI => overlap_factor_case_i(meta),
        CaseTag::OverlapCaseII => overlap_factor_case_ii(meta),
        c @ (CaseTag::CaseIii | CaseTag::CaseIv | CaseTag::CaseV) => overlap_factor_cases_iii_iv_v(meta, c),
    }
}

/// Classifies the design against the surrogate condition of its case:
/// `p >= n1 n3` for target-phenotype estimators, `p^2 >= n1 n2 n3` for two scores on
/// a target cohort, and `p >= n1 n2` for summary-statistic and case v estimators.
/// Overlapping cohorts count their shared samples. Cases iii and iv carry no
/// condition, and neither does a design whose relevant sample sizes are not all known
/// (a zero size means unknown).
pub fn regime<T: Scalar>(meta: &DesignMeta<T>, thresholds: RegimeThresholds) -> RegimeFlag {
    let p = meta.p as f64;
    let ns = meta.n_s as f64;
    let (n1, n2, n3) = (meta.n1 as f64, meta.n2 as f64, meta.n3 as f64);
    let (lhs, rhs) = match meta.case {
        CaseTag::IndepAe | CaseTag::ScreenedAe => (p, n1 * n3),
        CaseTag::OverlapCaseI => (p, (n1 + ns) * (n3 + ns)),
        CaseTag::IndepAb | CaseTag::ScreenedAb => (p * p, n1 * n2 * n3),
        CaseTag::OverlapCaseII => (p * p, (n1 + ns) * (n2 + ns) * n3),
        CaseTag::SummaryAb | CaseTag::CaseV => (p, n1 * n2),
        CaseTag::CaseIii | CaseTag::CaseIv => return RegimeFlag::Consistent,
    };
    if rhs == 0.0 {
        return RegimeFlag::Consistent;
    }
    if lhs >= thresholds.scale * rhs {
        RegimeFlag::Degenerate
    } else {
        RegimeFlag::Consistent
    }
}

/// Divides a raw estimate by the bias factor of its case.
pub fn correct<T: Scalar>(raw: T, meta: &DesignMeta<T>) -> Result<CorrelationEstimate<T>> {
    correct_with(raw, meta, RegimeThresholds::default())
}

/// [`correct`] with explicit regime thresholds.
pub fn correct_with<T: Scalar>(raw: T, meta: &DesignMeta<T>, thresholds: RegimeThresholds) -> Result<CorrelationEstimate<T>> {
    if !raw.is_finite() {
        return Err(Error::param(format!("raw estimate {raw} is not finite")));
    }
    let factor = bias_factor(meta)?;
    if !(factor > T::zero() && factor.is_finite()) {
        return Err(Error::degenerate(format!("bias factor {factor} admits no correction")));
    }
    let corrected = raw / factor;
    Ok(CorrelationEstimate {
        raw,
        bias_factor: factor,
        corrected,
        regime: regime(meta, thresholds),
        out_of_range: corrected.abs() > T::one(),
        meta: meta.clone(),
    })
}

/// Corrected partial R-squared.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialR2<T = f64> {
    pub value: T,
    /// Set when the corrected value exceeds one.
    pub exceeds_one: bool,
}

/// Rescales a raw partial R-squared by the squared target-phenotype factor:
/// `r2 (n1 + p / h2a) / (n1 h2e)`.
pub fn correct_partial_r2<T: Scalar>(r2: T, n1: usize, p: usize, h2a: T, h2e: T) -> Result<PartialR2<T>> {
    if !(r2 >= T::zero() && r2 <= T::one()) {
        return Err(Error::param(format!("partial R2 {r2} outside [0, 1]")));
    }
    if n1 == 0 || p == 0 {
        return Err(Error::param("n1 and p must be positive"));
    }
    for (name, h) in [("h2_alpha", h2a), ("h2_eta", h2e)] {
        if !(h > T::zero() && h <= T::one()) {
            return Err(Error::param(format!("{name} = {h} must lie in (0, 1]")));
        }
    }
    let factor = formula::ae(n1, p, h2a, h2e);
    let value = r2 / (factor * factor);
    Ok(PartialR2 { value, exceeds_one: value > T::one() })
}
