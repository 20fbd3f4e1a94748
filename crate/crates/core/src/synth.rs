//! Simulation of effect sizes, phenotypes and (possibly overlapping) cohorts.

use std::ops::Range;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::genotype::{draw_maf, gen_genotypes_with_maf, GenotypeMatrix};
use crate::kernels::{score, DEFAULT_ROW_BLOCK};
use crate::scalar::mean_sd;
use crate::seed;

/// The three traits of the model: two discovery traits and the target trait.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trait {
    Alpha,
    Beta,
    Eta,
}

impl Trait {
    pub fn tag(self) -> &'static str {
        match self {
            Trait::Alpha => "alpha",
            Trait::Beta => "beta",
            Trait::Eta => "eta",
        }
    }
}

/// Distribution of non-zero effects. Only the Gaussian family is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistributionSpec {
    #[default]
    Gaussian,
}

/// Genetic architecture of the three traits.
///
/// The causal SNPs of `alpha` are `0..m_alpha`. The SNPs shared with `eta` (or
/// `beta`) are the first `m_alpha_eta` (or `m_alpha_beta`) of them, and the private
/// causal SNPs of `eta` and `beta` follow immediately after index `m_alpha`.
/// On shared SNPs the effect pair is bivariate normal with correlation `rho_*`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraitArchitecture {
    pub p: usize,
    pub m_alpha: usize,
    pub m_beta: usize,
    pub m_eta: usize,
    pub m_alpha_beta: usize,
    pub m_alpha_eta: usize,
    pub sigma2_alpha: f64,
    pub sigma2_beta: f64,
    pub sigma2_eta: f64,
    pub rho_alpha_beta: f64,
    pub rho_alpha_eta: f64,
    pub h2_alpha: f64,
    pub h2_beta: f64,
    pub h2_eta: f64,
    pub distribution: DistributionSpec,
}

impl TraitArchitecture {
    /// All three traits share the same `m` causal SNPs, with effect correlation `rho`
    /// between `alpha` and each of the other two traits.
    pub fn shared(p: usize, m: usize, sigma2: f64, rho: f64, h2: f64) -> Self {
        Self {
            p,
            m_alpha: m,
            m_beta: m,
            m_eta: m,
            m_alpha_beta: m,
            m_alpha_eta: m,
            sigma2_alpha: sigma2,
            sigma2_beta: sigma2,
            sigma2_eta: sigma2,
            rho_alpha_beta: rho,
            rho_alpha_eta: rho,
            h2_alpha: h2,
            h2_beta: h2,
            h2_eta: h2,
            distribution: DistributionSpec::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if p == 0 {
            return Err(Error::param("p must be positive"));
        }
        for (name, m) in [("m_alpha", self.m_alpha), ("m_beta", self.m_beta), ("m_eta", self.m_eta)] {
            if m == 0 || m > p {
                return Err(Error::param(format!("{name} = {m} must lie in 1..={p}")));
            }
        }
        let pairs = [
            ("m_alpha_beta", self.m_alpha_beta, self.m_beta),
            ("m_alpha_eta", self.m_alpha_eta, self.m_eta),
        ];
        for (name, shared, other) in pairs {
            if shared > self.m_alpha.min(other) {
                return Err(Error::param(format!("{name} = {shared} exceeds a causal set size")));
            }
            if self.m_alpha + (other - shared) > p {
                return Err(Error::param(format!(
                    "causal sets implied by {name} do not fit in p = {p} SNPs"
                )));
            }
        }
        for (name, v) in [
            ("sigma2_alpha", self.sigma2_alpha),
            ("sigma2_beta", self.sigma2_beta),
            ("sigma2_eta", self.sigma2_eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("rho_alpha_beta", self.rho_alpha_beta), ("rho_alpha_eta", self.rho_alpha_eta)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::param(format!(
                    "{name} = {v} makes the effect covariance matrix indefinite"
                )));
            }
        }
        for (name, v) in [("h2_alpha", self.h2_alpha), ("h2_beta", self.h2_beta), ("h2_eta", self.h2_eta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn m(&self, t: Trait) -> usize {
        match t {
            Trait::Alpha => self.m_alpha,
            Trait::Beta => self.m_beta,
            Trait::Eta => self.m_eta,
        }
    }

    pub fn sigma2(&self, t: Trait) -> f64 {
        match t {
            Trait::Alpha => self.sigma2_alpha,
            Trait::Beta => self.sigma2_beta,
            Trait::Eta => self.sigma2_eta,
        }
    }

    pub fn h2(&self, t: Trait) -> f64 {
        match t {
            Trait::Alpha => self.h2_alpha,
            Trait::Beta => self.h2_beta,
            Trait::Eta => self.h2_eta,
        }
    }

    /// Noise variance that yields heritability `h2` given `m` causal SNPs of variance
    /// `sigma2`: `m sigma2 (1 - h2) / h2`.
    pub fn sigma2_eps(&self, t: Trait) -> f64 {
        let h2 = self.h2(t);
        self.m(t) as f64 * self.sigma2(t) * (1.0 - h2) / h2
    }

    /// Effect covariance of `alpha` with `t` on a shared causal SNP.
    pub fn sigma_alpha(&self, t: Trait) -> f64 {
        match t {
            Trait::Alpha => self.sigma2_alpha,
            Trait::Beta => self.rho_alpha_beta * (self.sigma2_alpha * self.sigma2_beta).sqrt(),
            Trait::Eta => self.rho_alpha_eta * (self.sigma2_alpha * self.sigma2_eta).sqrt(),
        }
    }

    /// Effect correlation of `alpha` with `t` on shared causal SNPs.
    pub fn rho(&self, t: Trait) -> f64 {
        match t {
            Trait::Alpha => 1.0,
            Trait::Beta => self.rho_alpha_beta,
            Trait::Eta => self.rho_alpha_eta,
        }
    }

    /// Number of causal SNPs `alpha` shares with `t`.
    pub fn m_shared(&self, t: Trait) -> usize {
        match t {
            Trait::Alpha => self.m_alpha,
            Trait::Beta => self.m_alpha_beta,
            Trait::Eta => self.m_alpha_eta,
        }
    }

    /// Expected genetic correlation between `alpha` and `t`.
    pub fn phi(&self, t: Trait) -> f64 {
        let num = self.m_shared(t) as f64 * self.sigma_alpha(t);
        num / (self.m_alpha as f64 * self.sigma2_alpha * self.m(t) as f64 * self.sigma2(t)).sqrt()
    }

    /// Share of the phenotypic covariance between `alpha` and `t` that is genetic,
    /// `m sigma / (m sigma + sigma_eps_cross)`, when the noise of the two traits has
    /// correlation `rho_eps` on shared samples.
    pub fn h_cross(&self, t: Trait, rho_eps: f64) -> f64 {
        let genetic = self.m_shared(t) as f64 * self.sigma_alpha(t);
        let noise = rho_eps * (self.sigma2_eps(Trait::Alpha) * self.sigma2_eps(t)).sqrt();
        genetic / (genetic + noise)
    }

    /// Causal SNP indices of trait `t`.
    pub fn causal_set(&self, t: Trait) -> Vec<usize> {
        match t {
            Trait::Alpha => (0..self.m_alpha).collect(),
            _ => {
                let shared = self.m_shared(t);
                let private = self.m(t) - shared;
                (0..shared).chain(self.m_alpha..self.m_alpha + private).collect()
            }
        }
    }
}

/// Dense effect vector of one trait.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectVector {
    pub trait_tag: Trait,
    pub values: Vec<f64>,
    pub causal: Vec<usize>,
    pub sigma2: f64,
}

impl EffectVector {
    /// Number of non-null SNPs.
    pub fn m(&self) -> usize {
        self.causal.len()
    }
}

/// Effects drawn jointly for one replicate. `alpha` is always present.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectSet {
    pub alpha: EffectVector,
    pub beta: Option<EffectVector>,
    pub eta: Option<EffectVector>,
}

impl EffectSet {
    pub fn get(&self, t: Trait) -> Option<&EffectVector> {
        match t {
            Trait::Alpha => Some(&self.alpha),
            Trait::Beta => self.beta.as_ref(),
            Trait::Eta => self.eta.as_ref(),
        }
    }
}

fn normal(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws effects for `alpha` and each requested trait.
///
/// A correlated trait `t` takes `rho (sigma_t / sigma_alpha) alpha_j + sqrt(1 - rho^2)
/// sigma_t z_j` on shared SNPs, which gives the requested bivariate normal law.
pub fn gen_effects(arch: &TraitArchitecture, traits: &[Trait], seed: u64) -> Result<EffectSet> {
    arch.validate()?;
    let p = arch.p;
    let mut rng = seed::rng(seed, "effects", 0);
    let sa = arch.sigma2_alpha.sqrt();
    let mut alpha = vec![0.0; p];
    for a in &mut alpha[..arch.m_alpha] {
        *a = sa * normal(&mut rng);
    }
    let correlated = |t: Trait, label: &str| {
        let mut rng = seed::rng(seed, label, 0);
        let st = arch.sigma2(t).sqrt();
        let rho = arch.rho(t);
        let resid = (1.0 - rho * rho).max(0.0).sqrt();
        let causal = arch.causal_set(t);
        let mut values = vec![0.0; p];
        let shared = arch.m_shared(t);
        for (k, &j) in causal.iter().enumerate() {
            let z = normal(&mut rng);
            values[j] = if k < shared { rho * st / sa * alpha[j] + resid * st * z } else { st * z };
        }
        EffectVector { trait_tag: t, values, causal, sigma2: arch.sigma2(t) }
    };
    let beta = traits.contains(&Trait::Beta).then(|| correlated(Trait::Beta, "effects-beta"));
    let eta = traits.contains(&Trait::Eta).then(|| correlated(Trait::Eta, "effects-eta"));
    Ok(EffectSet {
        alpha: EffectVector {
            trait_tag: Trait::Alpha,
            values: alpha,
            causal: arch.causal_set(Trait::Alpha),
            sigma2: arch.sigma2_alpha,
        },
        beta,
        eta,
    })
}

/// A simulated phenotype vector and its genetic component.
#[derive(Clone, Debug, PartialEq)]
pub struct Phenotype {
    pub trait_tag: Trait,
    pub values: Vec<f64>,
    pub genetic: Vec<f64>,
    /// Noise variance the phenotype was drawn with.
    pub sigma2_eps: f64,
    /// Sample variance of the genetic component over that of the phenotype.
    pub realized_h2: f64,
}

impl Phenotype {
    /// The noise component `values - genetic`.
    pub fn noise(&self) -> Vec<f64> {
        self.values.iter().zip(&self.genetic).map(|(y, g)| y - g).collect()
    }
}

/// Genetic values `X_std eff` restricted to the causal columns.
pub fn genetic_values(g: &GenotypeMatrix, eff: &EffectVector) -> Result<Vec<f64>> {
    if eff.values.len() != g.p() {
        return Err(Error::dim(format!(
            "{} effects for a genotype matrix with {} SNPs",
            eff.values.len(),
            g.p()
        )));
    }
    Ok(score(g, &eff.values, Some(&eff.causal), DEFAULT_ROW_BLOCK))
}

/// `y = X_std eff + noise`, where the noise was drawn with variance `sigma2_eps`.
pub fn phenotype_with_noise(
    g: &GenotypeMatrix,
    eff: &EffectVector,
    noise: &[f64],
    sigma2_eps: f64,
) -> Result<Phenotype> {
    if noise.len() != g.n() {
        return Err(Error::dim("noise length must match sample count"));
    }
    let genetic = genetic_values(g, eff)?;
    let values: Vec<f64> = genetic.iter().zip(noise).map(|(a, b)| a + b).collect();
    let (_, sg) = mean_sd(&genetic);
    let (_, sy) = mean_sd(&values);
    let realized_h2 = if sy > 0.0 { (sg * sg) / (sy * sy) } else { f64::NAN };
    Ok(Phenotype { trait_tag: eff.trait_tag, values, genetic, sigma2_eps, realized_h2 })
}

/// `y = X_std eff + eps` with iid `N(0, sigma2_eps)` noise.
pub fn gen_phenotype_noise_var(
    g: &GenotypeMatrix,
    eff: &EffectVector,
    sigma2_eps: f64,
    seed: u64,
) -> Result<Phenotype> {
    if !(sigma2_eps >= 0.0 && sigma2_eps.is_finite()) {
        return Err(Error::param(format!("noise variance {sigma2_eps} must be non-negative")));
    }
    let mut rng = seed::rng(seed, "noise", 0);
    let s = sigma2_eps.sqrt();
    let noise: Vec<f64> = (0..g.n()).map(|_| s * normal(&mut rng)).collect();
    phenotype_with_noise(g, eff, &noise, sigma2_eps)
}

/// `y = X_std eff + eps` with the noise variance `m sigma2 (1 - h2) / h2` that gives
/// heritability `h2`.
pub fn gen_phenotype(g: &GenotypeMatrix, eff: &EffectVector, h2: f64, seed: u64) -> Result<Phenotype> {
    if !(h2 > 0.0 && h2 <= 1.0) {
        return Err(Error::param(format!("heritability {h2} must lie in (0, 1]")));
    }
    let sigma2_eps = eff.m() as f64 * eff.sigma2 * (1.0 - h2) / h2;
    gen_phenotype_noise_var(g, eff, sigma2_eps, seed)
}

/// Which pair of cohorts shares the block of `n_shared` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverlapPair {
    /// No sharing. `n_shared` must be zero.
    Independent,
    /// The `alpha` discovery cohort and the target cohort share samples.
    DiscoveryTarget,
    /// The two discovery cohorts share samples.
    DiscoveryDiscovery,
}

/// Sample overlap between cohorts. `rho_eps` is the noise correlation of the two
/// traits measured on the shared samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapDesign {
    pub pair: OverlapPair,
    pub n_shared: usize,
    pub rho_eps: f64,
}

impl OverlapDesign {
    pub fn independent() -> Self {
        Self { pair: OverlapPair::Independent, n_shared: 0, rho_eps: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pair == OverlapPair::Independent && self.n_shared != 0 {
            return Err(Error::param("independent cohorts cannot share samples"));
        }
        if !(-1.0..=1.0).contains(&self.rho_eps) {
            return Err(Error::param(format!("noise correlation {} outside [-1, 1]", self.rho_eps)));
        }
        Ok(())
    }
}

/// Private sample counts: `n1` for the `alpha` discovery cohort, `n2` for the `beta`
/// discovery cohort and `n3` for the target cohort.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CohortSizes {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

/// Genotypes of one cohort. The rows in `shared_rows` are the shared block.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortGenotypes {
    pub genotypes: GenotypeMatrix,
    pub shared_rows: Range<usize>,
}

/// Genotypes of all cohorts of one design.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleGenotypes {
    pub alpha: CohortGenotypes,
    pub beta: Option<CohortGenotypes>,
    pub target: Option<CohortGenotypes>,
    pub design: OverlapDesign,
}

/// Phenotypes of one replicate: `alpha` on the `alpha` cohort, `beta` on the `beta`
/// cohort and `eta` on the target cohort, whenever those cohorts exist.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlePhenotypes {
    pub effects: EffectSet,
    pub alpha: Phenotype,
    pub beta: Option<Phenotype>,
    pub eta: Option<Phenotype>,
}

/// A complete simulated replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortBundle {
    pub genotypes: BundleGenotypes,
    pub phenotypes: BundlePhenotypes,
}

fn block(n: usize, maf: &[f64], seed: u64, label: &str) -> Result<Option<GenotypeMatrix>> {
    match n {
        0 => Ok(None),
        _ => gen_genotypes_with_maf(n, maf, seed::derive(seed, label, 0)).map(Some),
    }
}

fn assemble(private: Option<GenotypeMatrix>, shared: Option<&GenotypeMatrix>, name: &str) -> Result<CohortGenotypes> {
    match (private, shared) {
        (Some(x), None) => Ok(CohortGenotypes { shared_rows: x.n()..x.n(), genotypes: x }),
        (None, Some(s)) => Ok(CohortGenotypes { shared_rows: 0..s.n(), genotypes: s.clone() }),
        (Some(x), Some(s)) => {
            let rows = x.n()..x.n() + s.n();
            Ok(CohortGenotypes { genotypes: GenotypeMatrix::vstack(&[&x, s])?, shared_rows: rows })
        }
        (None, None) => Err(Error::param(format!("{name} cohort has no samples"))),
    }
}

/// Simulates the genotypes of every cohort in a design. All cohorts draw from the
/// same allele frequencies, and the shared block is one matrix stacked beneath the
/// private samples of both cohorts that contain it.
pub fn gen_bundle_genotypes(
    p: usize,
    sizes: CohortSizes,
    design: OverlapDesign,
    seed: u64,
) -> Result<BundleGenotypes> {
    design.validate()?;
    let maf = draw_maf(p, seed);
    let s = block(design.n_shared, &maf, seed, "cohort-shared")?;
    let x = block(sizes.n1, &maf, seed, "cohort-alpha")?;
    let z = block(sizes.n2, &maf, seed, "cohort-beta")?;
    let w = block(sizes.n3, &maf, seed, "cohort-target")?;
    let alpha = assemble(x, s.as_ref(), "alpha")?;
    let (beta_shared, target_shared) = match design.pair {
        OverlapPair::Independent => (None, None),
        OverlapPair::DiscoveryTarget => (None, s.as_ref()),
        OverlapPair::DiscoveryDiscovery => (s.as_ref(), None),
    };
    let beta = match (&z, beta_shared) {
        (None, None) => None,
        _ => Some(assemble(z, beta_shared, "beta")?),
    };
    let target = match (&w, target_shared) {
        (None, None) => None,
        _ => Some(assemble(w, target_shared, "target")?),
    };
    Ok(BundleGenotypes { alpha, beta, target, design })
}

fn noise_pair(
    first: &CohortGenotypes,
    second: &CohortGenotypes,
    s1: f64,
    s2: f64,
    rho: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut r1 = seed::rng(seed, "noise-first", 0);
    let mut r2 = seed::rng(seed, "noise-second", 0);
    let mut rs = seed::rng(seed, "noise-shared", 0);
    let mut e1: Vec<f64> = (0..first.genotypes.n()).map(|_| s1 * normal(&mut r1)).collect();
    let mut e2: Vec<f64> = (0..second.genotypes.n()).map(|_| s2 * normal(&mut r2)).collect();
    let resid = (1.0 - rho * rho).max(0.0).sqrt();
    for (a, b) in first.shared_rows.clone().zip(second.shared_rows.clone()) {
        let z1 = normal(&mut rs);
        let z2 = normal(&mut rs);
        e1[a] = s1 * z1;
        e2[b] = s2 * (rho * z1 + resid * z2);
    }
    (e1, e2)
}

fn iid_noise(g: &CohortGenotypes, s: f64, seed: u64, label: &str) -> Vec<f64> {
    let mut r = seed::rng(seed, label, 0);
    (0..g.genotypes.n()).map(|_| s * normal(&mut r)).collect()
}

/// Draws effects and phenotypes for pre-simulated genotypes.
pub fn gen_bundle_phenotypes(
    genos: &BundleGenotypes,
    arch: &TraitArchitecture,
    seed: u64,
) -> Result<BundlePhenotypes> {
    arch.validate()?;
    if genos.alpha.genotypes.p() != arch.p {
        return Err(Error::dim("architecture and genotypes disagree on p"));
    }
    let mut traits = Vec::new();
    if genos.beta.is_some() {
        traits.push(Trait::Beta);
    }
    if genos.target.is_some() {
        traits.push(Trait::Eta);
    }
    let effects = gen_effects(arch, &traits, seed::derive(seed, "effects", 0))?;
    let sd = |t: Trait| arch.sigma2_eps(t).sqrt();
    let noise_seed = seed::derive(seed, "noise", 0);
    let rho = genos.design.rho_eps;
    let (ea, eb, ee) = match genos.design.pair {
        OverlapPair::DiscoveryTarget if genos.design.n_shared > 0 => {
            let target = genos.target.as_ref().expect("target cohort holds the shared block");
            let (ea, ee) = noise_pair(&genos.alpha, target, sd(Trait::Alpha), sd(Trait::Eta), rho, noise_seed);
            let eb = genos.beta.as_ref().map(|b| iid_noise(b, sd(Trait::Beta), noise_seed, "noise-beta"));
            (ea, eb, Some(ee))
        }
        OverlapPair::DiscoveryDiscovery if genos.design.n_shared > 0 => {
            let beta = genos.beta.as_ref().expect("beta cohort holds the shared block");
            let (ea, eb) = noise_pair(&genos.alpha, beta, sd(Trait::Alpha), sd(Trait::Beta), rho, noise_seed);
            let ee = genos.target.as_ref().map(|t| iid_noise(t, sd(Trait::Eta), noise_seed, "noise-eta"));
            (ea, Some(eb), ee)
        }
        _ => (
            iid_noise(&genos.alpha, sd(Trait::Alpha), noise_seed, "noise-alpha"),
            genos.beta.as_ref().map(|b| iid_noise(b, sd(Trait::Beta), noise_seed, "noise-beta")),
            genos.target.as_ref().map(|t| iid_noise(t, sd(Trait::Eta), noise_seed, "noise-eta")),
        ),
    };
    let alpha = phenotype_with_noise(&genos.alpha.genotypes, &effects.alpha, &ea, arch.sigma2_eps(Trait::Alpha))?;
    let beta = match (&genos.beta, &effects.beta, eb) {
        (Some(g), Some(e), Some(n)) => Some(phenotype_with_noise(&g.genotypes, e, &n, arch.sigma2_eps(e.trait_tag))?),
        _ => None,
    };
    let eta = match (&genos.target, &effects.eta, ee) {
        (Some(g), Some(e), Some(n)) => Some(phenotype_with_noise(&g.genotypes, e, &n, arch.sigma2_eps(e.trait_tag))?),
        _ => None,
    };
    Ok(BundlePhenotypes { effects, alpha, beta, eta })
}

/// Simulates genotypes and phenotypes for every cohort of a design.
pub fn gen_overlapping_cohorts(
    arch: &TraitArchitecture,
    sizes: CohortSizes,
    design: OverlapDesign,
    seed: u64,
) -> Result<CohortBundle> {
    arch.validate()?;
    let genotypes = gen_bundle_genotypes(arch.p, sizes, design, seed::derive(seed, "genotypes", 0))?;
    let phenotypes = gen_bundle_phenotypes(&genotypes, arch, seed::derive(seed, "phenotypes", 0))?;
    Ok(CohortBundle { genotypes, phenotypes })
}
