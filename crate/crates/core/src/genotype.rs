//! Additive genotype matrices stored as 0/1/2 minor-allele counts.

use rand::{Rng as _, RngCore};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

/// Lower and upper bound of the minor allele frequency distribution.
pub const MAF_RANGE: (f64, f64) = (0.05, 0.45);

/// Number of redraws allowed for a column that came out monomorphic.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// An `n x p` genotype matrix with per-column standardization statistics.
///
/// Codes are stored SNP-major (column `j` occupies `codes[j*n..(j+1)*n]`). The
/// standardized entry is `(code - mean_j) / sd_j`, where `sd_j` uses divisor `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeMatrix {
    n: usize,
    p: usize,
    codes: Vec<u8>,
    maf: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    snp_ids: Vec<String>,
    resampled_columns: usize,
}

/// Positional SNP identifier used for simulated data.
pub fn positional_id(j: usize) -> String {
    format!("snp{j}")
}

fn column_stats(col: &[u8]) -> (f64, f64) {
    let mut counts = [0usize; 3];
    for &c in col {
        counts[c as usize] += 1;
    }
    let n = col.len() as f64;
    let mean = (counts[1] + 2 * counts[2]) as f64 / n;
    let second = (counts[1] + 4 * counts[2]) as f64 / n;
    let var = (second - mean * mean).max(0.0);
    (mean, var.sqrt())
}

fn is_polymorphic(col: &[u8]) -> bool {
    col.iter().any(|&c| c != col[0])
}

impl GenotypeMatrix {
    /// Builds a matrix from SNP-major codes. Rejects codes outside {0,1,2} and
    /// monomorphic columns, which cannot be standardized.
    pub fn from_codes(n: usize, p: usize, codes: Vec<u8>, maf: Option<Vec<f64>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("genotype matrix needs n >= 2 samples, got {n}")));
        }
        if p == 0 {
            return Err(Error::param("genotype matrix needs at least one SNP"));
        }
        if codes.len() != n * p {
            return Err(Error::dim(format!("{} codes for a {n} x {p} matrix", codes.len())));
        }
        if let Some(bad) = codes.iter().position(|&c| c > 2) {
            return Err(Error::param(format!(
                "genotype code {} at sample {}, SNP {} is not in {{0,1,2}}",
                codes[bad],
                bad % n,
                bad / n
            )));
        }
        let mut mean = Vec::with_capacity(p);
        let mut sd = Vec::with_capacity(p);
        for j in 0..p {
            let col = &codes[j * n..(j + 1) * n];
            if !is_polymorphic(col) {
                return Err(Error::degenerate(format!("SNP {j} is monomorphic")));
            }
            let (m, s) = column_stats(col);
            mean.push(m);
            sd.push(s);
        }
        let maf = match maf {
            Some(v) if v.len() != p => {
                return Err(Error::dim(format!("{} MAF values for {p} SNPs", v.len())))
            }
            Some(v) => v,
            None => mean.iter().map(|m| (m / 2.0).min(1.0 - m / 2.0)).collect(),
        };
        Ok(Self {
            n,
            p,
            codes,
            maf,
            mean,
            sd,
            snp_ids: (0..p).map(positional_id).collect(),
            resampled_columns: 0,
        })
    }

    /// Replaces the SNP identifiers.
    pub fn with_snp_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.p {
            return Err(Error::dim(format!("{} SNP ids for {} SNPs", ids.len(), self.p)));
        }
        self.snp_ids = ids;
        Ok(self)
    }

    /// Stacks matrices with the same SNPs on top of each other and recomputes the
    /// column statistics over the combined sample. MAFs are taken from the first part.
    pub fn vstack(parts: &[&GenotypeMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::param("nothing to stack"))?;
        let p = first.p;
        if parts.iter().any(|g| g.p != p) {
            return Err(Error::dim("stacked matrices differ in SNP count"));
        }
        if parts.len() == 1 {
            return Ok((*first).clone());
        }
        let n: usize = parts.iter().map(|g| g.n).sum();
        let mut codes = Vec::with_capacity(n * p);
        for j in 0..p {
            for g in parts {
                codes.extend_from_slice(g.column(j));
            }
        }
        let stacked = Self::from_codes(n, p, codes, Some(first.maf.clone()))?;
        stacked.with_snp_ids(first.snp_ids.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Raw codes of column `j`.
    pub fn column(&self, j: usize) -> &[u8] {
        &self.codes[j * self.n..(j + 1) * self.n]
    }

    pub fn code(&self, i: usize, j: usize) -> u8 {
        self.codes[j * self.n + i]
    }

    /// All codes, SNP-major.
    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn maf(&self) -> &[f64] {
        &self.maf
    }

    pub fn col_mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn col_sd(&self) -> &[f64] {
        &self.sd
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    /// Number of columns that needed at least one redraw during generation.
    pub fn resampled_columns(&self) -> usize {
        self.resampled_columns
    }

    /// Standardized entry `(code - mean) / sd`.
    pub fn standardized(&self, i: usize, j: usize) -> f64 {
        (f64::from(self.code(i, j)) - self.mean[j]) / self.sd[j]
    }

    /// Standardized values of codes 0, 1 and 2 in column `j`.
    pub fn lut(&self, j: usize) -> [f64; 3] {
        let (m, s) = (self.mean[j], self.sd[j]);
        [(0.0 - m) / s, (1.0 - m) / s, (2.0 - m) / s]
    }

    /// Standardized column `j` as a dense vector.
    pub fn standardized_column(&self, j: usize) -> Vec<f64> {
        let lut = self.lut(j);
        self.column(j).iter().map(|&c| lut[c as usize]).collect()
    }

    /// Codes of rows `rows` (SNP-major), used to compare shared blocks across cohorts.
    pub fn row_block_codes(&self, rows: std::ops::Range<usize>) -> Vec<u8> {
        let mut out = Vec::with_capacity(rows.len() * self.p);
        for j in 0..self.p {
            out.extend_from_slice(&self.column(j)[rows.clone()]);
        }
        out
    }
}

/// Draws `p` minor allele frequencies uniformly on [`MAF_RANGE`].
pub fn draw_maf(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed, "maf", 0);
    (0..p).map(|_| rng.random_range(MAF_RANGE.0..MAF_RANGE.1)).collect()
}

/// Simulates an `n x p` matrix with frequencies drawn from [`MAF_RANGE`].
pub fn gen_genotypes(n: usize, p: usize, seed: u64) -> Result<GenotypeMatrix> {
    let maf = draw_maf(p, seed);
    gen_genotypes_with_maf(n, &maf, seed)
}

fn fill_column(col: &mut [u8], f: f64, rng: &mut seed::Rng) {
    let scale = 4_294_967_296.0;
    let p0 = (1.0 - f) * (1.0 - f);
    let p01 = p0 + 2.0 * f * (1.0 - f);
    let t0 = (p0 * scale) as u64;
    let t1 = (p01 * scale) as u64;
    let mut chunks = col.chunks_exact_mut(2);
    for pair in &mut chunks {
        let r = rng.next_u64();
        let a = r & 0xFFFF_FFFF;
        let b = r >> 32;
        pair[0] = u8::from(a >= t0) + u8::from(a >= t1);
        pair[1] = u8::from(b >= t0) + u8::from(b >= t1);
    }
    for c in chunks.into_remainder() {
        let a = u64::from(rng.next_u32());
        *c = u8::from(a >= t0) + u8::from(a >= t1);
    }
}

/// Simulates `n` samples under Hardy-Weinberg proportions `(1-f)^2, 2f(1-f), f^2`
/// for the given frequencies. Each column has its own random stream and is redrawn
/// while monomorphic, up to [`MAX_RESAMPLE_ATTEMPTS`] times.
pub fn gen_genotypes_with_maf(n: usize, maf: &[f64], seed: u64) -> Result<GenotypeMatrix> {
    let p = maf.len();
    if n < 2 {
        return Err(Error::param(format!("genotype matrix needs n >= 2 samples, got {n}")));
    }
    if p == 0 {
        return Err(Error::param("genotype matrix needs at least one SNP"));
    }
    if let Some(f) = maf.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(Error::param(format!("minor allele frequency {f} outside (0, 1)")));
    }
    let mut codes = vec![0u8; n * p];
    let redraws: Vec<Result<usize>> = codes
        .par_chunks_mut(n)
        .enumerate()
        .map(|(j, col)| {
            let mut rng = seed::rng(seed, "genotype-column", j as u64);
            for attempt in 0..=MAX_RESAMPLE_ATTEMPTS {
                fill_column(col, maf[j], &mut rng);
                if is_polymorphic(col) {
                    return Ok(attempt);
                }
            }
            Err(Error::Monomorphic { column: j, attempts: MAX_RESAMPLE_ATTEMPTS })
        })
        .collect();
    let mut resampled = 0;
    for r in redraws {
        if r? > 0 {
            resampled += 1;
        }
    }
    let mut g = GenotypeMatrix::from_codes(n, p, codes, Some(maf.to_vec()))?;
    g.resampled_columns = resampled;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_codes_standardize_with_population_divisor() {
        let g = GenotypeMatrix::from_codes(2, 1, vec![0, 2], None).unwrap();
        assert_eq!(g.col_mean()[0], 1.0);
        assert_eq!(g.col_sd()[0], 1.0);
        assert_eq!(g.standardized_column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_codes_and_monomorphic_columns() {
        assert!(GenotypeMatrix::from_codes(2, 1, vec![0, 3], None).is_err());
        assert!(GenotypeMatrix::from_codes(3, 1, vec![1, 1, 1], None).is_err());
        assert!(GenotypeMatrix::from_codes(1, 1, vec![1], None).is_err());
    }

    #[test]
    fn generated_columns_are_standardized() {
        let g = gen_genotypes(300, 40, 11).unwrap();
        for j in 0..g.p() {
            let col = g.standardized_column(j);
            let mean: f64 = col.iter().sum::<f64>() / 300.0;
            let var: f64 = col.iter().map(|x| x * x).sum::<f64>() / 300.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
            assert!(g.maf()[j] >= MAF_RANGE.0 && g.maf()[j] < MAF_RANGE.1);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        assert_eq!(gen_genotypes(50, 20, 3).unwrap(), gen_genotypes(50, 20, 3).unwrap());
        assert_ne!(gen_genotypes(50, 20, 3).unwrap(), gen_genotypes(50, 20, 4).unwrap());
    }

    #[test]
    fn tiny_samples_get_resampled() {
        let g = gen_genotypes_with_maf(2, &vec![0.05; 200], 9).unwrap();
        assert!(g.resampled_columns() > 0);
        for j in 0..g.p() {
            assert!(is_polymorphic(g.column(j)));
        }
    }

    #[test]
    fn vstack_keeps_blocks_bit_identical() {
        let maf = draw_maf(10, 1);
        let x = gen_genotypes_with_maf(20, &maf, 1).unwrap();
        let s = gen_genotypes_with_maf(5, &maf, 2).unwrap();
        let xs = GenotypeMatrix::vstack(&[&x, &s]).unwrap();
        assert_eq!(xs.n(), 25);
        assert_eq!(xs.row_block_codes(20..25), s.row_block_codes(0..5));
        assert_eq!(xs.row_block_codes(0..20), x.row_block_codes(0..20));
    }
}
