//! Matrix-vector products against standardized genotypes.
//!
//! Both products work directly on the 0/1/2 codes through a three-entry lookup
//! table per column, so the standardized matrix is never materialized. Each output
//! entry is accumulated in a fixed order, which makes results independent of the
//! block size and of the number of worker threads.

use rayon::prelude::*;

use crate::genotype::GenotypeMatrix;
use crate::scalar::Scalar;

/// Columns per parallel task in [`xt_y`].
pub const DEFAULT_COLUMN_BLOCK: usize = 64;

/// Rows per parallel task in [`score`].
pub const DEFAULT_ROW_BLOCK: usize = 2048;

fn lut_as<T: Scalar>(g: &GenotypeMatrix, j: usize) -> [T; 3] {
    let l = g.lut(j);
    [T::of(l[0]), T::of(l[1]), T::of(l[2])]
}

fn column_dot<T: Scalar>(codes: &[u8], lut: [T; 3], y: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let chunks = codes.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        lanes[0] = lanes[0] + lut[codes[i] as usize] * y[i];
        lanes[1] = lanes[1] + lut[codes[i + 1] as usize] * y[i + 1];
        lanes[2] = lanes[2] + lut[codes[i + 2] as usize] * y[i + 2];
        lanes[3] = lanes[3] + lut[codes[i + 3] as usize] * y[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..codes.len() {
        tail = tail + lut[codes[i] as usize] * y[i];
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Computes `X_std^T y` (unnormalized) in column blocks.
///
/// # Panics
/// If `y.len() != g.n()` or `block == 0`.
pub fn xt_y<T: Scalar>(g: &GenotypeMatrix, y: &[T], block: usize) -> Vec<T> {
    assert_eq!(y.len(), g.n(), "phenotype length must match sample count");
    assert!(block > 0, "block size must be positive");
    let mut out = vec![T::zero(); g.p()];
    out.par_chunks_mut(block).enumerate().for_each(|(b, chunk)| {
        for (k, slot) in chunk.iter_mut().enumerate() {
            let j = b * block + k;
            *slot = column_dot(g.column(j), lut_as(g, j), y);
        }
    });
    out
}

/// Computes `X_std[:, selected] w[selected]`, or `X_std w` when `selected` is `None`,
/// in row blocks.
///
/// # Panics
/// If `weights.len() != g.p()`, a selected index is out of range, or `block == 0`.
pub fn score<T: Scalar>(
    g: &GenotypeMatrix,
    weights: &[T],
    selected: Option<&[usize]>,
    block: usize,
) -> Vec<T> {
    assert_eq!(weights.len(), g.p(), "weight length must match SNP count");
    assert!(block > 0, "block size must be positive");
    let all: Vec<usize>;
    let cols: &[usize] = match selected {
        Some(s) => s,
        None => {
            all = (0..g.p()).collect();
            &all
        }
    };
    let luts: Vec<(usize, [T; 3])> = cols
        .iter()
        .filter(|&&j| weights[j] != T::zero())
        .map(|&j| {
            let l = lut_as::<T>(g, j);
            let w = weights[j];
            (j, [l[0] * w, l[1] * w, l[2] * w])
        })
        .collect();
    let n = g.n();
    let mut out = vec![T::zero(); n];
    out.par_chunks_mut(block).enumerate().for_each(|(b, acc)| {
        let r0 = b * block;
        for &(j, lut) in &luts {
            let codes = &g.column(j)[r0..r0 + acc.len()];
            for (a, &c) in acc.iter_mut().zip(codes) {
                *a = *a + lut[c as usize];
            }
        }
    });
    out
}

/// Element-by-element `X_std^T y`, kept as a reference for the blocked kernel.
pub fn xt_y_naive<T: Scalar>(g: &GenotypeMatrix, y: &[T]) -> Vec<T> {
    (0..g.p())
        .map(|j| {
            let mut acc = T::zero();
            for (i, &yi) in y.iter().enumerate() {
                acc = acc + T::of(g.standardized(i, j)) * yi;
            }
            acc
        })
        .collect()
}

/// Element-by-element `X_std w`, kept as a reference for the blocked kernel.
pub fn score_naive<T: Scalar>(g: &GenotypeMatrix, weights: &[T]) -> Vec<T> {
    (0..g.n())
        .map(|i| {
            let mut acc = T::zero();
            for (j, &w) in weights.iter().enumerate() {
                acc = acc + T::of(g.standardized(i, j)) * w;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::gen_genotypes;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn blocked_products_match_naive() {
        let g = gen_genotypes(100, 50, 5).unwrap();
        let y: Vec<f64> = (0..100).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let w: Vec<f64> = (0..50).map(|j| ((j * 13 % 7) as f64) - 3.0).collect();
        assert!(rel_err(&xt_y(&g, &y, 7), &xt_y_naive(&g, &y)) <= 1e-9);
        assert!(rel_err(&score(&g, &w, None, 9), &score_naive(&g, &w)) <= 1e-9);
    }

    #[test]
    fn block_size_does_not_change_bits() {
        let g = gen_genotypes(130, 33, 6).unwrap();
        let y: Vec<f64> = (0..130).map(|i| (i as f64).sin()).collect();
        let w: Vec<f64> = (0..33).map(|j| (j as f64).cos()).collect();
        assert_eq!(xt_y(&g, &y, 1), xt_y(&g, &y, 64));
        assert_eq!(score(&g, &w, None, 1), score(&g, &w, None, 4096));
    }

    #[test]
    fn selection_restricts_columns() {
        let g = gen_genotypes(40, 10, 8).unwrap();
        let w = vec![1.0f64; 10];
        let mut masked = vec![0.0; 10];
        masked[2] = 1.0;
        masked[7] = 1.0;
        assert_eq!(score(&g, &w, Some(&[2, 7]), 16), score(&g, &masked, None, 16));
    }

    #[test]
    fn single_precision_tracks_double() {
        let g = gen_genotypes(64, 12, 2).unwrap();
        let y: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).cos()).collect();
        let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
        let a = xt_y(&g, &y, 4);
        let b: Vec<f64> = xt_y(&g, &y32, 4).into_iter().map(f64::from).collect();
        assert!(rel_err(&b, &a) < 1e-5);
    }
}
