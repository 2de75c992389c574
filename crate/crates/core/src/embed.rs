//! Delay embedding of a series onto the fixed 32×32 canvas.
//!
//! Column `j` holds the lagged window `x[s_j .. s_j + d)` with `s_j = j·τ`.
//! When `(L − d)` is not a multiple of `τ` the last `(L − d) mod τ` samples
//! would be left out, so one extra column anchored at `L − d` is appended.
//! Every sample is then encoded at least once and the inverse is an exact
//! average of copies.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::image::{DelayMeta, ImageTensor, TransformMeta, CANVAS};

pub const DEFAULT_TAU: usize = 3;
pub const DEFAULT_DIM: usize = 32;

/// Column start offsets for a series of length `len`.
pub fn column_starts(len: usize, tau: usize, dim: usize) -> Result<Vec<usize>> {
    if tau == 0 {
        return Err(param("tau", "must be positive"));
    }
    if len < dim {
        return Err(Error::Input(format!("series length {len} is shorter than embedding dimension {dim}")));
    }
    let q = (len - dim) / tau + 1;
    let mut starts: Vec<usize> = (0..q).map(|j| j * tau).collect();
    if (len - dim) % tau != 0 {
        starts.push(len - dim);
    }
    if starts.len() > CANVAS {
        return Err(Error::Input(format!(
            "delay embedding of length {len} needs {} columns but the canvas holds {CANVAS}; split the series into chunks",
            starts.len()
        )));
    }
    Ok(starts)
}

pub fn delay_embed(x: &[f64], tau: usize, dim: usize) -> Result<ImageTensor> {
    if dim != CANVAS {
        return Err(param("dim", format!("embedding dimension must equal the canvas height {CANVAS}")));
    }
    let starts = column_starts(x.len(), tau, dim)?;
    let mut mask = vec![false; CANVAS * CANVAS];
    for row in 0..dim {
        for col in 0..starts.len() {
            mask[row * CANVAS + col] = true;
        }
    }
    let meta = DelayMeta { len: x.len(), tau, dim, column_starts: starts };
    let mut img = ImageTensor::zeros(1, dim, CANVAS, mask, TransformMeta::DelayEmbedding(meta.clone()));
    for (col, &s) in meta.column_starts.iter().enumerate() {
        for row in 0..dim {
            img.set(0, row, col, x[s + row]);
        }
    }
    Ok(img)
}

/// Average every valid cell that encodes each series index. Only channel 0 is read.
pub fn delay_embed_invert(img: &ImageTensor) -> Result<Vec<f64>> {
    img.check_shape()?;
    let meta = match &img.meta {
        TransformMeta::DelayEmbedding(m) => m,
        other => return Err(Error::Meta(format!("expected delay-embedding meta, found {}", other.kind()))),
    };
    if meta.dim != img.height || meta.column_starts.len() > img.width {
        return Err(Error::Meta("delay meta does not match tensor geometry".into()));
    }
    let mut sum = vec![0.0; meta.len];
    let mut count = vec![0usize; meta.len];
    for (col, &s) in meta.column_starts.iter().enumerate() {
        for row in 0..meta.dim {
            if !img.mask[row * img.width + col] {
                return Err(Error::Meta(format!("cell ({row},{col}) is listed in meta but masked out")));
            }
            let t = s + row;
            if t >= meta.len {
                return Err(Error::Meta(format!("column {col} reaches past series end")));
            }
            sum[t] += img.get(0, row, col);
            count[t] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .enumerate()
        .map(|(t, (&s, &c))| {
            if c == 0 {
                Err(Error::Meta(format!("series index {t} is not encoded by any column")))
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn geometry_for_96() {
        let starts = column_starts(96, 3, 32).unwrap();
        // floor(64/3)+1 = 22 regular columns; 64 % 3 = 1 so sample 95 needs the anchored column.
        assert_eq!(starts.len(), 23);
        assert_eq!(starts[21], 63);
        assert_eq!(starts[22], 64);
        let img = delay_embed(&[0.5; 96], 3, 32).unwrap();
        assert_eq!(img.valid_cells(), 23 * 32);
        // constant in, constant on valid cells, zero on padding
        for row in 0..32 {
            for col in 0..32 {
                let want = if col < 23 { 0.5 } else { 0.0 };
                assert_eq!(img.get(0, row, col), want);
            }
        }
    }

    #[test]
    fn aligned_length_has_no_extra_column() {
        assert_eq!(column_starts(95, 3, 32).unwrap().len(), 22);
        assert_eq!(column_starts(32, 3, 32).unwrap(), vec![0]);
    }

    #[test]
    fn coverage_by_enumeration() {
        for len in 32..=125 {
            let starts = column_starts(len, 3, 32).unwrap();
            let mut hit = vec![0; len];
            for &s in &starts {
                for r in 0..32 {
                    hit[s + r] += 1;
                }
            }
            assert!(hit.iter().all(|&h| h >= 1), "len {len}");
        }
        assert!(column_starts(126, 3, 32).is_err());
        assert!(column_starts(31, 3, 32).is_err());
    }

    #[test]
    fn single_column_is_a_reshape() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let img = delay_embed(&x, 3, 32).unwrap();
        for r in 0..32 {
            assert_eq!(img.get(0, r, 0), r as f64);
        }
        assert_eq!(delay_embed_invert(&img).unwrap(), x);
    }

    #[test]
    fn noisy_copies_are_averaged() {
        let mut r = Rng::new(5);
        let x: Vec<f64> = (0..96).map(|_| r.normal()).collect();
        let mut img = delay_embed(&x, 3, 32).unwrap();
        for c in 0..23 {
            for row in 0..32 {
                let v = img.get(0, row, c) + 0.3 * r.normal();
                img.set(0, row, c, v);
            }
        }
        let starts = column_starts(96, 3, 32).unwrap();
        let rec = delay_embed_invert(&img).unwrap();
        for t in 0..96 {
            let copies: Vec<f64> = starts
                .iter()
                .enumerate()
                .filter(|(_, &s)| t >= s && t < s + 32)
                .map(|(c, &s)| img.get(0, t - s, c))
                .collect();
            let mean = copies.iter().sum::<f64>() / copies.len() as f64;
            assert!((rec[t] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_meta_rejected() {
        let mut img = delay_embed(&[1.0; 40], 3, 32).unwrap();
        img.mask[0] = false;
        assert!(matches!(delay_embed_invert(&img), Err(Error::Meta(_))));
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), len in 32usize..=96) {
            let mut r = Rng::new(seed);
            let x: Vec<f64> = (0..len).map(|_| 5.0 * r.normal()).collect();
            let back = delay_embed_invert(&delay_embed(&x, 3, 32).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut r = Rng::new(seed);
            let x: Vec<f64> = (0..80).map(|_| r.normal()).collect();
            let y: Vec<f64> = (0..80).map(|_| r.normal()).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (ix, iy, im) = (delay_embed(&x, 3, 32).unwrap(), delay_embed(&y, 3, 32).unwrap(), delay_embed(&mix, 3, 32).unwrap());
            for i in 0..im.data.len() {
                prop_assert!((im.data[i] - (a * ix.data[i] + b * iy.data[i])).abs() < 1e-9);
            }
        }
    }
}
