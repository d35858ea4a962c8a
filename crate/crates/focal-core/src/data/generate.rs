use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

use super::shape::{ColorName, ColorValue, ShapeKind, ShapeSpec};

const MIN_SIZE: usize = 3;
const MAX_SIZE: usize = 10;

/// Largest half-extent that still leaves one pixel of margin, capped at
/// the global maximum. Errors when even the minimum size cannot fit.
fn size_range(width: usize, height: usize) -> Result<(usize, usize)> {
    let side = width.min(height);
    if side < 2 * MIN_SIZE + 3 {
        return Err(Error::input(
            "generate",
            format!("canvas {}x{} too small for minimum object size {}", width, height, MIN_SIZE),
        ));
    }
    Ok((MIN_SIZE, MAX_SIZE.min((side - 3) / 2)))
}

/// Sample size and position for one spec from its own sub-seeded stream,
/// so generation order (or parallelism) cannot change any spec.
fn sample_placement(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    lo: usize,
    hi: usize,
) -> (usize, (usize, usize)) {
    let size = rng.gen_range(lo..=hi);
    let cx = rng.gen_range(size + 1..=width - size - 2);
    let cy = rng.gen_range(size + 1..=height - size - 2);
    (size, (cx, cy))
}

/// The discrete suite: `n_per_combo` specs for each of the 16
/// (color, shape) cells, in fixed cell order. Sizes and positions vary
/// per spec; colors are the four canonical RGB values.
pub fn generate_colorshape(
    seed: u64,
    n_per_combo: usize,
    width: usize,
    height: usize,
) -> Result<Vec<ShapeSpec>> {
    if n_per_combo == 0 {
        return Err(Error::input("generate_colorshape", "n_per_combo must be at least 1"));
    }
    let (lo, hi) = size_range(width, height)?;
    let mut specs = Vec::with_capacity(16 * n_per_combo);
    for (ci, color) in ColorName::ALL.iter().enumerate() {
        for (si, shape) in ShapeKind::ALL.iter().enumerate() {
            for r in 0..n_per_combo {
                let index = ((ci * 4 + si) * n_per_combo + r) as u64;
                let mut rng = rng_for(seed, stream::DATA, index);
                let (size, center) = sample_placement(&mut rng, width, height, lo, hi);
                specs.push(ShapeSpec {
                    shape: *shape,
                    color: ColorValue::Discrete(*color),
                    center,
                    size,
                });
            }
        }
    }
    Ok(specs)
}

/// The continuous suite: `n` specs with RGB drawn uniformly from
/// `[0,1]^3` and shapes cycling through the sampler uniformly.
pub fn generate_continuous_color(
    seed: u64,
    n: usize,
    width: usize,
    height: usize,
) -> Result<Vec<ShapeSpec>> {
    if n < 2 {
        return Err(Error::input("generate_continuous_color", "need at least 2 specs"));
    }
    let (lo, hi) = size_range(width, height)?;
    let mut specs = Vec::with_capacity(n);
    for index in 0..n {
        let mut rng = rng_for(seed, stream::DATA, index as u64);
        let rgb = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let shape = ShapeKind::ALL[rng.gen_range(0..ShapeKind::ALL.len())];
        let (size, center) = sample_placement(&mut rng, width, height, lo, hi);
        specs.push(ShapeSpec { shape, color: ColorValue::Rgb(rgb), center, size });
    }
    Ok(specs)
}
