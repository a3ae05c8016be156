//! Counter-based randomness keyed by `(seed, cube)`.
//!
//! Each draw is a pure function of the seed and the cube's level and
//! coordinates, so a field is the same whatever order the cubes are visited
//! in and whatever the depth of the surrounding lattice.

use crate::lattice::CubeId;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 random bits for `cube` under `seed`.
pub fn cube_bits(seed: u64, cube: &CubeId) -> u64 {
    let mut h = mix(seed.wrapping_add(GOLDEN));
    h = mix(h ^ (cube.level as u64).wrapping_add(GOLDEN));
    for &c in &cube.coords {
        h = mix(h ^ (c as u64).wrapping_add(GOLDEN));
    }
    h
}

/// Uniform draw in `[-1, 1)`.
pub fn cube_uniform(seed: u64, cube: &CubeId) -> f64 {
    let unit = (cube_bits(seed, cube) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_in_range() {
        let q = CubeId::new(3, &[1, 2, 5]);
        assert_eq!(cube_uniform(9, &q), cube_uniform(9, &q));
        assert_ne!(cube_uniform(9, &q), cube_uniform(10, &q));
        for i in 0..1000u32 {
            let x = cube_uniform(1, &CubeId::new(10, &[i]));
            assert!((-1.0..1.0).contains(&x));
        }
    }

    #[test]
    fn roughly_uniform() {
        let n = 20_000u32;
        let mean: f64 = (0..n)
            .map(|i| cube_uniform(3, &CubeId::new(15, &[i])))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
    }
}
