//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, counter)`: a SplitMix64 finalizer
//! mixes the seed and the counter into 64 bits, the top 53 bits give a uniform
//! in (0, 1), and a Box-Muller transform of two consecutive uniforms gives a
//! standard normal. Extending a path never changes earlier draws.
//!
//! The integer part is exact on every platform. The normal transform calls
//! `ln`, `sqrt` and `cos` from the platform libm, so bitwise equality across
//! different libm implementations is not guaranteed (agreement is to a few ulps).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for a labelled purpose.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(GOLDEN))
}

pub fn bits(seed: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(counter.wrapping_mul(GOLDEN)) ^ seed.rotate_left(17))
}

/// Uniform in the open interval (0, 1).
pub fn uniform(seed: u64, counter: u64) -> f64 {
    ((bits(seed, counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw number `index` of the stream `seed`.
pub fn standard_normal(seed: u64, index: u64) -> f64 {
    let u1 = uniform(seed, 2 * index);
    let u2 = uniform(seed, 2 * index + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_open() {
        for c in 0..10_000 {
            let u = uniform(7, c);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let n = 200_000u64;
        let xs: Vec<f64> = (0..n).map(|i| standard_normal(42, i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn streams_differ() {
        assert_ne!(bits(1, 0), bits(2, 0));
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_eq!(standard_normal(9, 3).to_bits(), standard_normal(9, 3).to_bits());
    }
}
