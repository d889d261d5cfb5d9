//! Counter-based dropout masks keyed by (seed, step, tensor name, index).

use super::Matrix;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Uniform draw in `[0, 1)` that depends only on its key.
pub fn keyed_uniform(seed: u64, step: u64, name: &str, index: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(step ^ splitmix64(fnv1a(name) ^ splitmix64(index))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Dropout settings for one forward pass. `example` distinguishes batch
/// members that share a step.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
    pub step: u64,
    pub example: u64,
}

impl Dropout {
    pub fn active(&self) -> bool {
        self.rate > 0.0
    }

    /// Inverted-dropout mask: kept entries scaled by `1/(1-rate)`.
    pub fn mask(&self, name: &str, rows: usize, cols: usize) -> Matrix {
        let keep = 1.0 / (1.0 - self.rate);
        let base = self.example.wrapping_mul(1 << 32);
        let data = (0..rows * cols)
            .map(|i| {
                if keyed_uniform(self.seed, self.step, name, base + i as u64) < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_are_reproducible_and_keyed() {
        let d = Dropout {
            rate: 0.3,
            seed: 1,
            step: 4,
            example: 0,
        };
        assert_eq!(d.mask("a", 8, 8), d.mask("a", 8, 8));
        assert_ne!(d.mask("a", 8, 8), d.mask("b", 8, 8));
        let m = Dropout { rate: 0.3, seed: 1, step: 4, example: 0 }.mask("x", 100, 100);
        let dropped = m.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e4;
        assert!((dropped - 0.3).abs() < 0.03, "{dropped}");
    }
}
