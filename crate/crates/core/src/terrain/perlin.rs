//! Seeded 2-D gradient (Perlin) noise for terrain-class map synthesis.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unit gradient directions, every 45°.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
    (0.0, -1.0),
    (std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
];

/// Classic permutation-table Perlin noise with gradients assigned from a
/// seeded shuffle. Values lie in roughly [-1, 1].
#[derive(Debug, Clone)]
pub struct Perlin {
    perm: [u8; 256],
}

impl Perlin {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut perm = [0u8; 256];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i as u8;
        }
        perm.shuffle(rng);
        Perlin { perm }
    }

    fn hash(&self, x: i64, y: i64) -> usize {
        let a = self.perm[(x.rem_euclid(256)) as usize] as i64;
        self.perm[((a + y).rem_euclid(256)) as usize] as usize
    }

    fn gradient(&self, x: i64, y: i64) -> (f64, f64) {
        GRADIENTS[self.hash(x, y) & 7]
    }

    /// Noise value at continuous coordinates.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0 as i64;
        let yi = y0 as i64;

        let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
            let (vx, vy) = self.gradient(gx, gy);
            vx * dx + vy * dy
        };
        let n00 = dot(xi, yi, fx, fy);
        let n10 = dot(xi + 1, yi, fx - 1.0, fy);
        let n01 = dot(xi, yi + 1, fx, fy - 1.0);
        let n11 = dot(xi + 1, yi + 1, fx - 1.0, fy - 1.0);

        let u = fade(fx);
        let v = fade(fy);
        let top = n00 + u * (n10 - n00);
        let bot = n01 + u * (n11 - n01);
        top + v * (bot - top)
    }
}

/// Quintic fade 6t^5 - 15t^4 + 10t^3.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Generate a field of `width x height` noise values with a random lattice
/// offset, at the given feature wavelength in cells.
pub fn noise_field(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    feature_scale: f64,
) -> Vec<f64> {
    let perlin = Perlin::new(rng);
    let ox: f64 = rng.gen_range(0.0..256.0);
    let oy: f64 = rng.gen_range(0.0..256.0);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(perlin.value(
                (x as f64 + ox) / feature_scale,
                (y as f64 + oy) / feature_scale,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn values_are_bounded_and_deterministic() {
        let mut rng = derive_stream(3, &[1]);
        let a = noise_field(&mut rng, 32, 32, 8.0);
        let mut rng = derive_stream(3, &[1]);
        let b = noise_field(&mut rng, 32, 32, 8.0);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        // The field is not constant.
        let min = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min > 0.1);
    }

    #[test]
    fn noise_is_continuous() {
        let mut rng = derive_stream(5, &[2]);
        let p = Perlin::new(&mut rng);
        let a = p.value(3.7, 4.2);
        let b = p.value(3.7 + 1e-7, 4.2);
        assert!((a - b).abs() < 1e-5);
    }
}
