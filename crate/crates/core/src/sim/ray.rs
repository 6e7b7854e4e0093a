//! 2.5-D occlusion ray cast along one ping's ground-range profile.
//!
//! Shared by the simulator and the contact inserter so that inserted
//! highlights and shadows follow the same physics as rendered terrain.

/// Per-bin accumulation of ground samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Echo {
    /// Sum of returns from lit samples.
    pub lit_sum: f64,
    pub lit: u32,
    pub shadow: u32,
}

impl Echo {
    pub fn samples(&self) -> u32 {
        self.lit + self.shadow
    }

    pub fn is_empty(&self) -> bool {
        self.samples() == 0
    }

    /// Mean return with shadowed samples set to `floor`.
    pub fn value(&self, floor: f64) -> f64 {
        (self.lit_sum + f64::from(self.shadow) * floor) / f64::from(self.samples())
    }

    pub fn shadow_fraction(&self) -> f64 {
        f64::from(self.shadow) / f64::from(self.samples())
    }
}

/// Geometry of one ray: samples sit at ground range `(k + 0.5) * step`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ray {
    pub altitude: f64,
    pub step: f64,
    pub bin_resolution: f64,
}

/// Cosine of the incidence angle between the ray from the sensor and the bed normal.
#[inline]
pub(crate) fn cos_incidence(x: f64, z: f64, slope: f64, altitude: f64) -> f64 {
    let dz = altitude - z;
    let norm = (x * x + dz * dz).sqrt() * (1.0 + slope * slope).sqrt();
    ((x * slope + dz) / norm).clamp(0.0, 1.0)
}

impl Ray {
    pub fn ground(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.step
    }

    /// Visibility of each sample: `true` if lit, `false` if occluded by nearer relief.
    pub fn visibility(&self, heights: &[f64]) -> Vec<bool> {
        let mut min_ratio = f64::INFINITY;
        heights
            .iter()
            .enumerate()
            .map(|(k, &z)| {
                // depression of the line of sight per metre of ground range
                let ratio = (self.altitude - z) / self.ground(k);
                let lit = ratio <= min_ratio;
                min_ratio = min_ratio.min(ratio);
                lit
            })
            .collect()
    }

    /// Accumulates the samples `range` of the profile into slant bins.
    ///
    /// `reflect[k]` is the bed reflectivity, `gain(slant)` the range-dependent
    /// receive gain. Samples falling past `echoes.len()` are dropped.
    pub fn cast(
        &self,
        heights: &[f64],
        reflect: &[f64],
        range: std::ops::Range<usize>,
        gain: impl Fn(f64) -> f64,
        echoes: &mut [Echo],
        mut on_sample: impl FnMut(usize, usize, bool),
    ) {
        let vis = self.visibility(heights);
        let n = heights.len();
        for k in range {
            let x = self.ground(k);
            let z = heights[k];
            let dz = self.altitude - z;
            let slant = (x * x + dz * dz).sqrt();
            let bin = (slant / self.bin_resolution).floor();
            if bin < 0.0 || bin as usize >= echoes.len() {
                continue;
            }
            let bin = bin as usize;
            on_sample(k, bin, vis[k]);
            let e = &mut echoes[bin];
            if vis[k] {
                let slope = match (k.checked_sub(1), k + 1 < n) {
                    (Some(a), true) => (heights[k + 1] - heights[a]) / (2.0 * self.step),
                    (None, true) => (heights[k + 1] - z) / self.step,
                    (Some(a), false) => (z - heights[a]) / self.step,
                    (None, false) => 0.0,
                };
                e.lit_sum += reflect[k] * cos_incidence(x, z, slope, self.altitude) * gain(slant);
                e.lit += 1;
            } else {
                e.shadow += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n²) occlusion oracle: a sample is shadowed iff some nearer sample pokes above its sight line.
    fn brute_force(ray: &Ray, heights: &[f64]) -> Vec<bool> {
        (0..heights.len())
            .map(|k| {
                let (x, z) = (ray.ground(k), heights[k]);
                !(0..k).any(|j| {
                    let xj = ray.ground(j);
                    let sight = ray.altitude + (z - ray.altitude) * xj / x;
                    heights[j] > sight
                })
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_occlusion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let ray = Ray { altitude: 5.0 + trial as f64 * 0.1, step: 0.1, bin_resolution: 0.05 };
            let heights: Vec<f64> = (0..300)
                .map(|_| if rng.random::<f64>() < 0.05 { rng.random::<f64>() * 2.0 } else { rng.random::<f64>() * 0.05 })
                .collect();
            assert_eq!(ray.visibility(&heights), brute_force(&ray, &heights), "trial {trial}");
        }
    }

    #[test]
    fn ridge_shadow_follows_similar_triangles() {
        // ridge of 1 m at 45 m ground range, altitude 10 m -> 5 m of shadow
        let ray = Ray { altitude: 10.0, step: 0.01, bin_resolution: 0.05 };
        let n = 6000;
        let heights: Vec<f64> = (0..n).map(|k| if (ray.ground(k) - 45.0).abs() < 0.02 { 1.0 } else { 0.0 }).collect();
        let vis = ray.visibility(&heights);
        let shadowed: Vec<f64> = (0..n).filter(|&k| !vis[k]).map(|k| ray.ground(k)).collect();
        let len = shadowed.last().unwrap() - shadowed.first().unwrap();
        assert!((len - 5.0).abs() < 0.05, "shadow {len}");
    }

    #[test]
    fn flat_bed_incidence() {
        assert!((cos_incidence(0.0, 0.0, 0.0, 10.0) - 1.0).abs() < 1e-12);
        assert!((cos_incidence(24.0, 0.0, 0.0, 10.0) - 10.0 / 26.0).abs() < 1e-12);
        // slope facing the sensor brightens
        assert!(cos_incidence(24.0, 0.0, 0.5, 10.0) > 10.0 / 26.0);
    }
}
