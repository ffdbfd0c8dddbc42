//! Per-layer density allocation, pattern sampling, weight initialization and
//! the seeded random streams used throughout the crate.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, SparsityPattern};
use crate::train::SequentialModel;

/// Generator behind every random stream (xoshiro256**, seeded via SplitMix64).
pub type Rng = Xoshiro256StarStar;

/// Purpose of a derived random stream. Each purpose gets its own sub-seed so
/// that, for instance, turning shuffling off leaves initialization untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Pattern,
    Init,
    Shuffle,
    Dropout,
    Augment,
    Data,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Pattern => 0x7061_7474_6572_6e00,
            Stream::Init => 0x696e_6974_0000_0001,
            Stream::Shuffle => 0x7368_7566_666c_6502,
            Stream::Dropout => 0x6472_6f70_6f75_7403,
            Stream::Augment => 0x6175_676d_656e_7404,
            Stream::Data => 0x6461_7461_0000_0005,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root seed from which all per-purpose streams are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent generator for `purpose`; `index` distinguishes e.g. layers.
    pub fn stream(self, purpose: Stream, index: u64) -> Rng {
        let sub = splitmix64(splitmix64(self.0 ^ purpose.tag()) ^ index);
        Rng::seed_from_u64(sub)
    }
}

impl Default for Seed {
    fn default() -> Self {
        Seed(1234567)
    }
}

/// Global and per-layer densities for a stack of linear layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityPlan {
    pub global_density: f64,
    pub global_sparsity: f64,
    /// `(n_in, n_out)` of every layer.
    pub layer_dims: Vec<(usize, usize)>,
    pub layer_densities: Vec<f64>,
    pub layer_nnz: Vec<usize>,
}

impl SparsityPlan {
    pub fn total_weights(&self) -> usize {
        self.layer_dims.iter().map(|&(i, o)| i * o).sum()
    }

    pub fn total_nnz(&self) -> usize {
        self.layer_nnz.iter().sum()
    }

    /// `nnz / size` per layer, i.e. the density a model built from the plan has.
    pub fn realized_densities(&self) -> Vec<f64> {
        self.layer_dims
            .iter()
            .zip(&self.layer_nnz)
            .map(|(&(i, o), &nnz)| nnz as f64 / (i * o) as f64)
            .collect()
    }

    pub fn is_saturated(&self, layer: usize) -> bool {
        let (i, o) = self.layer_dims[layer];
        self.layer_nnz[layer] == i * o
    }
}

/// Consecutive `(n_in, n_out)` pairs of a layer-size chain such as
/// `[3072, 1024, 512, 10]`.
pub fn chain_dims(sizes: &[usize]) -> Vec<(usize, usize)> {
    sizes.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Erdős–Rényi allocation: density ∝ (n_in + n_out)/(n_in·n_out), scaled so
/// the whole network hits `global_density`. Layers that would exceed 1 are
/// fixed at 1 and the scale is re-solved over the others.
pub fn er_densities(layer_dims: &[(usize, usize)], global_density: f64) -> Result<SparsityPlan> {
    if !(global_density > 0.0 && global_density <= 1.0) {
        return Err(Error::invalid(format!(
            "global density must lie in (0, 1], got {global_density}"
        )));
    }
    if layer_dims.is_empty() || layer_dims.iter().any(|&(i, o)| i == 0 || o == 0) {
        return Err(Error::invalid("er_densities needs non-empty layers"));
    }
    let sizes: Vec<f64> = layer_dims.iter().map(|&(i, o)| (i * o) as f64).collect();
    let total: f64 = sizes.iter().sum();
    let target = global_density * total;

    let mut saturated = vec![false; layer_dims.len()];
    let mut scale;
    loop {
        let fixed: f64 = sizes.iter().zip(&saturated).filter(|(_, &s)| s).map(|(n, _)| n).sum();
        // raw density × size = n_in + n_out.
        let divisor: f64 = layer_dims
            .iter()
            .zip(&saturated)
            .filter(|(_, &s)| !s)
            .map(|(&(i, o), _)| (i + o) as f64)
            .sum();
        if divisor == 0.0 {
            scale = 0.0;
            break;
        }
        scale = (target - fixed) / divisor;
        let mut changed = false;
        for (l, &(i, o)) in layer_dims.iter().enumerate() {
            let raw = (i + o) as f64 / (i * o) as f64;
            if !saturated[l] && scale * raw > 1.0 {
                saturated[l] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let layer_densities: Vec<f64> = layer_dims
        .iter()
        .zip(&saturated)
        .map(|(&(i, o), &sat)| {
            if sat {
                1.0
            } else {
                scale * (i + o) as f64 / (i * o) as f64
            }
        })
        .collect();
    let mut layer_nnz: Vec<usize> = layer_densities
        .iter()
        .zip(&sizes)
        .map(|(d, n)| (d * n).round_ties_even() as usize)
        .collect();

    // Per-layer rounding can drift by up to L/2 entries; pull the total back
    // within one entry of the target using the largest rounding residuals.
    loop {
        let sum = layer_nnz.iter().sum::<usize>() as f64;
        let drift = sum - target;
        if drift.abs() <= 1.0 {
            break;
        }
        let up = drift < 0.0;
        let pick = (0..layer_nnz.len())
            .filter(|&l| {
                if up {
                    (layer_nnz[l] as f64) < sizes[l]
                } else {
                    layer_nnz[l] > 0
                }
            })
            .max_by(|&a, &b| {
                let ra = layer_densities[a] * sizes[a] - layer_nnz[a] as f64;
                let rb = layer_densities[b] * sizes[b] - layer_nnz[b] as f64;
                let (ra, rb) = if up { (ra, rb) } else { (-ra, -rb) };
                ra.total_cmp(&rb)
            });
        match pick {
            Some(l) if up => layer_nnz[l] += 1,
            Some(l) => layer_nnz[l] -= 1,
            None => break,
        }
    }

    Ok(SparsityPlan {
        global_density,
        global_sparsity: 1.0 - global_density,
        layer_dims: layer_dims.to_vec(),
        layer_densities,
        layer_nnz,
    })
}

/// `nnz = round_half_even(density · n_out · n_in)`.
pub fn nnz_for_density(n_out: usize, n_in: usize, density: f64) -> Result<usize> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!(
            "layer density must lie in (0, 1], got {density}"
        )));
    }
    Ok((density * (n_out * n_in) as f64).round_ties_even() as usize)
}

/// `nnz` distinct positions drawn uniformly without replacement from an
/// `n_out × n_in` grid, returned in CSR order. Rows or columns may end up empty.
pub fn sample_pattern(n_out: usize, n_in: usize, nnz: usize, rng: &mut Rng) -> Result<SparsityPattern> {
    let size = n_out
        .checked_mul(n_in)
        .ok_or_else(|| Error::invalid("pattern size overflows"))?;
    if nnz > size {
        return Err(Error::invalid(format!(
            "cannot place {nnz} nonzeros in a {n_out}x{n_in} matrix"
        )));
    }
    if nnz == size {
        return SparsityPattern::full(n_out, n_in);
    }
    let mut positions = rand::seq::index::sample(rng, size, nnz).into_vec();
    positions.sort_unstable();
    SparsityPattern::from_sorted_positions(n_out, n_in, &positions)
}

/// Xavier/Glorot uniform limit `√(6 / (n_in + n_out))`.
pub fn xavier_limit(n_in: usize, n_out: usize) -> f64 {
    (6.0 / (n_in + n_out) as f64).sqrt()
}

/// `count` weights drawn from Uniform(−a, a) with the Xavier limit of the
/// layer's full dimensions.
pub fn xavier_init<T: Scalar>(n_in: usize, n_out: usize, count: usize, rng: &mut Rng) -> Vec<T> {
    let a = xavier_limit(n_in, n_out);
    (0..count)
        .map(|_| T::from_f64(a * (2.0 * rng.random::<f64>() - 1.0)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDensity {
    pub layer: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub nnz: usize,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub layers: Vec<LayerDensity>,
    pub global_density: f64,
    pub global_sparsity: f64,
    pub weight_count: usize,
    pub bias_count: usize,
    /// Every trainable parameter: stored weights, biases, batch-norm affine terms.
    pub parameter_count: usize,
}

/// Density of every linear layer and of the model as a whole.
pub fn density_report<T: Scalar>(model: &SequentialModel<T>) -> Result<DensityReport> {
    let mut layers = Vec::new();
    let mut nnz_total = 0;
    let mut size_total = 0;
    let mut bias_count = 0;
    let mut extra = 0;
    for (idx, layer) in model.layers()?.iter().enumerate() {
        if let Some((n_in, n_out, nnz)) = layer.weight_stats() {
            nnz_total += nnz;
            size_total += n_in * n_out;
            bias_count += n_out;
            layers.push(LayerDensity {
                layer: idx,
                n_in,
                n_out,
                nnz,
                density: nnz as f64 / (n_in * n_out) as f64,
            });
        } else {
            extra += layer.parameter_count();
        }
    }
    let global_density = if size_total == 0 {
        1.0
    } else {
        nnz_total as f64 / size_total as f64
    };
    Ok(DensityReport {
        layers,
        global_density,
        global_sparsity: 1.0 - global_density,
        weight_count: nnz_total,
        bias_count,
        parameter_count: nnz_total + bias_count + extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MLP: [usize; 4] = [3072, 1024, 512, 10];

    #[test]
    fn full_density_is_dense() {
        let plan = er_densities(&chain_dims(&MLP), 1.0).unwrap();
        assert!(plan.layer_densities.iter().all(|&d| d == 1.0));
        assert_eq!(plan.total_nnz(), plan.total_weights());
    }

    #[test]
    fn rejects_bad_density() {
        assert!(er_densities(&chain_dims(&MLP), 0.0).is_err());
        assert!(er_densities(&chain_dims(&MLP), 1.5).is_err());
        assert!(er_densities(&chain_dims(&MLP), f64::NAN).is_err());
    }

    #[test]
    fn saturated_layer_is_frozen() {
        let plan = er_densities(&chain_dims(&MLP), 0.1).unwrap();
        assert_eq!(plan.layer_densities[2], 1.0);
        assert!(plan.is_saturated(2));
        let want = 0.1 * plan.total_weights() as f64;
        assert!((plan.total_nnz() as f64 - want).abs() <= 1.0);
    }

    #[test]
    fn reference_shape_counts() {
        // Hand-computed: scale = 36751.36 / 6154, nnz = 24461 + 9173 + 3117.
        let plan = er_densities(&chain_dims(&MLP), 0.01).unwrap();
        assert_eq!(plan.layer_nnz, vec![24461, 9173, 3117]);
        let plan = er_densities(&chain_dims(&MLP), 0.001).unwrap();
        assert_eq!(plan.layer_nnz, vec![2446, 917, 312]);
    }

    #[test]
    fn sample_pattern_extremes() {
        let mut rng = Seed(1).stream(Stream::Pattern, 0);
        let full = sample_pattern(3, 4, 12, &mut rng).unwrap();
        assert_eq!(full.nnz(), 12);
        let empty = sample_pattern(3, 4, 0, &mut rng).unwrap();
        assert_eq!(empty.row_ptr(), &[0, 0, 0, 0]);
        assert!(sample_pattern(3, 4, 13, &mut rng).is_err());
    }

    #[test]
    fn xavier_limit_square() {
        assert_eq!(xavier_limit(3, 3), 1.0);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let s = Seed(42);
        let a: u64 = s.stream(Stream::Init, 0).random();
        let b: u64 = s.stream(Stream::Init, 0).random();
        let c: u64 = s.stream(Stream::Shuffle, 0).random();
        let d: u64 = s.stream(Stream::Init, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
