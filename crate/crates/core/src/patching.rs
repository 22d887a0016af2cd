//! Non-overlapping square patch decomposition of a [`Field`] and its exact
//! inverse. Patches are ordered row-major over `(patch_row, patch_col)`.

use crate::error::{Error, Result};
use crate::tensor_fft::Field;

/// `[batch, channels, n_patches, p, p]` plus the grid it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    data: Vec<f64>,
    batch: usize,
    channels: usize,
    patch: usize,
    grid: (usize, usize),
    origin: (usize, usize),
}

impl PatchSet {
    pub fn new(
        data: Vec<f64>,
        batch: usize,
        channels: usize,
        patch: usize,
        grid: (usize, usize),
        origin: (usize, usize),
    ) -> Result<Self> {
        if patch == 0 || grid.0 * patch != origin.0 || grid.1 * patch != origin.1 {
            return Err(Error::shape(format!(
                "patch grid {grid:?} x {patch} does not tile {origin:?}"
            )));
        }
        if data.len() != batch * channels * grid.0 * grid.1 * patch * patch {
            return Err(Error::shape("patch data length does not match metadata"));
        }
        Ok(Self {
            data,
            batch,
            channels,
            patch,
            grid,
            origin,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn patch_size(&self) -> usize {
        self.patch
    }
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }
    pub fn n_patches(&self) -> usize {
        self.grid.0 * self.grid.1
    }
    pub fn origin_shape(&self) -> (usize, usize) {
        self.origin
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Shape as `[b, c, m, p, p]`.
    pub fn shape(&self) -> [usize; 5] {
        [self.batch, self.channels, self.n_patches(), self.patch, self.patch]
    }

    pub fn patch_values(&self, b: usize, c: usize, m: usize) -> &[f64] {
        let pp = self.patch * self.patch;
        let off = ((b * self.channels + c) * self.n_patches() + m) * pp;
        &self.data[off..off + pp]
    }
}

pub(crate) fn check_patch(nx: usize, ny: usize, p: usize) -> Result<()> {
    if p == 0 || nx % p != 0 || ny % p != 0 {
        return Err(Error::shape(format!(
            "patch size {p} does not divide grid {nx}x{ny}"
        )));
    }
    Ok(())
}

/// Copies one `[nx, ny]` plane into `m` contiguous `p x p` patches.
pub(crate) fn extract_plane(src: &[f64], nx: usize, ny: usize, p: usize, dst: &mut [f64]) {
    let (mx, my) = (nx / p, ny / p);
    let pp = p * p;
    for pr in 0..mx {
        for pc in 0..my {
            let patch = &mut dst[(pr * my + pc) * pp..][..pp];
            for i in 0..p {
                let row = (pr * p + i) * ny + pc * p;
                patch[i * p..(i + 1) * p].copy_from_slice(&src[row..row + p]);
            }
        }
    }
}

pub(crate) fn reassemble_plane(src: &[f64], nx: usize, ny: usize, p: usize, dst: &mut [f64]) {
    let (mx, my) = (nx / p, ny / p);
    let pp = p * p;
    for pr in 0..mx {
        for pc in 0..my {
            let patch = &src[(pr * my + pc) * pp..][..pp];
            for i in 0..p {
                let row = (pr * p + i) * ny + pc * p;
                dst[row..row + p].copy_from_slice(&patch[i * p..(i + 1) * p]);
            }
        }
    }
}

pub fn extract_patches(f: &Field, p: usize) -> Result<PatchSet> {
    let [b, c, nx, ny] = f.shape();
    check_patch(nx, ny, p)?;
    let mut data = vec![0.0; f.data().len()];
    for (src, dst) in f.planes().zip(data.chunks_exact_mut(nx * ny)) {
        extract_plane(src, nx, ny, p, dst);
    }
    Ok(PatchSet {
        data,
        batch: b,
        channels: c,
        patch: p,
        grid: (nx / p, ny / p),
        origin: (nx, ny),
    })
}

pub fn reassemble_patches(ps: &PatchSet) -> Result<Field> {
    let (nx, ny) = ps.origin;
    let p = ps.patch;
    if ps.grid.0 * p != nx || ps.grid.1 * p != ny {
        return Err(Error::shape("inconsistent patch grid metadata"));
    }
    let mut data = vec![0.0; ps.data.len()];
    for (src, dst) in ps.data.chunks_exact(nx * ny).zip(data.chunks_exact_mut(nx * ny)) {
        reassemble_plane(src, nx, ny, p, dst);
    }
    Field::new(data, [ps.batch, ps.channels, nx, ny])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_field(shape: [usize; 4], seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn single_patch_is_the_field() {
        let f = random_field([1, 1, 4, 4], 1);
        let ps = extract_patches(&f, 4).unwrap();
        assert_eq!(ps.n_patches(), 1);
        assert_eq!(ps.patch_values(0, 0, 0), f.data());
    }

    #[test]
    fn enumerated_layout() {
        let f = Field::from_fn([1, 1, 4, 4], |_, _, x, y| (x * 4 + y) as f64).unwrap();
        let ps = extract_patches(&f, 2).unwrap();
        assert_eq!(ps.shape(), [1, 1, 4, 2, 2]);
        assert_eq!(ps.patch_values(0, 0, 0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(ps.patch_values(0, 0, 1), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(ps.patch_values(0, 0, 2), &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn constant_field_gives_constant_patches() {
        let f = Field::from_fn([2, 3, 4, 6], |_, _, _, _| 0.5).unwrap();
        let ps = extract_patches(&f, 2).unwrap();
        assert!(ps.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn round_trips_bit_identical() {
        for (n, p) in [(8, 2), (16, 16), (16, 4)] {
            let f = random_field([2, 2, n, n], n as u64);
            let back = reassemble_patches(&extract_patches(&f, p).unwrap()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn single_patch_reassembles() {
        let ps = PatchSet::new(vec![1.0, 2.0, 3.0, 4.0], 1, 1, 2, (1, 1), (2, 2)).unwrap();
        let f = reassemble_patches(&ps).unwrap();
        assert_eq!(f.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.shape(), [1, 1, 2, 2]);
    }

    #[test]
    fn rejects_bad_sizes() {
        let f = random_field([1, 1, 6, 6], 0);
        assert!(matches!(extract_patches(&f, 4), Err(Error::Shape(_))));
        assert!(matches!(
            PatchSet::new(vec![0.0; 16], 1, 1, 2, (2, 1), (4, 4)),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn partition_covers_every_index_once(mx in 1usize..4, my in 1usize..4, p in 1usize..5) {
            let (nx, ny) = (mx * p, my * p);
            let f = Field::from_fn([1, 1, nx.max(2), ny.max(2)], |_, _, x, y| (x * ny.max(2) + y) as f64).unwrap();
            let (nx, ny) = (nx.max(2), ny.max(2));
            prop_assume!(nx % p == 0 && ny % p == 0);
            let ps = extract_patches(&f, p).unwrap();
            let mut seen: Vec<f64> = ps.data().to_vec();
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<f64> = (0..nx * ny).map(|i| i as f64).collect();
            prop_assert_eq!(seen, expect);
        }

        #[test]
        fn extraction_is_linear(seed in 0u64..500, a in -2.0f64..2.0) {
            let f = random_field([1, 2, 8, 8], seed);
            let g = random_field([1, 2, 8, 8], seed + 7);
            let lhs = extract_patches(&f.axpby(a, &g, 1.0).unwrap(), 4).unwrap();
            let ef = extract_patches(&f, 4).unwrap();
            let eg = extract_patches(&g, 4).unwrap();
            for i in 0..lhs.data().len() {
                prop_assert_eq!(lhs.data()[i], a * ef.data()[i] + eg.data()[i]);
            }
        }
    }
}
