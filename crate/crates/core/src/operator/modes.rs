use crate::error::{Error, Result};
use crate::tensor_fft::half_len;

/// Which Fourier modes a spectral convolution keeps on an `nx x ny` grid.
///
/// Along x the `ceil(Kx/2)` lowest non-negative and `floor(Kx/2)` highest
/// (negative) frequencies are kept; along the half-spectrum y axis the first
/// `Ky/2 + 1` bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSelection {
    nx: usize,
    ny: usize,
    nyr: usize,
    kx: Vec<usize>,
    kyr: usize,
}

impl ModeSelection {
    pub fn new(nx: usize, ny: usize, modes_x: usize, modes_y: usize) -> Result<Self> {
        let nyr = half_len(ny);
        let kyr = modes_y / 2 + 1;
        if modes_x == 0 || modes_y == 0 {
            return Err(Error::config("mode counts must be positive"));
        }
        if modes_x > nx || kyr > nyr {
            return Err(Error::shape(format!(
                "modes ({modes_x}, {modes_y}) exceed the {nx}x{ny} grid"
            )));
        }
        let pos = modes_x.div_ceil(2);
        let neg = modes_x / 2;
        let kx = (0..pos).chain(nx - neg..nx).collect();
        Ok(Self { nx, ny, nyr, kx, kyr })
    }

    /// Every mode of a `p x p` patch.
    pub fn full(p: usize) -> Result<Self> {
        Self::new(p, p, p, p)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nyr(&self) -> usize {
        self.nyr
    }

    /// Retained row indices of the spectrum, in weight order.
    pub fn kx(&self) -> &[usize] {
        &self.kx
    }

    pub fn kyr(&self) -> usize {
        self.kyr
    }
}

/// Shape of the complex weight tensor for `(modes_x, modes_y)`.
pub fn spectral_weight_shape(cin: usize, cout: usize, modes_x: usize, modes_y: usize) -> Vec<usize> {
    vec![cin, cout, modes_x, modes_y / 2 + 1, 2]
}
