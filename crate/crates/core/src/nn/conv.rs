//! Valid (unpadded) strided convolution lowered to GEMM via im2col.

use crate::real::Real;

/// Output extent of a valid convolution, `None` if the kernel does not fit.
pub fn valid_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

/// Geometry of one convolution applied to a single `[c, h, w]` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Rows of the column matrix: `channels * kernel_h * kernel_w`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Unfolds `image` into `col`, laid out `[patch_len, positions]` row-major.
    pub fn im2col<T: Real>(&self, image: &[T], col: &mut [T]) {
        let p = self.positions();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let src = &plane[(oy * self.stride + ky) * self.width + kx..];
                        let dst_row = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if self.stride == 1 {
                            dst_row.copy_from_slice(&src[..self.out_w]);
                        } else {
                            for (ox, d) in dst_row.iter_mut().enumerate() {
                                *d = src[ox * self.stride];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: accumulates `col` back into `image`.
    pub fn col2im<T: Real>(&self, col: &[T], image: &mut [T]) {
        let p = self.positions();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let base = (oy * self.stride + ky) * self.width + kx;
                        let src_row = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, &v) in src_row.iter().enumerate() {
                            plane[base + ox * self.stride] += v;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn extents() {
        assert_eq!(valid_extent(32, 5, 1), Some(28));
        assert_eq!(valid_extent(28, 5, 1), Some(24));
        assert_eq!(valid_extent(32, 3, 2), Some(15));
        assert_eq!(valid_extent(2, 3, 1), None);
        assert_eq!(valid_extent(5, 3, 0), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeometry {
            channels: 2,
            height: 5,
            width: 4,
            kernel_h: 2,
            kernel_w: 3,
            stride: 2,
            out_h: 2,
            out_w: 1,
        };
        let x: alloc::vec::Vec<f64> = (0..g.image_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: alloc::vec::Vec<f64> = (0..g.patch_len() * g.positions()).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut col = vec![0.0; y.len()];
        g.im2col(&x, &mut col);
        let mut back = vec![0.0; x.len()];
        g.col2im(&y, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
