//! Dense overlapping patch grid.
//!
//! Patches are fixed-size square windows at stride 1 whose pixels are all
//! masked-in; windows touching masked-out pixels are excluded entirely.
//! Anchors are enumerated in scanline order, which fixes the patch index
//! order used by every deterministic reduction downstream.

use crate::field::GridDims;

#[derive(Debug, Clone)]
pub struct PatchGrid {
    width: usize,
    height: usize,
    side: usize,
    anchors: Vec<(u32, u32)>,
}

impl PatchGrid {
    /// Build the grid over an image-shaped mask.
    pub fn build(width: usize, height: usize, mask: &[bool], side: usize) -> Self {
        assert_eq!(mask.len(), width * height);
        assert!(side >= 1);
        let mut anchors = Vec::new();
        if width < side || height < side {
            return Self {
                width,
                height,
                side,
                anchors,
            };
        }
        // Integral image of masked-out counts for O(1) window tests.
        let iw = width + 1;
        let mut integral = vec![0u32; iw * (height + 1)];
        for y in 0..height {
            for x in 0..width {
                let bad = if mask[y * width + x] { 0 } else { 1 };
                integral[(y + 1) * iw + (x + 1)] =
                    integral[y * iw + (x + 1)] + integral[(y + 1) * iw + x]
                        - integral[y * iw + x]
                        + bad;
            }
        }
        let window_bad = |ax: usize, ay: usize| {
            integral[(ay + side) * iw + (ax + side)] + integral[ay * iw + ax]
                - integral[ay * iw + (ax + side)]
                - integral[(ay + side) * iw + ax]
        };
        for ay in 0..=(height - side) {
            for ax in 0..=(width - side) {
                if window_bad(ax, ay) == 0 {
                    anchors.push((ax as u32, ay as u32));
                }
            }
        }
        Self {
            width,
            height,
            side,
            anchors,
        }
    }

    pub fn for_grid<G: GridDims>(grid: &G, mask: &[bool], side: usize) -> Self {
        Self::build(grid.grid_width(), grid.grid_height(), mask, side)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn image_width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn image_height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn anchor(&self, m: usize) -> (usize, usize) {
        let (x, y) = self.anchors[m];
        (x as usize, y as usize)
    }

    pub fn anchors(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.anchors.iter().map(|&(x, y)| (x as usize, y as usize))
    }

    /// Flat image indices of patch `m`, patch scanline order.
    #[inline]
    pub fn pixel_indices(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        let (ax, ay) = self.anchor(m);
        let w = self.width;
        let side = self.side;
        (0..side).flat_map(move |j| (0..side).map(move |i| (ay + j) * w + ax + i))
    }

    /// Number of patches covering each pixel.
    pub fn coverage(&self) -> Vec<u32> {
        let mut cov = vec![0u32; self.width * self.height];
        for m in 0..self.len() {
            for idx in self.pixel_indices(m) {
                cov[idx] += 1;
            }
        }
        cov
    }
}
