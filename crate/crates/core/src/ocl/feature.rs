use crate::model::Mask;
use crate::Scalar;

use super::OclError;

/// Spatial grid of `channels`-vectors covering an image at `stride` pixels per cell.
///
/// Cell `(gx, gy)` covers pixels `[gx*stride, (gx+1)*stride) x [gy*stride, (gy+1)*stride)`
/// clipped to the image, so the grid is `ceil(W/stride) x ceil(H/stride)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    grid_width: usize,
    grid_height: usize,
    stride: u32,
    image_size: (u32, u32),
    /// Cell-major: `data[(gy * grid_width + gx) * channels + c]`.
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, image_size: (u32, u32), stride: u32, data: Vec<T>) -> Result<Self, OclError> {
        if channels == 0 || stride == 0 || image_size.0 == 0 || image_size.1 == 0 {
            return Err(OclError::InvalidFeatureMap("zero channels, stride or image size".into()));
        }
        let grid_width = image_size.0.div_ceil(stride) as usize;
        let grid_height = image_size.1.div_ceil(stride) as usize;
        if data.len() != grid_width * grid_height * channels {
            return Err(OclError::InvalidFeatureMap(format!(
                "{} values for a {grid_width}x{grid_height}x{channels} grid",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OclError::InvalidFeatureMap("non-finite feature value".into()));
        }
        Ok(Self {
            channels,
            grid_width,
            grid_height,
            stride,
            image_size,
            data,
        })
    }

    /// Build from `rows[gy][gx] = vector`, one pixel per cell.
    pub fn from_cells(rows: &[Vec<Vec<T>>]) -> Result<Self, OclError> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        let c = rows.first().and_then(|r| r.first()).map_or(0, |v| v.len());
        let data: Vec<T> = rows.iter().flatten().flatten().copied().collect();
        Self::new(c, (w as u32, h as u32), 1, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.grid_width, self.grid_height)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn cell(&self, gx: usize, gy: usize) -> &[T] {
        let start = (gy * self.grid_width + gx) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * alpha).collect(),
            ..self.clone()
        }
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive ends) covered by a cell.
    pub fn cell_bounds(&self, gx: usize, gy: usize) -> (u32, u32, u32, u32) {
        let s = self.stride;
        let x0 = gx as u32 * s;
        let y0 = gy as u32 * s;
        (x0, y0, (x0 + s).min(self.image_size.0), (y0 + s).min(self.image_size.1))
    }

    /// Cells selected by a pixel-resolution mask: those at least half covered
    /// (relative to the cell's in-image area). When none qualifies, the cell
    /// holding the mask centroid. Row-major order.
    pub fn select_cells(&self, mask: &Mask) -> Result<Vec<(usize, usize)>, OclError> {
        if mask.dimensions() != self.image_size {
            return Err(OclError::MaskSize {
                mask: mask.dimensions(),
                image: self.image_size,
            });
        }
        if mask.is_empty() {
            return Err(OclError::EmptyMask);
        }
        let mut cells = Vec::new();
        for gy in 0..self.grid_height {
            for gx in 0..self.grid_width {
                let (x0, y0, x1, y1) = self.cell_bounds(gx, gy);
                let mut covered = 0u32;
                for y in y0..y1 {
                    for x in x0..x1 {
                        covered += mask.get(x, y) as u32;
                    }
                }
                let area = (x1 - x0) * (y1 - y0);
                if 2 * covered >= area && covered > 0 {
                    cells.push((gx, gy));
                }
            }
        }
        if cells.is_empty() {
            // centroid of the covered area, so pixel centers
            let (cx, cy) = mask.centroid().expect("non-empty mask");
            let gx = (((cx + 0.5) / self.stride as f64) as usize).min(self.grid_width - 1);
            let gy = (((cy + 0.5) / self.stride as f64) as usize).min(self.grid_height - 1);
            cells.push((gx, gy));
        }
        Ok(cells)
    }
}

/// Mean feature vector over the cells a mask selects (see [`FeatureMap::select_cells`]).
pub fn masked_average_pool<T: Scalar>(fm: &FeatureMap<T>, mask: &Mask) -> Result<Vec<T>, OclError> {
    let cells = fm.select_cells(mask)?;
    let mut acc = vec![T::zero(); fm.channels()];
    for &(gx, gy) in &cells {
        for (a, &v) in acc.iter_mut().zip(fm.cell(gx, gy)) {
            *a += v;
        }
    }
    let n = T::from_usize(cells.len()).expect("cell count fits the scalar");
    Ok(acc.into_iter().map(|a| a / n).collect())
}
