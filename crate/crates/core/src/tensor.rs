//! Feature maps and binary masks.
//!
//! A [`FeatureMap`] is indexed as `(batch, channels, height, width)` but is
//! stored channels-last, so the per-position channel vector is contiguous and
//! every channel-wise linear map is a single matrix product over rows.

use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// (batch, height, width, channels)
    data: Array4<f64>,
}

impl FeatureMap {
    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self { data: Array4::zeros((batch, height, width, channels)) }
    }

    pub fn from_elem(shape: [usize; 4], value: f64) -> Self {
        let [b, c, h, w] = shape;
        Self { data: Array4::from_elem((b, h, w, c), value) }
    }

    /// Builds a map from an array in `(batch, channels, height, width)` order.
    pub fn from_nchw(array: &Array4<f64>) -> Self {
        let data = array.view().permuted_axes([0, 2, 3, 1]).as_standard_layout().into_owned();
        Self { data }
    }

    /// Builds a map from an array in `(batch, height, width, channels)` order.
    pub fn from_nhwc(data: Array4<f64>) -> Self {
        Self { data: data.as_standard_layout().into_owned() }
    }

    pub fn from_fn<F>(shape: [usize; 4], mut f: F) -> Self
    where
        F: FnMut([usize; 4]) -> f64,
    {
        let [b, c, h, w] = shape;
        let data = Array4::from_shape_fn((b, h, w, c), |(bi, y, x, ci)| f([bi, ci, y, x]));
        Self { data }
    }

    pub(crate) fn from_rows(rows: Array2<f64>, batch: usize, height: usize, width: usize) -> Self {
        let c = rows.ncols();
        let data = rows
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((batch, height, width, c))
            .expect("row count matches batch*height*width");
        Self { data }
    }

    pub fn to_nchw(&self) -> Array4<f64> {
        self.data.view().permuted_axes([0, 3, 1, 2]).as_standard_layout().into_owned()
    }

    /// `[batch, channels, height, width]`
    pub fn shape(&self) -> [usize; 4] {
        let (b, h, w, c) = self.data.dim();
        [b, c, h, w]
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().3
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[[b, y, x, c]]
    }

    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, value: f64) {
        self.data[[b, y, x, c]] = value;
    }

    /// Channels-last storage, `(batch, height, width, channels)`.
    pub fn nhwc(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn nhwc_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn into_nhwc(self) -> Array4<f64> {
        self.data
    }

    /// One row per spatial position, one column per channel.
    pub fn rows(&self) -> ArrayView2<'_, f64> {
        let (b, h, w, c) = self.data.dim();
        self.data.view().into_shape_with_order((b * h * w, c)).expect("standard layout")
    }

    pub fn rows_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let (b, h, w, c) = self.data.dim();
        self.data.view_mut().into_shape_with_order((b * h * w, c)).expect("standard layout")
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    /// Selects a single batch element.
    pub fn sample(&self, index: usize) -> FeatureMap {
        FeatureMap { data: self.data.index_axis(Axis(0), index).insert_axis(Axis(0)).to_owned() }
    }

    /// Stacks maps along the batch axis.
    pub fn stack(items: &[FeatureMap]) -> Result<FeatureMap> {
        let first = items.first().ok_or_else(|| Error::shape("cannot stack zero feature maps"))?;
        let [_, c, h, w] = first.shape();
        for item in items {
            let [_, ci, hi, wi] = item.shape();
            if (ci, hi, wi) != (c, h, w) {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    first.shape(),
                    item.shape()
                )));
            }
        }
        let views: Vec<_> = items.iter().map(|m| m.data.view()).collect();
        let data = ndarray::concatenate(Axis(0), &views).expect("shapes checked");
        Ok(FeatureMap { data: data.as_standard_layout().into_owned() })
    }

    /// Concatenates two maps along the channel axis, `a` first.
    pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
        let [ba, _, ha, wa] = a.shape();
        let [bb, _, hb, wb] = b.shape();
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(Error::shape(format!(
                "channel concat needs equal batch and spatial dims, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let data = ndarray::concatenate(Axis(3), &[a.data.view(), b.data.view()]).expect("checked");
        Ok(FeatureMap { data: data.as_standard_layout().into_owned() })
    }

    /// Splits channels `[0, at)` and `[at, C)`.
    pub fn split_channels(&self, at: usize) -> (FeatureMap, FeatureMap) {
        let (left, right) = self.data.view().split_at(Axis(3), at);
        (
            FeatureMap { data: left.as_standard_layout().into_owned() },
            FeatureMap { data: right.as_standard_layout().into_owned() },
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap { data: self.data.mapv(f) }
    }

    pub fn add(&self, other: &FeatureMap) -> FeatureMap {
        FeatureMap { data: &self.data + &other.data }
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        self.data += &other.data;
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// A per-image `{0, 1}` mask, `(height, width)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    data: Array2<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { data: Array2::zeros((height, width)) }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { data: Array2::ones((height, width)) }
    }

    /// Fails if any entry is not 0 or 1.
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::NonBinary(format!("mask contains value {v}")));
        }
        Ok(Self { data })
    }

    /// Maps every value above `threshold` to 1, everything else to 0.
    pub fn binarize(values: &Array2<u8>, threshold: u8) -> Self {
        Self { data: values.mapv(|v| u8::from(v > threshold)) }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self { data: Array2::from_shape_fn((height, width), |(y, x)| u8::from(f(y, x))) }
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[[y, x]] == 1
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[[y, x]] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.data.iter().map(|&v| v == 1)
    }

    /// Flattened row-major values as reals.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}
