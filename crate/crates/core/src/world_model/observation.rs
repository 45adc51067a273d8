use crate::backbone::Tensor;
use crate::{Error, Result, Scalar};

/// Image layout `channels × height × width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObsShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ObsShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pixel image with intensities in `[0, 1]`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T = f32> {
    shape: ObsShape,
    pixels: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    /// Validates shape and range.
    pub fn new(shape: ObsShape, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::dim("observation pixels", shape.len(), pixels.len()));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !p.is_finite() || *p < T::zero() || *p > T::one())
        {
            return Err(Error::InvalidArgument(format!(
                "pixel {i} = {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self { shape, pixels })
    }

    pub fn zeros(shape: ObsShape) -> Self {
        Self {
            shape,
            pixels: vec![T::zero(); shape.len()],
        }
    }

    pub fn shape(&self) -> ObsShape {
        self.shape
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> T {
        self.pixels[(channel * self.shape.height + row) * self.shape.width + col]
    }

    pub fn cast<U: Scalar>(&self) -> Observation<U> {
        Observation {
            shape: self.shape,
            pixels: self.pixels.iter().map(|&p| U::c(p.as_f64())).collect(),
        }
    }

    /// The image as a `1 × len` row.
    pub fn to_row<U: Scalar>(&self) -> Tensor<U> {
        Tensor::row_vector(self.pixels.iter().map(|&p| U::c(p.as_f64())).collect())
    }
}
