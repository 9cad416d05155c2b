//! Layer descriptions and the spatial shape law shared by convolution and
//! locally connected layers.

use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    /// Zero padding of `(F - 1) / 2`, output extent equals input extent.
    Same,
    /// No padding, output extent `(L - F) / S + 1`.
    Valid,
}

/// Output extent of a square convolution-like layer.
///
/// Valid borders require `L >= F` and a stride that tiles the input exactly;
/// same borders require an odd field and unit stride.
pub fn output_extent(input: usize, field: usize, stride: usize, border: Border) -> Result<usize> {
    if field == 0 || stride == 0 {
        return dim_err(format!("field ({field}) and stride ({stride}) must be >= 1"));
    }
    match border {
        Border::Valid => {
            if input < field {
                return dim_err(format!("valid border needs L >= F (L={input}, F={field})"));
            }
            if !(input - field).is_multiple_of(stride) {
                return dim_err(format!(
                    "stride {stride} with field {field} does not tile extent {input}"
                ));
            }
            Ok((input - field) / stride + 1)
        }
        Border::Same => {
            if stride != 1 {
                return dim_err("same border requires stride 1");
            }
            if field.is_multiple_of(2) {
                return dim_err(format!("same border requires an odd field, got {field}"));
            }
            Ok(input)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Local2d,
    BatchNorm,
    Upsample2x,
    Relu,
    LeakyRelu,
    Sigmoid,
    MinibatchDisc,
    HadamardEmbed,
}

/// Hyperparameters of one layer. Fields irrelevant to `kind` are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub field: usize,
    pub stride: usize,
    pub maps: usize,
    pub border: Border,
    pub slope: f64,
    pub kernels: usize,
    pub kernel_dim: usize,
    pub bias: bool,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        Self {
            kind,
            field: 1,
            stride: 1,
            maps: 1,
            border: Border::Valid,
            slope: 0.0,
            kernels: 1,
            kernel_dim: 1,
            bias: true,
        }
    }

    pub fn conv2d(maps: usize, field: usize, border: Border) -> Self {
        Self {
            maps,
            field,
            border,
            ..Self::base(LayerKind::Conv2d)
        }
    }

    pub fn local2d(maps: usize, field: usize, bias: bool) -> Self {
        Self {
            maps,
            field,
            bias,
            ..Self::base(LayerKind::Local2d)
        }
    }

    pub fn leaky_relu(slope: f64) -> Self {
        Self {
            slope,
            ..Self::base(LayerKind::LeakyRelu)
        }
    }

    pub fn minibatch_disc(kernels: usize, kernel_dim: usize) -> Self {
        Self {
            kernels,
            kernel_dim,
            ..Self::base(LayerKind::MinibatchDisc)
        }
    }

    pub fn simple(kind: LayerKind) -> Self {
        Self::base(kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.field == 0 || self.stride == 0 || self.maps == 0 {
            return Err(Error::Config(format!(
                "{:?}: field, stride and maps must be >= 1",
                self.kind
            )));
        }
        if self.kind == LayerKind::Local2d && self.border != Border::Valid {
            return Err(Error::Config("locally connected layers use valid borders".into()));
        }
        if self.kind == LayerKind::MinibatchDisc && (self.kernels == 0 || self.kernel_dim == 0) {
            return Err(Error::Config("minibatch discrimination needs B, C >= 1".into()));
        }
        Ok(())
    }

    /// Spatial extent after this layer for a square input of extent `input`.
    pub fn spatial_out(&self, input: usize) -> Result<usize> {
        self.validate()?;
        match self.kind {
            LayerKind::Conv2d | LayerKind::Local2d => {
                output_extent(input, self.field, self.stride, self.border)
            }
            LayerKind::Upsample2x => Ok(2 * input),
            _ => Ok(input),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_extents() {
        assert_eq!(output_extent(25, 5, 1, Border::Valid).unwrap(), 21);
        assert_eq!(output_extent(28, 3, 1, Border::Valid).unwrap(), 26);
        assert_eq!(output_extent(25, 5, 1, Border::Same).unwrap(), 25);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(output_extent(4, 5, 1, Border::Valid).is_err());
        assert!(output_extent(10, 3, 2, Border::Same).is_err());
        assert!(output_extent(10, 4, 1, Border::Same).is_err());
        assert!(output_extent(10, 3, 2, Border::Valid).is_err());
        assert!(output_extent(10, 0, 1, Border::Valid).is_err());
    }

    #[test]
    fn layer_spec_extents() {
        assert_eq!(LayerSpec::simple(LayerKind::Upsample2x).spatial_out(14).unwrap(), 28);
        assert_eq!(LayerSpec::local2d(6, 5, true).spatial_out(18).unwrap(), 14);
        let mut bad = LayerSpec::local2d(6, 5, true);
        bad.border = Border::Same;
        assert!(bad.spatial_out(18).is_err());
    }
}
