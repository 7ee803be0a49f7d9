use crate::error::{Error, Result};
use crate::neuralcore::{ConvMode, PoolRounding};

pub const CONV_LAYERS: usize = 6;
pub const FC_UNITS: [usize; 2] = [64, 2];
pub const CLASS_COUNT: usize = 2;
pub const DEFAULT_FILTERS: [usize; CONV_LAYERS] = [16, 16, 32, 32, 64, 64];
pub const DEFAULT_PATCH_SIZE: usize = 49;
pub const DEFAULT_DROPOUT_KEEP: f64 = 0.5;
/// Conv layers followed by a 2x2 max pool.
pub const POOLED_LAYERS: usize = 2;

/// Architecture shared by the Detector and the Segmentator: six 3x3 conv
/// layers (the first two followed by max pooling), then fully connected
/// layers of 64 and 2 units.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub patch_size: usize,
    pub conv_mode: ConvMode,
    pub filter_counts: [usize; CONV_LAYERS],
    pub fc_units: [usize; 2],
    pub dropout_keep: f64,
    pub class_count: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::new(DEFAULT_PATCH_SIZE, ConvMode::Same)
    }
}

impl NetworkSpec {
    pub fn new(patch_size: usize, conv_mode: ConvMode) -> Self {
        Self {
            patch_size,
            conv_mode,
            filter_counts: DEFAULT_FILTERS,
            fc_units: FC_UNITS,
            dropout_keep: DEFAULT_DROPOUT_KEEP,
            class_count: CLASS_COUNT,
        }
    }

    pub fn with_filters(mut self, filters: [usize; CONV_LAYERS]) -> Self {
        self.filter_counts = filters;
        self
    }

    pub fn pool_rounding(&self) -> PoolRounding {
        match self.conv_mode {
            ConvMode::Valid => PoolRounding::Floor,
            ConvMode::Same => PoolRounding::Ceil,
        }
    }

    /// Spatial extent at the input and after every conv / pool stage:
    /// `[input, conv1, pool1, conv2, pool2, conv3, conv4, conv5, conv6]`.
    /// `None` once the chain collapses below one pixel.
    pub fn spatial_chain(&self) -> Option<Vec<usize>> {
        let rounding = self.pool_rounding();
        let mut chain = vec![self.patch_size];
        let mut e = self.patch_size;
        for layer in 0..CONV_LAYERS {
            e = self.conv_mode.output_extent(e)?;
            chain.push(e);
            if layer < POOLED_LAYERS {
                if e < 2 {
                    return None;
                }
                e = rounding.output_extent(e);
                chain.push(e);
            }
        }
        Some(chain)
    }

    /// Spatial extent of the maps entering the first fully connected layer.
    pub fn pre_fc_extent(&self) -> Option<usize> {
        self.spatial_chain().and_then(|c| c.last().copied())
    }

    /// Width of the flattened input to the first fully connected layer.
    pub fn flat_features(&self) -> Option<usize> {
        self.pre_fc_extent()
            .map(|e| e * e * self.filter_counts[CONV_LAYERS - 1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch size {} must be odd so a central pixel exists",
                self.patch_size
            )));
        }
        if self.filter_counts.contains(&0) {
            return Err(Error::invalid("filter counts must be positive"));
        }
        if self.fc_units != FC_UNITS {
            return Err(Error::invalid(format!(
                "fully connected widths must be {FC_UNITS:?}, got {:?}",
                self.fc_units
            )));
        }
        if self.class_count != CLASS_COUNT {
            return Err(Error::invalid(format!("class count must be {CLASS_COUNT}")));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::invalid("dropout keep probability must lie in (0, 1]"));
        }
        if self.pre_fc_extent().is_none() {
            return Err(Error::invalid(format!(
                "patch size {} is too small for the {} convolution chain",
                self.patch_size, self.conv_mode
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_chain_for_49() {
        let spec = NetworkSpec::new(49, ConvMode::Valid);
        assert_eq!(spec.spatial_chain().unwrap(), vec![49, 47, 23, 21, 10, 8, 6, 4, 2]);
        assert_eq!(spec.pre_fc_extent(), Some(2));
    }

    #[test]
    fn same_chain_for_49() {
        let spec = NetworkSpec::new(49, ConvMode::Same);
        assert_eq!(spec.spatial_chain().unwrap(), vec![49, 49, 25, 25, 13, 13, 13, 13, 13]);
        assert_eq!(spec.flat_features(), Some(13 * 13 * 64));
    }

    #[test]
    fn too_small_for_valid_rejected() {
        assert!(NetworkSpec::new(41, ConvMode::Valid).validate().is_err());
        assert!(NetworkSpec::new(43, ConvMode::Valid).validate().is_ok());
        assert!(NetworkSpec::new(9, ConvMode::Same).validate().is_ok());
    }

    #[test]
    fn even_patch_rejected() {
        assert!(NetworkSpec::new(48, ConvMode::Same).validate().is_err());
    }
}
