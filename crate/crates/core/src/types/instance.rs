use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::frame::Pixel;

/// Binary region mask together with the prompt points that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub mask: Array2<bool>,
    pub positive_points: Vec<Pixel>,
    pub negative_points: Vec<Pixel>,
    pub region_id: String,
}

/// JSON sidecar stored next to a mask PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPrompts {
    pub region_id: String,
    pub height: usize,
    pub width: usize,
    pub positive_points: Vec<Pixel>,
    pub negative_points: Vec<Pixel>,
    pub area: usize,
}

impl InstanceMask {
    pub fn dims(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.mask.get((p.row, p.col)).copied().unwrap_or(false)
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn prompts(&self) -> MaskPrompts {
        let (height, width) = self.dims();
        MaskPrompts {
            region_id: self.region_id.clone(),
            height,
            width,
            positive_points: self.positive_points.clone(),
            negative_points: self.negative_points.clone(),
            area: self.area(),
        }
    }
}
