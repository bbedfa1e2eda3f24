//! Region masks from grid-cell prompts, boundary exclusion and refined hint
//! assembly.

mod edt;
mod segmenter;

pub use edt::{boundary_distance, inner_boundary, squared_edt};
pub use segmenter::{colour_components, SegmenterAdapter, StubSegmenter};

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hints::cell_center;
use crate::types::{Frame, GridCell, Hint, HintGrid, HintSource, InstanceMask, Pixel, Rgb};

pub const DEFAULT_RADIUS: f64 = 20.0;

/// One user-selected region: the cells painted with target colours and,
/// optionally, cells that must stay outside the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionSpecWire", into = "RegionSpecWire")]
pub struct RegionSpec {
    region_id: String,
    positive: BTreeMap<GridCell, Rgb>,
    negative: BTreeSet<GridCell>,
}

#[derive(Serialize, Deserialize)]
struct CellColour {
    r: usize,
    c: usize,
    rgb: Rgb,
}

#[derive(Serialize, Deserialize)]
struct RegionSpecWire {
    region_id: String,
    positive: Vec<CellColour>,
    #[serde(default)]
    negative: Vec<GridCell>,
}

impl TryFrom<RegionSpecWire> for RegionSpec {
    type Error = Error;

    fn try_from(w: RegionSpecWire) -> Result<Self> {
        let mut positive = BTreeMap::new();
        for cc in w.positive {
            let cell = GridCell::new(cc.r, cc.c)?;
            if positive.insert(cell, cc.rgb).is_some() {
                return Err(invalid!("cell {cell} listed twice in region `{}`", w.region_id));
            }
        }
        RegionSpec::new(w.region_id, positive, w.negative.into_iter().collect())
    }
}

impl From<RegionSpec> for RegionSpecWire {
    fn from(s: RegionSpec) -> Self {
        RegionSpecWire {
            region_id: s.region_id,
            positive: s
                .positive
                .into_iter()
                .map(|(cell, rgb)| CellColour {
                    r: cell.row(),
                    c: cell.col(),
                    rgb,
                })
                .collect(),
            negative: s.negative.into_iter().collect(),
        }
    }
}

impl RegionSpec {
    pub fn new(
        region_id: impl Into<String>,
        positive: BTreeMap<GridCell, Rgb>,
        negative: BTreeSet<GridCell>,
    ) -> Result<Self> {
        let region_id = region_id.into();
        if positive.is_empty() {
            return Err(invalid!("region `{region_id}` has no positive cells"));
        }
        if let Some(c) = positive.keys().find(|c| negative.contains(c)) {
            return Err(invalid!("cell {c} is both positive and negative in `{region_id}`"));
        }
        if let Some(rgb) = positive.values().find(|rgb| rgb.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(invalid!("target colour {rgb:?} outside [0, 1] in `{region_id}`"));
        }
        Ok(Self {
            region_id,
            positive,
            negative,
        })
    }

    /// Region whose positive cells are all occupied cells of a user grid.
    pub fn from_grid(region_id: impl Into<String>, grid: &HintGrid) -> Result<Self> {
        let positive = grid.occupied().map(|(c, h)| (c, h.rgb)).collect();
        Self::new(region_id, positive, BTreeSet::new())
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    pub fn positive(&self) -> &BTreeMap<GridCell, Rgb> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<GridCell> {
        &self.negative
    }

    /// Mean target colour over the positive cells.
    pub fn target_colour(&self) -> Rgb {
        let n = self.positive.len() as f32;
        let mut acc = [0.0f32; 3];
        for rgb in self.positive.values() {
            for k in 0..3 {
                acc[k] += rgb[k] / n;
            }
        }
        acc.map(|v| v.clamp(0.0, 1.0))
    }

    /// USER grid holding this region's target colours.
    pub fn user_grid(&self) -> HintGrid {
        let mut g = HintGrid::empty(HintSource::User);
        for (&cell, &rgb) in &self.positive {
            g.set(cell, rgb).expect("colours validated on construction");
        }
        g
    }
}

/// USER grid with the positive cells of every spec; earlier specs win on
/// shared cells.
pub fn user_grid_of(specs: &[RegionSpec]) -> HintGrid {
    let mut g = HintGrid::empty(HintSource::User);
    for spec in specs.iter().rev() {
        for (&cell, &rgb) in spec.positive() {
            g.set(cell, rgb).expect("colours validated on construction");
        }
    }
    g
}

fn centres<'a>(cells: impl IntoIterator<Item = &'a GridCell>, h: usize, w: usize) -> Vec<Pixel> {
    cells.into_iter().map(|&c| cell_center(c, h, w)).collect()
}

fn run_segmenter(
    frame: &Frame,
    region_id: &str,
    positive: Vec<Pixel>,
    negative: Vec<Pixel>,
    segmenter: &dyn SegmenterAdapter,
) -> Result<InstanceMask> {
    let mask = segmenter.segment(frame, &positive, &negative)?;
    if mask.dim() != frame.dims() {
        return Err(Error::ShapeMismatch(format!(
            "segmenter `{}` returned {:?} for a {:?} frame",
            segmenter.id(),
            mask.dim(),
            frame.dims()
        )));
    }
    if let Some(p) = positive.iter().find(|p| !mask[[p.row, p.col]]) {
        return Err(Error::MaskRejected {
            region_id: region_id.to_owned(),
            row: p.row,
            col: p.col,
        });
    }
    Ok(InstanceMask {
        mask,
        positive_points: positive,
        negative_points: negative,
        region_id: region_id.to_owned(),
    })
}

/// Mask for one region prompted by its positive cell centres (and any
/// negative cells the region lists).
pub fn segment_single_region(
    frame: &Frame,
    spec: &RegionSpec,
    segmenter: &dyn SegmenterAdapter,
) -> Result<InstanceMask> {
    let (h, w) = frame.dims();
    run_segmenter(
        frame,
        spec.region_id(),
        centres(spec.positive().keys(), h, w),
        centres(spec.negative(), h, w),
        segmenter,
    )
}

/// Masks for several regions plus notes about contested pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMasks {
    pub masks: Vec<InstanceMask>,
    pub warnings: Vec<String>,
}

/// Each region is prompted with its own cells as positives and every other
/// region's positive cells as negatives. Pixels claimed by several masks stay
/// with the earliest spec.
pub fn segment_multi_region(
    frame: &Frame,
    specs: &[RegionSpec],
    segmenter: &dyn SegmenterAdapter,
) -> Result<RegionMasks> {
    if specs.is_empty() {
        return Err(invalid!("no region specs given"));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !ids.insert(s.region_id())) {
        return Err(invalid!("duplicate region id `{}`", dup.region_id()));
    }
    let (h, w) = frame.dims();
    let mut masks = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let own: BTreeSet<GridCell> = spec.positive().keys().copied().collect();
        let mut negative_cells: BTreeSet<GridCell> = specs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, s)| s.positive().keys().copied())
            .collect();
        negative_cells.extend(spec.negative().iter().copied());
        negative_cells.retain(|c| !own.contains(c));
        masks.push(run_segmenter(
            frame,
            spec.region_id(),
            centres(&own, h, w),
            centres(&negative_cells, h, w),
            segmenter,
        )?);
    }

    let mut warnings = Vec::new();
    let mut claimed = Array2::from_elem((h, w), false);
    for m in &mut masks {
        let mut contested = 0usize;
        ndarray::Zip::from(&mut m.mask).and(&mut claimed).for_each(|px, taken| {
            if *px {
                if *taken {
                    *px = false;
                    contested += 1;
                } else {
                    *taken = true;
                }
            }
        });
        if contested > 0 {
            warnings.push(format!(
                "region `{}` lost {contested} pixels to earlier regions",
                m.region_id
            ));
        }
    }
    Ok(RegionMasks { masks, warnings })
}

/// Points inside `mask` farther than `radius` from its inner boundary.
pub fn exclude_boundary_hints(mask: &InstanceMask, points: &[Pixel], radius: f64) -> Result<Vec<Pixel>> {
    if radius.is_nan() || radius < 0.0 {
        return Err(invalid!("radius must be non-negative, got {radius}"));
    }
    let dist = boundary_distance(&mask.mask);
    Ok(points
        .iter()
        .copied()
        .filter(|p| mask.contains(*p) && dist[[p.row, p.col]] > radius)
        .collect())
}

/// Refined grid together with bookkeeping about which hints survived.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub grid: HintGrid,
    /// Surviving user hints per input mask.
    pub surviving: Vec<usize>,
    pub dropped_outside: Vec<GridCell>,
    pub dropped_near_boundary: Vec<GridCell>,
    pub warnings: Vec<String>,
}

/// Inside masks only user hints that clear the boundary exclusion remain;
/// outside every mask the image hints remain and stray user hints are
/// dropped.
pub fn build_refined_hints(
    user: &HintGrid,
    image: &HintGrid,
    masks: &[InstanceMask],
    radius: f64,
) -> Result<Refinement> {
    if radius.is_nan() || radius < 0.0 {
        return Err(invalid!("radius must be non-negative, got {radius}"));
    }
    let Some(first) = masks.first() else {
        return Ok(Refinement {
            grid: image.clone().with_source(HintSource::Refined),
            surviving: Vec::new(),
            dropped_outside: user.occupied_cells().into_iter().collect(),
            dropped_near_boundary: Vec::new(),
            warnings: if user.occupied_count() > 0 {
                vec![format!("{} user hints dropped: no masks", user.occupied_count())]
            } else {
                Vec::new()
            },
        });
    };
    let (h, w) = first.dims();
    if let Some(m) = masks.iter().find(|m| m.dims() != (h, w)) {
        return Err(Error::ShapeMismatch(format!(
            "mask `{}` is {:?}, expected {:?}",
            m.region_id,
            m.dims(),
            (h, w)
        )));
    }
    let distances: Vec<Array2<f64>> = masks.iter().map(|m| boundary_distance(&m.mask)).collect();

    let mut grid = HintGrid::empty(HintSource::Refined);
    let mut surviving = vec![0usize; masks.len()];
    let mut dropped_outside = Vec::new();
    let mut dropped_near_boundary = Vec::new();
    for cell in GridCell::all() {
        let p = cell_center(cell, h, w);
        let inside: Vec<usize> = (0..masks.len()).filter(|&i| masks[i].contains(p)).collect();
        if inside.is_empty() {
            if let Some(hint) = image.get(cell) {
                grid.insert(cell, *hint)?;
            }
            if user.is_occupied(cell) {
                dropped_outside.push(cell);
            }
            continue;
        }
        let Some(hint) = user.get(cell) else { continue };
        if inside.iter().all(|&i| distances[i][[p.row, p.col]] > radius) {
            grid.insert(
                cell,
                Hint {
                    rgb: hint.rgb,
                    origin: HintSource::User,
                },
            )?;
            for i in inside {
                surviving[i] += 1;
            }
        } else {
            dropped_near_boundary.push(cell);
        }
    }
    let mut warnings = Vec::new();
    if !dropped_outside.is_empty() {
        warnings.push(format!(
            "{} user hints lie outside every mask and were dropped",
            dropped_outside.len()
        ));
    }
    for (m, n) in masks.iter().zip(&surviving) {
        if *n == 0 {
            warnings.push(format!("region `{}` has no surviving user hints", m.region_id));
        }
    }
    Ok(Refinement {
        grid,
        surviving,
        dropped_outside,
        dropped_near_boundary,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GRID_CELLS;

    fn disc_frame(h: usize, w: usize, discs: &[(f64, f64, f64, Rgb)], bg: Rgb) -> Frame {
        Frame::from_fn(h, w, 0, |r, c| {
            for &(y, x, rad, rgb) in discs {
                if (r as f64 - y).powi(2) + (c as f64 - x).powi(2) <= rad * rad {
                    return rgb;
                }
            }
            bg
        })
        .unwrap()
    }

    fn spec(id: &str, cells: &[(usize, usize)], rgb: Rgb) -> RegionSpec {
        let positive = cells.iter().map(|&(r, c)| (GridCell::new(r, c).unwrap(), rgb)).collect();
        RegionSpec::new(id, positive, BTreeSet::new()).unwrap()
    }

    const RED: Rgb = [0.8, 0.2, 0.2];
    const BLUE: Rgb = [0.2, 0.3, 0.8];
    const GREY: Rgb = [0.5, 0.5, 0.5];

    #[test]
    fn spec_validation_and_json() {
        let cell = GridCell::new(1, 1).unwrap();
        assert!(RegionSpec::new("a", BTreeMap::new(), BTreeSet::new()).is_err());
        let pos = BTreeMap::from([(cell, RED)]);
        assert!(RegionSpec::new("a", pos.clone(), BTreeSet::from([cell])).is_err());
        assert!(RegionSpec::new("a", BTreeMap::from([(cell, [2.0, 0.0, 0.0])]), BTreeSet::new()).is_err());

        let s = RegionSpec::new("a", pos, BTreeSet::from([GridCell::new(3, 4).unwrap()])).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"region_id": "a", "positive": [{"r": 1, "c": 1, "rgb": [0.8f32, 0.2f32, 0.2f32]}], "negative": [[3, 4]]})
        );
        assert_eq!(serde_json::from_value::<RegionSpec>(v).unwrap(), s);
    }

    #[test]
    fn single_region_disc_mask() {
        let f = disc_frame(128, 128, &[(64.0, 64.0, 30.0, RED)], GREY);
        let s = spec("disc", &[(7, 7)], BLUE);
        let m = segment_single_region(&f, &s, &StubSegmenter::default()).unwrap();
        for ((r, c), v) in m.mask.indexed_iter() {
            assert_eq!(*v, f.pixel(r, c) == RED);
        }
        assert_eq!(m.positive_points, vec![Pixel::new(60, 60)]);
    }

    #[test]
    fn uniform_frame_mask_is_full() {
        let f = Frame::filled(64, 64, GREY).unwrap();
        let m = segment_single_region(&f, &spec("all", &[(3, 3)], RED), &StubSegmenter::default()).unwrap();
        assert!(m.mask.iter().all(|v| *v));
    }

    #[test]
    fn rejected_when_positive_uncovered() {
        let f = disc_frame(128, 128, &[(64.0, 64.0, 30.0, RED)], GREY);
        let mut positive = BTreeMap::new();
        positive.insert(GridCell::new(7, 7).unwrap(), BLUE);
        let s = RegionSpec::new("x", positive, BTreeSet::from([GridCell::new(8, 8).unwrap()])).unwrap();
        match segment_single_region(&f, &s, &StubSegmenter::default()) {
            Err(Error::MaskRejected { region_id, .. }) => assert_eq!(region_id, "x"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn multi_region_cross_wires_prompts() {
        let f = disc_frame(128, 192, &[(64.0, 48.0, 30.0, RED), (64.0, 144.0, 30.0, BLUE)], GREY);
        let green: Vec<_> = [(6, 3), (7, 3), (8, 3), (7, 4), (7, 5)].to_vec();
        let orange: Vec<_> = [(6, 11), (7, 11), (8, 11), (7, 12)].to_vec();
        let a = spec("r1", &green, [0.2, 0.7, 0.2]);
        let b = spec("r2", &orange, [0.9, 0.5, 0.1]);
        let out = segment_multi_region(&f, &[a, b], &StubSegmenter::default()).unwrap();
        let (m1, m2) = (&out.masks[0], &out.masks[1]);
        assert_eq!((m1.positive_points.len(), m1.negative_points.len()), (5, 4));
        assert_eq!((m2.positive_points.len(), m2.negative_points.len()), (4, 5));
        assert_eq!(m1.positive_points, m2.negative_points);
        assert_eq!(m2.positive_points, m1.negative_points);
        for ((r, c), v) in m1.mask.indexed_iter() {
            assert_eq!(*v, f.pixel(r, c) == RED);
            assert_eq!(m2.mask[[r, c]], f.pixel(r, c) == BLUE);
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn duplicate_region_loses_everything() {
        let f = disc_frame(128, 128, &[(64.0, 64.0, 30.0, RED)], GREY);
        let a = spec("a", &[(7, 7)], BLUE);
        let b = spec("b", &[(7, 7)], BLUE);
        let out = segment_multi_region(&f, &[a, b], &StubSegmenter::default()).unwrap();
        assert!(out.masks[0].area() > 0);
        assert_eq!(out.masks[1].area(), 0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn exclusion_on_full_mask() {
        let mask = InstanceMask {
            mask: Array2::from_elem((64, 64), true),
            positive_points: vec![],
            negative_points: vec![],
            region_id: "all".into(),
        };
        let pts: Vec<Pixel> = (0..64).map(|i| Pixel::new(i, 32)).collect();
        let kept = exclude_boundary_hints(&mask, &pts, 20.0).unwrap();
        assert_eq!(kept, (21..=42).map(|i| Pixel::new(i, 32)).collect::<Vec<_>>());
        let kept0 = exclude_boundary_hints(&mask, &pts, 0.0).unwrap();
        assert_eq!(kept0.len(), 62, "edge pixels have distance 0 and drop");
        assert!(exclude_boundary_hints(&mask, &pts, -1.0).is_err());
    }

    #[test]
    fn refinement_without_masks_is_image_grid() {
        let image = crate::hints::superpixels_to_grid_hints(
            &crate::hints::compute_superpixels(&Frame::filled(32, 32, GREY).unwrap(), 16, 10.0).unwrap(),
        );
        let r = build_refined_hints(&HintGrid::empty(HintSource::User), &image, &[], 20.0).unwrap();
        assert_eq!(r.grid.source(), HintSource::Refined);
        assert_eq!(r.grid.occupied_count(), GRID_CELLS);
        for cell in GridCell::all() {
            assert_eq!(r.grid.colour(cell), image.colour(cell));
        }
    }

    #[test]
    fn one_user_cell_inside_disc() {
        let f = disc_frame(256, 256, &[(128.0, 128.0, 60.0, RED)], GREY);
        let s = spec("disc", &[(7, 7)], BLUE);
        let m = segment_single_region(&f, &s, &StubSegmenter::default()).unwrap();
        let image = crate::hints::superpixels_to_grid_hints(
            &crate::hints::compute_superpixels(&f, 256, 10.0).unwrap(),
        );
        let r = build_refined_hints(&s.user_grid(), &image, std::slice::from_ref(&m), 20.0).unwrap();
        let in_mask = GridCell::all().filter(|&c| m.contains(cell_center(c, 256, 256))).count();
        assert_eq!(r.grid.occupied_count(), GRID_CELLS - in_mask + 1);
        assert_eq!(r.surviving, vec![1]);
        assert_eq!(r.grid.get(GridCell::new(7, 7).unwrap()).unwrap().origin, HintSource::User);
    }
}
