//! Single- and multi-region recolouring of one frame.
//!
//! The pipeline runs luminance → superpixel hints → region masks → boundary
//! exclusion → refined hints → colourizer, then scores the result against
//! the two colour objectives: region chroma matches the user's target, and
//! chroma outside every mask matches the original frame.

mod colourizer;

pub use colourizer::{ColourizerAdapter, StubColourizer};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hints::{
    compute_superpixels, superpixels_to_grid_hints, DEFAULT_COMPACTNESS, DEFAULT_SEGMENTS,
};
use crate::masks::{
    build_refined_hints, segment_multi_region, segment_single_region, user_grid_of, RegionSpec,
    SegmenterAdapter, DEFAULT_RADIUS,
};
use crate::types::colour::srgb_to_lab;
use crate::types::{luminance, Frame, HintGrid, InstanceMask, Rgb};

/// Chroma errors are reported as Lab `(a, b)` distances divided by this.
pub const CHROMA_SCALE: f64 = 128.0;
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditOptions {
    pub radius: f64,
    pub tolerance: f64,
    pub n_segments: usize,
    pub compactness: f64,
}

impl Default for EditOptions {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            tolerance: DEFAULT_TOLERANCE,
            n_segments: DEFAULT_SEGMENTS,
            compactness: DEFAULT_COMPACTNESS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOutcome {
    pub region_id: String,
    pub target: Rgb,
    /// Mean Lab `(a, b)` over the region's target colours.
    pub target_chroma: [f64; 2],
    pub surviving_hints: usize,
    /// False when every hint of the region fell to boundary exclusion; the
    /// region then keeps its original colours.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionObjective {
    pub region_id: String,
    pub error: f64,
    pub pixels: usize,
    pub surviving_hints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub regions: Vec<RegionObjective>,
    pub background_error: f64,
    pub background_pixels: usize,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FrameEditResult {
    pub edited: Frame,
    pub masks: Vec<InstanceMask>,
    pub image_hints: HintGrid,
    pub refined_hints: HintGrid,
    pub regions: Vec<RegionOutcome>,
    pub warnings: Vec<String>,
    pub objective_report: ObjectiveReport,
}

fn target_chroma(spec: &RegionSpec) -> [f64; 2] {
    let n = spec.positive().len() as f64;
    let mut acc = [0.0; 2];
    for rgb in spec.positive().values() {
        let lab = srgb_to_lab(*rgb);
        acc[0] += lab[1] / n;
        acc[1] += lab[2] / n;
    }
    acc
}

fn chroma_distance(a: Rgb, b: [f64; 2]) -> f64 {
    let lab = srgb_to_lab(a);
    ((lab[1] - b[0]).powi(2) + (lab[2] - b[1]).powi(2)).sqrt() / CHROMA_SCALE
}

/// Scores an edit: per-region mean chroma distance to the target and mean
/// chroma distance to `original` outside all masks, both normalized by
/// [`CHROMA_SCALE`].
pub fn verify_objectives(result: &FrameEditResult, original: &Frame, tolerance: f64) -> Result<ObjectiveReport> {
    verify(&result.edited, original, &result.masks, &result.regions, tolerance)
}

fn verify(
    edited: &Frame,
    original: &Frame,
    masks: &[InstanceMask],
    regions: &[RegionOutcome],
    tolerance: f64,
) -> Result<ObjectiveReport> {
    if edited.dims() != original.dims() {
        return Err(Error::ShapeMismatch(format!(
            "edited {:?} vs original {:?}",
            edited.dims(),
            original.dims()
        )));
    }
    let mut report = Vec::with_capacity(masks.len());
    for (m, outcome) in masks.iter().zip(regions) {
        let (mut sum, mut n) = (0.0, 0usize);
        for ((r, c), inside) in m.mask.indexed_iter() {
            if *inside {
                sum += chroma_distance(edited.pixel(r, c), outcome.target_chroma);
                n += 1;
            }
        }
        report.push(RegionObjective {
            region_id: outcome.region_id.clone(),
            error: if n > 0 { sum / n as f64 } else { 0.0 },
            pixels: n,
            surviving_hints: outcome.surviving_hints,
        });
    }
    let (h, w) = edited.dims();
    let (mut sum, mut n) = (0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if masks.iter().any(|m| m.mask[[r, c]]) {
                continue;
            }
            let o = srgb_to_lab(original.pixel(r, c));
            sum += chroma_distance(edited.pixel(r, c), [o[1], o[2]]);
            n += 1;
        }
    }
    let background_error = if n > 0 { sum / n as f64 } else { 0.0 };
    let pass = background_error <= tolerance && report.iter().all(|r| r.error <= tolerance);
    Ok(ObjectiveReport {
        regions: report,
        background_error,
        background_pixels: n,
        tolerance,
        pass,
    })
}

fn check_options(opts: &EditOptions) -> Result<()> {
    if opts.tolerance.is_nan() || opts.tolerance < 0.0 {
        return Err(invalid!("tolerance must be non-negative"));
    }
    if opts.radius.is_nan() || opts.radius < 0.0 {
        return Err(invalid!("radius must be non-negative"));
    }
    Ok(())
}

fn finish(
    frame: &Frame,
    specs: &[RegionSpec],
    masks: Vec<InstanceMask>,
    mut warnings: Vec<String>,
    colourizer: &dyn ColourizerAdapter,
    opts: &EditOptions,
) -> Result<FrameEditResult> {
    let stage = |stage: &'static str| move |e: Error| Error::EditFailed { stage, source: Box::new(e) };
    let sp = compute_superpixels(frame, opts.n_segments, opts.compactness).map_err(stage("superpixels"))?;
    let image_hints = superpixels_to_grid_hints(&sp);
    let user = user_grid_of(specs);

    let first = build_refined_hints(&user, &image_hints, &masks, opts.radius).map_err(stage("refine"))?;
    // Regions that lost every hint are left out so they keep their colours.
    let applied: Vec<bool> = first.surviving.iter().map(|n| *n > 0).collect();
    let refinement = if applied.iter().all(|a| *a) {
        first.clone()
    } else {
        let kept: Vec<InstanceMask> = masks
            .iter()
            .zip(&applied)
            .filter(|(_, a)| **a)
            .map(|(m, _)| m.clone())
            .collect();
        build_refined_hints(&user, &image_hints, &kept, opts.radius).map_err(stage("refine"))?
    };
    warnings.extend(first.warnings.iter().cloned());

    let regions: Vec<RegionOutcome> = specs
        .iter()
        .zip(&first.surviving)
        .map(|(spec, n)| RegionOutcome {
            region_id: spec.region_id().to_owned(),
            target: spec.target_colour(),
            target_chroma: target_chroma(spec),
            surviving_hints: *n,
            applied: *n > 0,
        })
        .collect();

    let grey = luminance(frame);
    let edited = colourizer
        .colourize(&grey, &refinement.grid)
        .map_err(stage("colourize"))?;
    if edited.dims() != frame.dims() {
        return Err(stage("colourize")(Error::ShapeMismatch(format!(
            "colourizer `{}` returned {:?} for {:?}",
            colourizer.id(),
            edited.dims(),
            frame.dims()
        ))));
    }
    let edited = edited.with_index(frame.index());
    let objective_report = verify(&edited, frame, &masks, &regions, opts.tolerance)?;
    Ok(FrameEditResult {
        edited,
        masks,
        image_hints,
        refined_hints: refinement.grid,
        regions,
        warnings,
        objective_report,
    })
}

pub fn edit_single_region(
    frame: &Frame,
    spec: &RegionSpec,
    segmenter: &dyn SegmenterAdapter,
    colourizer: &dyn ColourizerAdapter,
    opts: &EditOptions,
) -> Result<FrameEditResult> {
    check_options(opts)?;
    let mask = segment_single_region(frame, spec, segmenter)?;
    finish(frame, std::slice::from_ref(spec), vec![mask], Vec::new(), colourizer, opts)
}

/// Edits every region in one colourizer pass. With no specs the frame is
/// re-colourized from its own superpixel hints.
pub fn edit_multi_region(
    frame: &Frame,
    specs: &[RegionSpec],
    segmenter: &dyn SegmenterAdapter,
    colourizer: &dyn ColourizerAdapter,
    opts: &EditOptions,
) -> Result<FrameEditResult> {
    check_options(opts)?;
    if specs.is_empty() {
        return finish(frame, specs, Vec::new(), Vec::new(), colourizer, opts);
    }
    let out = segment_multi_region(frame, specs, segmenter)?;
    finish(frame, specs, out.masks, out.warnings, colourizer, opts)
}
