//! PNG frames, clip directories and mask files.
//!
//! A clip directory holds `frame_00000.png`, `frame_00001.png`, … and a
//! `clip.json` with the frame rate and dimensions. Directories without
//! `clip.json` are read as every `*.png` in name order at the default rate.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use png::{BitDepth, ColorType, Transformations};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Fps, Frame, InstanceMask, MaskPrompts, VideoClip};

pub const CLIP_MANIFEST: &str = "clip.json";

fn codec(e: impl std::fmt::Display) -> Error {
    Error::Codec(e.to_string())
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let (h, w) = frame.dims();
    let data: Vec<u8> = frame.pixels().iter().map(|v| (v * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(codec)?;
    writer.write_image_data(&data).map_err(codec)?;
    writer.finish().map_err(codec)?;
    Ok(out)
}

/// Decodes any 8- or 16-bit grey, grey+alpha, RGB, RGBA or palette PNG.
/// Alpha is discarded.
pub fn decode_png(bytes: &[u8], index: usize) -> Result<Frame> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(codec)?;
    let size = reader.output_buffer_size().ok_or_else(|| codec("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(codec)?;
    let (h, w) = (info.height as usize, info.width as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(codec(format!("unsupported colour type {other:?}"))),
    };
    let stride = info.line_size;
    let px = Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
        let base = r * stride + c * channels;
        let v = if channels < 3 { buf[base] } else { buf[base + ch] };
        v as f32 / 255.0
    });
    Frame::new(px, index)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    write_atomic(path, &encode_png(frame)?)
}

pub fn read_frame(path: &Path, index: usize) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, index).map_err(|e| match e {
        Error::Codec(m) => Error::Codec(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// 1-bit greyscale PNG, white inside the mask.
pub fn encode_mask_png(mask: &Array2<bool>) -> Result<Vec<u8>> {
    let (h, w) = mask.dim();
    let row_bytes = w.div_ceil(8);
    let mut data = vec![0u8; row_bytes * h];
    for ((r, c), &on) in mask.indexed_iter() {
        if on {
            data[r * row_bytes + c / 8] |= 0x80 >> (c % 8);
        }
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::One);
    let mut writer = enc.write_header().map_err(codec)?;
    writer.write_image_data(&data).map_err(codec)?;
    writer.finish().map_err(codec)?;
    Ok(out)
}

/// Any greyscale PNG; pixels at or above half intensity are inside.
pub fn decode_mask_png(bytes: &[u8]) -> Result<Array2<bool>> {
    let f = decode_png(bytes, 0)?;
    let (h, w) = f.dims();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| f.pixel(r, c)[0] >= 0.5))
}

/// Writes `<stem>.png` and the `<stem>.json` prompt sidecar.
pub fn save_mask(dir: &Path, stem: &str, mask: &InstanceMask) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(format!("{stem}.png")), &encode_mask_png(&mask.mask)?)?;
    write_atomic(
        &dir.join(format!("{stem}.json")),
        &serde_json::to_vec_pretty(&mask.prompts())?,
    )
}

pub fn load_mask(dir: &Path, stem: &str) -> Result<InstanceMask> {
    let png_path = dir.join(format!("{stem}.png"));
    let json_path = dir.join(format!("{stem}.json"));
    let mask = decode_mask_png(&fs::read(&png_path).map_err(|e| Error::io(&png_path, e))?)?;
    let prompts: MaskPrompts =
        serde_json::from_slice(&fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?)?;
    if mask.dim() != (prompts.height, prompts.width) {
        return Err(Error::ShapeMismatch(format!(
            "mask {stem} is {:?}, sidecar says {}x{}",
            mask.dim(),
            prompts.height,
            prompts.width
        )));
    }
    Ok(InstanceMask {
        mask,
        positive_points: prompts.positive_points,
        negative_points: prompts.negative_points,
        region_id: prompts.region_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub fps: Fps,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

pub fn write_clip_dir(dir: &Path, clip: &VideoClip) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in clip.frames().iter().enumerate() {
        write_frame(&dir.join(frame_file_name(i)), f)?;
    }
    let (height, width) = clip.dims();
    let meta = ClipMeta {
        fps: clip.fps(),
        frames: clip.len(),
        height,
        width,
    };
    write_atomic(&dir.join(CLIP_MANIFEST), &serde_json::to_vec_pretty(&meta)?)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_clip_dir(dir: &Path) -> Result<VideoClip> {
    let meta_path = dir.join(CLIP_MANIFEST);
    if meta_path.exists() {
        let meta: ClipMeta =
            serde_json::from_slice(&fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;
        let frames = (0..meta.frames)
            .map(|i| read_frame(&dir.join(frame_file_name(i)), i))
            .collect::<Result<Vec<_>>>()?;
        let clip = VideoClip::new(frames, meta.fps)?;
        if clip.dims() != (meta.height, meta.width) {
            return Err(Error::ShapeMismatch(format!(
                "{}: frames are {:?}, manifest says {}x{}",
                dir.display(),
                clip.dims(),
                meta.height,
                meta.width
            )));
        }
        return Ok(clip);
    }
    let frames = png_files(dir)?
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames, Fps::default())
}
