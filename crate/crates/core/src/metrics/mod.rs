//! Clip quality metrics and report aggregation.

mod cdc;
mod frechet;
mod pixel;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{Frame, VideoClip};

pub use cdc::{cdc, channel_histograms, js_divergence, DEFAULT_STRIDES};
pub use frechet::{
    fid, frechet_distance, gaussian_fit, FeatureExtractorAdapter, StubExtractor, CLAMP_TOLERANCE, SHRINKAGE,
};
pub use pixel::{colorfulness, luma, psnr, ssim, ssim_planes, SsimParams};

pub trait LpipsAdapter: Send + Sync {
    fn id(&self) -> &str;

    fn distance(&self, a: &Frame, b: &Frame) -> Result<f64>;
}

/// Mean absolute pixel difference. Not perceptual; a stand-in for tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLpips;

impl LpipsAdapter for StubLpips {
    fn id(&self) -> &str {
        "stub-l1"
    }

    fn distance(&self, a: &Frame, b: &Frame) -> Result<f64> {
        if a.dims() != b.dims() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
        }
        let n = a.pixels().len() as f64;
        Ok(a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / n)
    }
}

#[derive(Clone, Copy, Default)]
pub struct MetricAdapters<'a> {
    pub extractor: Option<&'a dyn FeatureExtractorAdapter>,
    pub lpips: Option<&'a dyn LpipsAdapter>,
}

/// Per-frame PSNR ceiling used when averaging clips that match on some
/// frames but not all.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub edited: String,
    pub reference: String,
    pub frames: usize,
    pub extractor: Option<String>,
    pub lpips_adapter: Option<String>,
}

/// Metrics of an edited clip against its reference. PSNR is `+∞` when the
/// clips are identical; JSON carries it as the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub fid: Option<f64>,
    pub lpips: Option<f64>,
    pub colorfulness: f64,
    pub cdc: f64,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub reference_colorfulness: f64,
    pub reference_cdc: f64,
    pub metadata: ReportMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Db {
    Finite(f64),
    Text(String),
}

fn ser_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    match Option::<Db>::deserialize(d)? {
        None => Ok(None),
        Some(Db::Finite(x)) => Ok(Some(x)),
        Some(Db::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
        Some(Db::Text(t)) => Err(serde::de::Error::custom(format!("bad PSNR value `{t}`"))),
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Every available metric. Pairwise metrics are averaged over frames;
/// colourfulness and CDC are computed per clip. PSNR is `+∞` only when all
/// frames match; otherwise matching frames count as [`PSNR_CAP_DB`].
pub fn evaluate_clip(
    edited: &VideoClip,
    reference: &VideoClip,
    adapters: MetricAdapters<'_>,
    names: (&str, &str),
) -> Result<MetricReport> {
    if edited.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "edited clip has {} frames, reference {}",
            edited.len(),
            reference.len()
        )));
    }
    let pairs = || edited.frames().iter().zip(reference.frames());
    let psnr = pairs().map(|(a, b)| psnr(a, b)).collect::<Result<Vec<_>>>()?;
    let ssim = pairs().map(|(a, b)| ssim(a, b)).collect::<Result<Vec<_>>>()?;
    let lpips = adapters
        .lpips
        .map(|l| pairs().map(|(a, b)| l.distance(a, b)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let fid = adapters
        .extractor
        .map(|x| fid(edited.frames(), reference.frames(), x))
        .transpose()?;
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fid,
        lpips: lpips.map(|v| mean(v.into_iter())),
        colorfulness: mean(edited.frames().iter().map(colorfulness)),
        cdc: cdc(edited.frames(), &DEFAULT_STRIDES)?,
        psnr: Some(if psnr.iter().all(|v| v.is_infinite()) {
            f64::INFINITY
        } else {
            mean(psnr.into_iter().map(|v| v.min(PSNR_CAP_DB)))
        }),
        ssim: Some(mean(ssim.into_iter())),
        reference_colorfulness: mean(reference.frames().iter().map(colorfulness)),
        reference_cdc: cdc(reference.frames(), &DEFAULT_STRIDES)?,
        metadata: ReportMetadata {
            edited: names.0.to_owned(),
            reference: names.1.to_owned(),
            frames: edited.len(),
            extractor: adapters.extractor.map(|x| x.id().to_owned()),
            lpips_adapter: adapters.lpips.map(|l| l.id().to_owned()),
        },
    })
}

/// Evaluates `(name, edited, reference)` triples on scoped threads, one per
/// clip, keeping input order.
pub fn evaluate_corpus(clips: &[(String, VideoClip, VideoClip)], adapters: MetricAdapters<'_>) -> Result<Vec<MetricReport>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = clips
            .iter()
            .map(|(name, e, r)| s.spawn(move || evaluate_clip(e, r, adapters, (name, "reference"))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("metric thread panicked")).collect()
    })
}

pub const CSV_COLUMNS: [&str; 6] = ["FID", "LPIPS", "Colorfulness", "CDC", "PSNR", "SSIM"];

/// One row per report with a leading `clip` column; missing metrics are
/// empty cells.
pub fn reports_to_csv(reports: &[MetricReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Metric(format!("csv: {e}"));
    let mut header = vec!["clip"];
    header.extend(CSV_COLUMNS);
    w.write_record(&header).map_err(io)?;
    let cell = |v: Option<f64>| v.map(|x| if x.is_infinite() { "inf".to_owned() } else { format!("{x:.4}") }).unwrap_or_default();
    for r in reports {
        w.write_record([
            r.metadata.edited.clone(),
            cell(r.fid),
            cell(r.lpips),
            cell(Some(r.colorfulness)),
            cell(Some(r.cdc)),
            cell(r.psnr),
            cell(r.ssim),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Metric(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Metric(e.to_string()))
}
