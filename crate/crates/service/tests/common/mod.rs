#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use vidtint::hints::cell_of_pixel;
use vidtint::io::write_clip_dir;
use vidtint::masks::RegionSpec;
use vidtint::synth::{Scene, Shape};
use vidtint::types::{Fps, Pixel, VideoClip};

pub const HEIGHT: usize = 96;
pub const WIDTH: usize = 160;
pub const RADIUS: f64 = 36.0;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vidtint")
}

fn scene(i: usize) -> Scene {
    Scene {
        height: HEIGHT,
        width: WIDTH,
        background: [0.8, 0.8, 0.8],
        shapes: vec![(
            Shape::Disc {
                cy: 48.0,
                cx: 60.0 + 3.0 * i as f64,
                radius: RADIUS,
            },
            [0.55, 0.35, 0.35],
        )],
    }
}

/// A reddish disc drifting right over a flat grey background.
pub fn clip(n: usize) -> VideoClip {
    let frames = (0..n).map(|i| scene(i).render(i).unwrap()).collect();
    VideoClip::new(frames, Fps::new(12, 1).unwrap()).unwrap()
}

pub fn write_clip(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("clip");
    write_clip_dir(&out, &clip(n)).unwrap();
    out
}

/// Paints the grid cell under the disc centre of frame `i` with `rgb`.
pub fn disc_region(i: usize, rgb: [f32; 3]) -> RegionSpec {
    let (r, c) = scene(i).shapes[0].0.centre();
    let cell = cell_of_pixel(Pixel::new(r, c), HEIGHT, WIDTH).unwrap();
    RegionSpec::new("disc", BTreeMap::from([(cell, rgb)]), BTreeSet::new()).unwrap()
}

pub const BLUE: [f32; 3] = [0.33, 0.4, 0.58];
pub const GREEN: [f32; 3] = [0.35, 0.46, 0.33];

/// Short schedule so a job finishes in about a second.
pub const STEP_ARGS: [&str; 10] = [
    "--steps", "12", "--tau-conv", "3", "--tau-sa", "3", "--tau-ta", "6", "--tau-idx", "2",
];

pub fn fast_config() -> serde_json::Value {
    serde_json::json!({ "steps": 12, "tau_conv": 3, "tau_sa": 3, "tau_ta": 6, "tau_idx": 2 })
}

pub fn cli(store: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .arg("--store")
        .arg(store)
        .args(args)
        .env("DC_STUB_FRAMES", "8")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn cli_json(store: &Path, args: &[&str]) -> serde_json::Value {
    let out = cli(store, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Server {
    pub fn start(store: &Path, delay_ms: u64) -> Server {
        let mut child = Command::new(bin())
            .arg("--store")
            .arg(store)
            .args(["serve", "--addr", "127.0.0.1:0", "--workers", "1"])
            .env("DC_STUB_FRAMES", "8")
            .env("DC_STUB_DELAY_MS", delay_ms.to_string())
            .env("RUST_LOG", "error")
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner `{line}`"))
            .to_owned();
        Server { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.kill();
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(ureq::Agent::config_builder().http_status_as_error(false).build())
}

pub fn multipart(pngs: &[Vec<u8>], fps: Option<&str>) -> (String, Vec<u8>) {
    let boundary = "vidtint-test-boundary";
    let mut body = Vec::new();
    if let Some(fps) = fps {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"fps\"\r\n\r\n{fps}\r\n").bytes());
    }
    for (i, png) in pngs.iter().enumerate() {
        body.extend(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"frames\"; filename=\"{i}.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .bytes(),
        );
        body.extend(png);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{boundary}--\r\n").bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// Polls a job until it leaves PENDING/RUNNING.
pub fn wait_for_job(agent: &ureq::Agent, server: &Server, job: &str, limit: Duration) -> serde_json::Value {
    let start = Instant::now();
    loop {
        let rec: serde_json::Value = agent
            .get(&server.url(&format!("/jobs/{job}")))
            .call()
            .unwrap()
            .body_mut()
            .read_json()
            .unwrap();
        let status = rec["status"].as_str().unwrap().to_owned();
        if status == "DONE" || status == "FAILED" {
            return rec;
        }
        assert!(start.elapsed() < limit, "job {job} still {status}");
        std::thread::sleep(Duration::from_millis(50));
    }
}
