mod common;

use std::path::Path;

use common::*;
use serde_json::Value;
use vidtint::io::read_clip_dir;
use vidtint::types::VideoClip;

fn propagate(store: &Path, out: &Path, sid: &str, extra: &[&str]) -> (VideoClip, Value) {
    let mut args = vec!["session", "propagate", "--session", sid, "--out", out.to_str().unwrap()];
    args.extend(STEP_ARGS);
    args.extend(extra);
    let rec = cli_json(store, &args);
    assert_eq!(rec["status"], "DONE");
    let provenance = serde_json::from_slice(&std::fs::read(out.join("provenance.json")).unwrap()).unwrap();
    (read_clip_dir(out).unwrap(), provenance)
}

#[test]
fn ablation_flags_change_output_and_provenance() {
    let store = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let clip_dir = write_clip(dir.path(), 8);
    let session = cli_json(store.path(), &["session", "create", "--fps", "24", clip_dir.to_str().unwrap()]);
    assert_eq!(session["fps"]["num"], 24);
    let sid = session["session_id"].as_str().unwrap().to_owned();
    for (i, rgb) in [(0, BLUE), (7, GREEN)] {
        let regions = dir.path().join(format!("regions_{i}.json"));
        std::fs::write(&regions, serde_json::to_vec(&[disc_region(i, rgb)]).unwrap()).unwrap();
        let rec = cli_json(
            store.path(),
            &["session", "edit", "--session", &sid, "--frame", &i.to_string(), "--regions", regions.to_str().unwrap()],
        );
        assert_eq!(rec["objective_report"]["pass"], true);
    }

    let variants: [(&str, &[&str]); 5] = [
        ("full", &[]),
        ("hard switch", &["--ablate-weighted-sum"]),
        ("no blend prompt", &["--ablate-blend-prompt"]),
        ("no scene prompt", &["--no-scene-prompt"]),
        ("no colour prompt", &["--no-colour-prompt"]),
    ];
    let outs: Vec<_> = variants
        .iter()
        .map(|(name, flags)| {
            let out = dir.path().join(name.replace(' ', "_"));
            let mut args = vec!["--mode", "multi"];
            args.extend(*flags);
            propagate(store.path(), &out, &sid, &args)
        })
        .collect();
    for i in 0..outs.len() {
        for j in i + 1..outs.len() {
            assert_ne!(outs[i].0, outs[j].0, "{} vs {}", variants[i].0, variants[j].0);
            assert_ne!(outs[i].1, outs[j].1);
        }
    }
    let cfg = |k: usize, key: &str| outs[k].1["config"][key].clone();
    assert_eq!((cfg(0, "ablate_weighted_sum"), cfg(1, "ablate_weighted_sum")), (false.into(), true.into()));
    assert_eq!((cfg(0, "ablate_blend_prompt"), cfg(2, "ablate_blend_prompt")), (false.into(), true.into()));
    let blend_positive = |k: usize| outs[k].1["windows"].as_array().unwrap().last().unwrap()["positive"].clone();
    assert!(blend_positive(0).as_str().unwrap().contains("smooth colour transition"));
    assert!(!blend_positive(2).as_str().unwrap().contains("smooth colour transition"));
    let positive = |k: usize| outs[k].1["prompts"]["positive"].as_str().unwrap().to_owned();
    assert_eq!(
        positive(0),
        format!("{}, {}", positive(3), positive(4)),
        "full prompt joins colour and scene"
    );
    for (_, p) in &outs {
        assert_eq!(p["mode"], "MULTI");
        assert_eq!(p["config"]["steps"], 12);
        assert_eq!(p["edit_indices"], serde_json::json!([0, 7]));
    }

    let job = store.path().join("jobs");
    let first_job = std::fs::read_dir(&job).unwrap().next().unwrap().unwrap().file_name();
    let out = cli(
        store.path(),
        &["session", "metrics", "--session", &sid, "--job", first_job.to_str().unwrap(), "--csv"],
    );
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("clip,FID,LPIPS,"));
}

#[test]
fn invalid_requests_exit_nonzero() {
    let store = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let clip_dir = write_clip(dir.path(), 4);
    let sid = cli_json(store.path(), &["session", "create", clip_dir.to_str().unwrap()])["session_id"]
        .as_str()
        .unwrap()
        .to_owned();
    let no_edit = cli(store.path(), &["session", "propagate", "--session", &sid]);
    assert!(!no_edit.status.success());
    assert!(String::from_utf8_lossy(&no_edit.stderr).contains("no edited frames"));
    let bad_mode = cli(store.path(), &["session", "propagate", "--session", &sid, "--mode", "sideways"]);
    assert!(!bad_mode.status.success());
    let out = std::process::Command::new(bin())
        .args(["--store", store.path().to_str().unwrap(), "session", "show", "--session", &sid])
        .env("DC_BACKEND", "cloud")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DC_BACKEND=cloud"));
}

#[test]
fn corpus_table() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_clip(&dir.path().join("a"), 5);
    let b = write_clip(&dir.path().join("b"), 5);
    let list = dir.path().join("pairs.csv");
    std::fs::write(
        &list,
        format!("clip,edited,reference\nsame,{},{}\nother,a/clip,b/clip\n", a.display(), b.display()),
    )
    .unwrap();
    let table = dir.path().join("metrics.csv");
    let out = cli(dir.path(), &["corpus", list.to_str().unwrap(), "--out", table.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "clip,FID,LPIPS,Colorfulness,CDC,PSNR,SSIM");
    assert!(lines[1].starts_with("same,") && lines[2].starts_with("other,"));
    assert!(lines[1].contains(",inf,"));
}
