use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidtint::edit::{edit_multi_region, edit_single_region, EditOptions, StubColourizer};
use vidtint::hints::cell_of_pixel;
use vidtint::masks::{RegionSpec, StubSegmenter};
use vidtint::synth::{random_colour, random_scene, Scene, Shape};
use vidtint::types::Pixel;

fn centre_spec(id: &str, scene: &Scene, shape: usize, target: [f32; 3]) -> RegionSpec {
    let (r, c) = scene.shapes[shape].0.centre();
    let cell = cell_of_pixel(Pixel::new(r, c), scene.height, scene.width).unwrap();
    RegionSpec::new(id, BTreeMap::from([(cell, target)]), BTreeSet::new()).unwrap()
}

#[test]
fn single_region_objectives_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let scene = random_scene(&mut rng);
        let frame = scene.render(0).unwrap();
        let target = random_colour(&mut rng, scene.shapes[0].1);
        let spec = centre_spec("obj", &scene, 0, target);
        let out = edit_single_region(
            &frame,
            &spec,
            &StubSegmenter::default(),
            &StubColourizer::default(),
            &EditOptions::default(),
        )
        .unwrap();
        let rep = &out.objective_report;
        worst.0 = worst.0.max(rep.regions[0].error);
        worst.1 = worst.1.max(rep.background_error);
        assert!(rep.pass, "{rep:?}");
    }
    eprintln!("worst region {:.5} background {:.5}", worst.0, worst.1);
}

#[test]
fn two_disc_multi_region() {
    let grey = [0.8, 0.8, 0.8];
    let scene = Scene {
        height: 128,
        width: 256,
        background: grey,
        shapes: vec![
            (Shape::Disc { cy: 64.0, cx: 64.0, radius: 48.0 }, [0.55, 0.35, 0.35]),
            (Shape::Disc { cy: 64.0, cx: 192.0, radius: 48.0 }, [0.35, 0.40, 0.55]),
        ],
    };
    let frame = scene.render(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let green = random_colour(&mut rng, scene.shapes[0].1);
    let orange = random_colour(&mut rng, scene.shapes[1].1);
    let a = centre_spec("a", &scene, 0, green);
    let b = centre_spec("b", &scene, 1, orange);
    let out = edit_multi_region(
        &frame,
        &[a.clone(), b],
        &StubSegmenter::default(),
        &StubColourizer::default(),
        &EditOptions::default(),
    )
    .unwrap();
    assert!(out.objective_report.pass, "{:?}", out.objective_report);

    let single = edit_single_region(
        &frame,
        &a,
        &StubSegmenter::default(),
        &StubColourizer::default(),
        &EditOptions::default(),
    )
    .unwrap();
    let multi = edit_multi_region(
        &frame,
        &[a],
        &StubSegmenter::default(),
        &StubColourizer::default(),
        &EditOptions::default(),
    )
    .unwrap();
    assert_eq!(single.edited, multi.edited);
    assert_eq!(single.masks, multi.masks);
    assert_eq!(single.refined_hints, multi.refined_hints);
}
