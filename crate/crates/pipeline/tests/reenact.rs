use std::collections::HashSet;

use f2f_core::imaging::{rasterize, NO_TRIANGLE};
use f2f_pipeline::commands::{self, Context, Role};
use f2f_pipeline::config::RunConfig;
use f2f_pipeline::reenact::Reenactor;

fn context(dir: &std::path::Path) -> Context {
    let mut cfg = RunConfig::default();
    cfg.seed = 9;
    cfg.synth.frames = 8;
    cfg.synth.width = 48;
    cfg.synth.height = 48;
    cfg.paths.source = dir.join("source");
    cfg.paths.target = dir.join("target");
    cfg.paths.out = dir.join("out");
    Context::new(cfg).unwrap()
}

/// Pixels whose (2r+1)² neighborhood lies inside the image and satisfies `f`.
fn all_within(w: usize, h: usize, r: usize, x: usize, y: usize, f: impl Fn(usize) -> bool) -> bool {
    if x < r || y < r || x + r >= w || y + r >= h {
        return false;
    }
    (y - r..=y + r).all(|yy| (x - r..=x + r).all(|xx| f(yy * w + xx)))
}

#[test]
fn neutral_source_reproduces_the_plain_target_render() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = context(dir.path());
    commands::cmd_synth(&ctx).unwrap();
    commands::cmd_calibrate(&ctx).unwrap();
    commands::cmd_track(&ctx).unwrap();
    let db = commands::cmd_build_mouth_db(&ctx).unwrap();
    let source = ctx.calibration(Role::Source).unwrap();
    let target = ctx.calibration(Role::Target).unwrap();
    let source_track = ctx.track(Role::Source).unwrap();
    let target_track = ctx.track(Role::Target).unwrap();
    let mut reenactor = Reenactor::new(&ctx.prior, &db, &source, &target).unwrap();
    let mouth: HashSet<u32> = ctx.prior.mouth_region.iter().map(|&t| t as u32).collect();
    let (source_seq, target_seq) = (ctx.sequence(Role::Source), ctx.sequence(Role::Target));

    let (mut face, mut background) = (0, 0);
    for i in 0..target_track.len() {
        let mut neutral = source_track[i].clone();
        neutral.delta.iter_mut().for_each(|d| *d = 0.0);
        let params = reenactor.target_params(&neutral, &target_track[i]).unwrap();
        assert!(params.delta.amax() < 1e-10, "{}", params.delta.amax());

        let target_frame = target_seq.read_frame(i).unwrap();
        let out = reenactor
            .frame(&source_seq.read_frame(i).unwrap(), &neutral, &target_frame, &target_track[i])
            .unwrap();
        let (w, h) = (target_frame.width, target_frame.height);
        let render = rasterize(&ctx.prior, &params, w, h).unwrap();
        let color = render.color.clamped();
        let skin = |j: usize| render.tri_id[j] != NO_TRIANGLE && !mouth.contains(&render.tri_id[j]);
        let empty = |j: usize| render.tri_id[j] == NO_TRIANGLE;
        for y in 0..h {
            for x in 0..w {
                let j = y * w + x;
                // the feather ring and the mouth are allowed to differ
                if all_within(w, h, 2, x, y, skin) {
                    assert_eq!(out.frame.pixel(j), color.pixel(j), "frame {i} pixel ({x},{y})");
                    face += 1;
                } else if empty(j) {
                    assert_eq!(out.frame.pixel(j), target_frame.pixel(j), "frame {i} pixel ({x},{y})");
                    background += 1;
                }
            }
        }
    }
    assert!(face > 1000 && background > 1000, "{face} face, {background} background pixels");
}
