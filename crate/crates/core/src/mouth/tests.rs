use super::*;
use crate::energy::SceneParams;
use crate::imaging::{interpolate_normal_albedo, rasterize, sh_shade, Frame, Illumination, RigidPose};
use crate::model::FacePrior;
use crate::testutil::{self, desk_prior, random_params, render};
use crate::{Error, Vec3};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn frontal_scene(seed: u64, size: usize) -> (FacePrior, SceneParams) {
    let prior = desk_prior(seed);
    let mut p = random_params(&prior, &mut testutil::rng(seed), size, size, 1.0);
    p.pose = RigidPose::from_axis_angle(Vec3::new(0.05, -0.04, 0.02), p.pose.translation);
    (prior, p)
}

#[test]
fn self_render_texture_matches_shaded_albedo() {
    for seed in [1, 2] {
        let (prior, params) = frontal_scene(seed, 192);
        let frame = render(&prior, &params, 192, 192);
        let chart = MouthChart::new(&prior, 32).unwrap();
        let tex = normalize_mouth(&prior, &chart, &frame, &params).unwrap();
        let surface = crate::imaging::SurfaceState::new(&prior, &params).unwrap();
        let mut worst: f64 = 0.0;
        for (i, texel) in chart.texels.iter().enumerate() {
            let Some((t, b)) = texel else { continue };
            let (n, albedo) = interpolate_normal_albedo(&surface, &prior.triangles[*t], b);
            let want = sh_shade(&(params.pose.rotation * n), &albedo, &params.gamma).map(|v| v.clamp(0.0, 1.0));
            let got = tex.pixel(i);
            for c in 0..3 {
                worst = worst.max((got[c] - want[c]).abs());
            }
        }
        assert!(worst < 2.0 / 255.0, "seed {seed}: max abs diff {worst}");
    }
}

#[test]
fn constant_frame_gives_constant_texture() {
    let (prior, params) = frontal_scene(3, 64);
    let chart = MouthChart::new(&prior, 16).unwrap();
    let c = [0.3, 0.6, 0.1];
    let tex = normalize_mouth(&prior, &chart, &Frame::filled(64, 64, c), &params).unwrap();
    for i in 0..tex.pixel_count() {
        assert_eq!(tex.pixel(i), c);
    }
}

#[test]
fn principal_point_shift_with_shifted_frame_is_equivariant() {
    let (prior, params) = frontal_scene(4, 96);
    let frame = render(&prior, &params, 96, 96);
    let chart = MouthChart::new(&prior, 24).unwrap();
    let base = normalize_mouth(&prior, &chart, &frame, &params).unwrap();
    let (sx, sy) = (5usize, 3usize);
    let mut shifted = Frame::filled(96, 96, [0.0; 3]);
    for y in sy..96 {
        for x in sx..96 {
            shifted.set(x, y, frame.get(x - sx, y - sy));
        }
    }
    let mut moved = params.clone();
    moved.camera.cx += sx as f64;
    moved.camera.cy += sy as f64;
    let tex = normalize_mouth(&prior, &chart, &shifted, &moved).unwrap();
    for (a, b) in base.rgb.iter().zip(&tex.rgb) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn back_facing_mouth_is_rejected() {
    let (prior, mut params) = frontal_scene(5, 64);
    params.pose = RigidPose::from_axis_angle(Vec3::new(0.0, std::f64::consts::PI, 0.0), params.pose.translation);
    let chart = MouthChart::new(&prior, 16).unwrap();
    let frame = Frame::filled(64, 64, [0.5; 3]);
    assert!(matches!(normalize_mouth(&prior, &chart, &frame, &params), Err(Error::MouthHidden(_))));
}

#[test]
fn chart_inpaints_every_uncovered_texel_from_a_covered_one() {
    let prior = desk_prior(6);
    let chart = MouthChart::new(&prior, 32).unwrap();
    for i in 0..chart.texels.len() {
        assert!(chart.texels[chart.source[i]].is_some());
        if chart.texels[i].is_some() {
            assert_eq!(chart.source[i], i);
        }
    }
}

fn gradient_texture(size: usize) -> Frame {
    let mut f = Frame::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let v = (x as f64 + 0.3 * y as f64) / (1.3 * size as f64);
            f.set(x, y, [v, v * v, 1.0 - v]);
        }
    }
    f
}

fn rotate_180(f: &Frame) -> Frame {
    let mut out = Frame::new(f.width, f.height);
    for y in 0..f.height {
        for x in 0..f.width {
            out.set(f.width - 1 - x, f.height - 1 - y, f.get(x, y));
        }
    }
    out
}

#[test]
fn lbp_of_constant_texture_fills_one_bin_per_cell() {
    let h = compute_lbp(&Frame::filled(32, 32, [0.4, 0.4, 0.4]));
    for c in 0..LBP_CELLS * LBP_CELLS {
        let cell = h.cell(c);
        // all neighbors equal the center: code 0xff
        assert_eq!(cell[uniform_bin(0xff)], 64);
        assert_eq!(cell.iter().sum::<u32>(), 64);
    }
}

#[test]
fn lbp_cells_count_their_pixels() {
    let h = compute_lbp(&gradient_texture(30));
    let total: u32 = h.counts.iter().sum();
    assert_eq!(total, 900);
    for cy in 0..LBP_CELLS {
        for cx in 0..LBP_CELLS {
            let w = (0..30).filter(|x| x * LBP_CELLS / 30 == cx).count();
            let hh = (0..30).filter(|y| y * LBP_CELLS / 30 == cy).count();
            assert_eq!(h.cell(cy * LBP_CELLS + cx).iter().sum::<u32>() as usize, w * hh);
        }
    }
}

#[test]
fn lbp_is_orientation_sensitive() {
    let g = gradient_texture(32);
    assert_ne!(compute_lbp(&g), compute_lbp(&rotate_180(&g)));
}

#[test]
fn hand_patch_gives_alternating_code() {
    // TL, T, TR, R, BR, B, BL, L = 1, 0, 1, 0, 1, 0, 1, 0
    let patch = [1.0, 0.0, 1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 1.0];
    assert_eq!(lbp_code(&patch), 0b1010_1010);
    assert_eq!(uniform_bin(0b1010_1010), LBP_BINS - 1);
}

#[test]
fn uniform_bins_are_dense_and_ordered() {
    let uniform: Vec<u8> = (0..=255u8)
        .filter(|&c| (0..8).filter(|&k| ((c >> k) & 1) != ((c >> ((k + 1) % 8)) & 1)).count() <= 2)
        .collect();
    assert_eq!(uniform.len(), LBP_BINS - 1);
    for (i, &c) in uniform.iter().enumerate() {
        assert_eq!(uniform_bin(c), i);
    }
}

fn random_descriptor(rng: &mut ChaCha8Rng, d_exp: usize) -> MouthDescriptor {
    let aa = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1));
    let lbp = LbpHistogram {
        counts: (0..LBP_CELLS * LBP_CELLS * LBP_BINS)
            .map(|_| if rng.random_bool(0.3) { rng.random_range(0..20) } else { 0 })
            .collect(),
    };
    MouthDescriptor {
        rotation: RigidPose::from_axis_angle(aa, Vec3::zeros()).rotation,
        delta: DVector::from_fn(d_exp, |_, _| rng.random_range(-1.0..1.0)),
        landmarks: std::array::from_fn(|_| [rng.random_range(20.0..40.0), rng.random_range(30.0..50.0)]),
        lbp,
    }
}

fn random_texture(rng: &mut ChaCha8Rng, size: usize) -> Frame {
    Frame::from_rgb(size, size, (0..3 * size * size).map(|_| rng.random_range(0.0..1.0)).collect())
}

// Independent scalar implementations.
fn oracle_p(a: &MouthDescriptor, b: &MouthDescriptor) -> f64 {
    let mut s = 0.0;
    for i in 0..a.delta.len() {
        s += (a.delta[i] - b.delta[i]) * (a.delta[i] - b.delta[i]);
    }
    for r in 0..3 {
        for c in 0..3 {
            s += (a.rotation[(r, c)] - b.rotation[(r, c)]).powi(2);
        }
    }
    s
}

fn oracle_m(a: &MouthDescriptor, b: &MouthDescriptor, pairs: &[[usize; 2]]) -> f64 {
    let len = |f: &[[f64; 2]; 4], i: usize, j: usize| (f[i][0] - f[j][0]).hypot(f[i][1] - f[j][1]);
    pairs
        .iter()
        .map(|&[i, j]| (len(&a.landmarks, i, j) - len(&b.landmarks, i, j)).powi(2))
        .sum()
}

fn oracle_l(a: &MouthDescriptor, b: &MouthDescriptor) -> f64 {
    let mut s = 0.0;
    for c in 0..LBP_CELLS * LBP_CELLS {
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in 0..LBP_BINS {
            na += a.lbp.counts[c * LBP_BINS + k] as f64;
            nb += b.lbp.counts[c * LBP_BINS + k] as f64;
        }
        for k in 0..LBP_BINS {
            let p = if na > 0.0 { a.lbp.counts[c * LBP_BINS + k] as f64 / na } else { 0.0 };
            let q = if nb > 0.0 { b.lbp.counts[c * LBP_BINS + k] as f64 / nb } else { 0.0 };
            if p + q != 0.0 {
                s += (p - q) * (p - q) / (p + q);
            }
        }
    }
    s
}

fn oracle_c(a: &Frame, b: &Frame) -> f64 {
    let n = a.rgb.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in 0..a.rgb.len() {
        sa += a.rgb[i];
        sb += b.rgb[i];
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..a.rgb.len() {
        num += (a.rgb[i] - ma) * (b.rgb[i] - mb);
        va += (a.rgb[i] - ma).powi(2);
        vb += (b.rgb[i] - mb).powi(2);
    }
    1.0 - num / (va * vb).sqrt()
}

#[test]
fn distances_match_scalar_oracles() {
    let mut rng = testutil::rng(10);
    let pairs = MouthConfig::default().landmark_pairs;
    for _ in 0..50 {
        let a = random_descriptor(&mut rng, 8);
        let b = random_descriptor(&mut rng, 8);
        let (ta, tb) = (random_texture(&mut rng, 12), random_texture(&mut rng, 12));
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * y.abs().max(1.0);
        assert!(close(dist_p(&a, &b), oracle_p(&a, &b)));
        assert!(close(dist_m(&a, &b, &pairs), oracle_m(&a, &b, &pairs)));
        assert!(close(dist_l(&a, &b), oracle_l(&a, &b)));
        let dc = dist_c(&ta, &tb);
        assert!(close(dc, oracle_c(&ta, &tb)));
        let wc = (-oracle_m(&a, &b, &pairs).powi(2)).exp();
        let want = oracle_p(&a, &b) + oracle_m(&a, &b, &pairs) + oracle_l(&a, &b) + wc * oracle_c(&ta, &tb);
        assert!(close(dist_total(&a, &b, &pairs, Some(dc)), want));
        assert!(dist_total(&a, &b, &pairs, Some(dc)) >= 0.0);
        assert_eq!(dist_p(&a, &b), dist_p(&b, &a));
        assert!(close(dist_l(&a, &b), dist_l(&b, &a)));
        assert_eq!(dist_m(&a, &b, &pairs), dist_m(&b, &a, &pairs));
    }
}

#[test]
fn identical_descriptors_have_zero_distance() {
    let mut rng = testutil::rng(11);
    let pairs = MouthConfig::default().landmark_pairs;
    let a = random_descriptor(&mut rng, 6);
    let t = random_texture(&mut rng, 12);
    assert_eq!(dist_p(&a, &a), 0.0);
    assert_eq!(dist_m(&a, &a, &pairs), 0.0);
    assert_eq!(dist_l(&a, &a), 0.0);
    assert_eq!(dist_c(&t, &t), 0.0);
    assert_eq!(dist_total(&a, &a, &pairs, Some(dist_c(&t, &t))), 0.0);
}

#[test]
fn expression_offset_gives_squared_norm() {
    let mut rng = testutil::rng(12);
    let a = random_descriptor(&mut rng, 5);
    let mut b = a.clone();
    let dir = DVector::from_vec(vec![0.6, 0.0, -0.8, 0.0, 0.0]);
    b.delta += dir * 0.3;
    assert!((dist_p(&a, &b) - 0.09).abs() < 1e-14);
}

#[test]
fn constant_textures_follow_the_fallback_rule() {
    let a = Frame::filled(8, 8, [0.5; 3]);
    let b = Frame::filled(8, 8, [0.2; 3]);
    assert_eq!(dist_c(&a, &a), 0.0);
    assert_eq!(dist_c(&a, &b), 1.0);
}

#[test]
fn landmark_weight_is_in_unit_interval() {
    assert_eq!(weight_c(0.0), 1.0);
    for dm in [1e-3, 0.5, 2.0, 30.0] {
        let w = weight_c(dm);
        assert!(w > 0.0 || dm > 20.0);
        assert!(w < 1.0);
    }
}

fn random_samples(seed: u64, n: usize, size: usize) -> Vec<MouthSample> {
    let mut rng = testutil::rng(seed);
    (0..n)
        .map(|i| MouthSample {
            frame: i,
            texture: random_texture(&mut rng, size),
            gamma: Illumination::ambient([0.8; 3]),
            descriptor: random_descriptor(&mut rng, 6),
        })
        .collect()
}

fn config(k: usize, size: usize) -> MouthConfig {
    MouthConfig {
        clusters: k,
        texture_size: size,
        ..Default::default()
    }
}

fn check_partition(db: &MouthDatabase) {
    let mut seen = vec![0; db.len()];
    for (members, rep) in db.clusters.iter().zip(&db.representatives) {
        assert!(members.contains(rep));
        members.iter().for_each(|&m| seen[m] += 1);
    }
    assert!(seen.iter().all(|&s| s == 1));
}

#[test]
fn one_cluster_per_frame_when_k_equals_n() {
    let db = MouthDatabase::build(random_samples(20, 7, 12), &config(7, 12)).unwrap();
    check_partition(&db);
    assert!(db.clusters.iter().all(|c| c.len() == 1));
    let mut reps = db.representatives.clone();
    reps.sort();
    assert_eq!(reps, (0..7).collect::<Vec<_>>());
}

#[test]
fn too_few_frames_lowers_k() {
    let db = MouthDatabase::build(random_samples(21, 3, 12), &config(10, 12)).unwrap();
    assert_eq!(db.clusters.len(), 3);
    assert_eq!(db.config.clusters, 3);
}

#[test]
fn duplicate_frames_share_a_cluster() {
    let mut samples = random_samples(22, 30, 12);
    for (dup, orig) in [(25, 3), (26, 3), (27, 10), (28, 17), (29, 0)] {
        samples[dup] = MouthSample {
            frame: dup,
            ..samples[orig].clone()
        };
    }
    let db = MouthDatabase::build(samples, &config(5, 12)).unwrap();
    check_partition(&db);
    let cluster_of = |i: usize| db.clusters.iter().position(|c| c.contains(&i)).unwrap();
    for (dup, orig) in [(25, 3), (26, 3), (27, 10), (28, 17), (29, 0)] {
        assert_eq!(db.offline_distance(dup, orig), 0.0);
        assert_eq!(cluster_of(dup), cluster_of(orig));
    }
}

#[test]
fn medoids_minimize_intra_cluster_distance() {
    let db = MouthDatabase::build(random_samples(23, 200, 12), &config(10, 12)).unwrap();
    check_partition(&db);
    let pairs = &db.config.landmark_pairs;
    for (members, &rep) in db.clusters.iter().zip(&db.representatives) {
        let cost = |a: usize| -> f64 {
            members
                .iter()
                .map(|&b| {
                    let (ka, kb) = (&db.samples[a].descriptor, &db.samples[b].descriptor);
                    oracle_p(ka, kb) + oracle_m(ka, kb, pairs) + oracle_l(ka, kb)
                })
                .sum()
        };
        let best = members.iter().map(|&m| cost(m)).fold(f64::INFINITY, f64::min);
        assert!(cost(rep) <= best * (1.0 + 1e-12), "{} vs {best}", cost(rep));
    }
    for i in 0..db.len() {
        assert_eq!(db.graph[(i, i)], 0.0);
        for j in 0..db.len() {
            assert_eq!(db.graph[(i, j)], db.graph[(j, i)]);
            assert!(db.graph[(i, j)] >= 0.0);
        }
    }
}

fn brute_force_retrieval(db: &MouthDatabase, q: &MouthDescriptor, tau: Option<usize>) -> Retrieval {
    let pairs = &db.config.landmark_pairs;
    let mut target = db.representatives[0];
    let mut best = f64::INFINITY;
    for &r in &db.representatives {
        let k = &db.samples[r].descriptor;
        let mut d = oracle_p(q, k) + oracle_m(q, k, pairs) + oracle_l(q, k);
        if let Some(tau) = tau {
            d += weight_c(dist_m(q, k, pairs)) * dist_c(&db.samples[tau].texture, &db.samples[r].texture);
        }
        if d < best {
            best = d;
            target = r;
        }
    }
    let inbetween = match tau {
        None => target,
        Some(tau) => {
            let mut arg = 0;
            let mut best = f64::INFINITY;
            for f in 0..db.len() {
                let w = db.graph[(f, tau)] + db.graph[(f, target)];
                if w < best {
                    best = w;
                    arg = f;
                }
            }
            arg
        }
    };
    Retrieval { target, inbetween }
}

#[test]
fn retrieval_matches_brute_force() {
    let db = MouthDatabase::build(random_samples(24, 200, 12), &config(10, 12)).unwrap();
    let mut rng = testutil::rng(25);
    let mut state = RetrievalState::default();
    for _ in 0..60 {
        let q = random_descriptor(&mut rng, 6);
        let want = brute_force_retrieval(&db, &q, state.tau);
        let got = db.retrieve(&q, &mut state);
        assert_eq!(got, want);
        assert_eq!(state.tau, Some(got.inbetween));
    }
}

#[test]
fn representative_query_returns_itself() {
    let db = MouthDatabase::build(random_samples(26, 40, 12), &config(6, 12)).unwrap();
    for &r in &db.representatives {
        let mut state = RetrievalState::default();
        let got = db.retrieve(&db.samples[r].descriptor.clone(), &mut state);
        assert_eq!(got, Retrieval { target: r, inbetween: r });
        // τ = target: the zero self-edge wins
        let again = db.retrieve(&db.samples[r].descriptor.clone(), &mut state);
        assert_eq!(again.target, r);
        assert_eq!(again.inbetween, r);
    }
}

#[test]
fn database_round_trips_through_container() {
    let db = MouthDatabase::build(random_samples(27, 25, 12), &config(4, 12)).unwrap();
    let mut buf = Vec::new();
    db.write_to(&mut buf).unwrap();
    assert!(buf.starts_with(MOUTH_MAGIC));
    let back = MouthDatabase::read_from(&buf[..]).unwrap();
    assert_eq!(back, db);
    assert!(MouthDatabase::read_from(&buf[..buf.len() - 3]).is_err());
}

fn blob(size: usize, cx: f64, cy: f64) -> Frame {
    let mut f = Frame::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let r2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
            let v = (-r2 / 30.0).exp();
            f.set(x, y, [v, 0.5 * v, 1.0 - v]);
        }
    }
    f
}

#[test]
fn alignment_recovers_a_subpixel_translation() {
    let prev = blob(32, 14.0, 17.0);
    for (dx, dy) in [(1.5, -2.0), (0.0, 0.0), (-3.25, 0.75)] {
        let new = blob(32, 14.0 + dx, 17.0 + dy);
        let (sx, sy) = align_translation(&prev, &new);
        assert!((sx - dx).abs() < 0.15 && (sy - dy).abs() < 0.15, "({sx}, {sy}) vs ({dx}, {dy})");
    }
    assert_eq!(align_translation(&prev, &prev), (0.0, 0.0));
}

#[test]
fn equal_light_gives_unit_ratio() {
    let g = crate::energy::frontal_light([0.7, 0.6, 0.8], [0.3; 3]);
    for n in [Vec3::z(), -Vec3::z(), Vec3::new(0.3, -0.5, 0.8).normalize()] {
        assert_eq!(illumination_ratio(&n, &g, &g), [1.0; 3]);
    }
    let dark = Illumination::ambient([0.0; 3]);
    assert_eq!(illumination_ratio(&Vec3::z(), &g, &dark), [RATIO_RANGE[1]; 3]);
}

fn composite_setup() -> (FacePrior, SceneParams, MouthChart, MouthDatabase, Frame) {
    let (prior, params) = frontal_scene(30, 96);
    let chart = MouthChart::new(&prior, 16).unwrap();
    let mut rng = testutil::rng(31);
    let mut samples = Vec::new();
    for i in 0..6 {
        let mut p = params.clone();
        p.delta.iter_mut().zip(prior.sigma_exp.iter()).for_each(|(d, s)| *d = rng.random_range(-1.0..1.0) * s);
        let frame = render(&prior, &p, 96, 96);
        samples.push(capture_sample(&prior, &chart, i, &frame, &p).unwrap());
    }
    let db = MouthDatabase::build(samples, &config(3, 16)).unwrap();
    let video = render(&prior, &params, 96, 96);
    (prior, params, chart, db, video)
}

#[test]
fn compositing_weights_are_a_partition_of_unity() {
    let (prior, params, chart, db, video) = composite_setup();
    let raster = rasterize(&prior, &params, 96, 96).unwrap();
    let mut state = RetrievalState::default();
    let q = &db.samples[2].descriptor;
    let r = db.retrieve(q, &mut state);
    let out = blend_and_composite(&prior, &chart, &db, r, &mut state, &video, &raster, &params).unwrap();
    let mut mouth = 0;
    for (i, w) in out.weights.iter().enumerate() {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        if w[0] == 1.0 {
            assert_eq!(out.frame.pixel(i), video.pixel(i));
        }
        mouth += (w[2] > 0.0) as usize;
    }
    assert!(mouth > 0);
}

#[test]
fn equal_light_leaves_the_first_texture_unchanged() {
    let (prior, mut params, chart, db, video) = composite_setup();
    params.gamma = db.samples[0].gamma;
    let raster = rasterize(&prior, &params, 96, 96).unwrap();
    let mut state = RetrievalState::default();
    let r = Retrieval { target: 0, inbetween: 0 };
    let out = blend_and_composite(&prior, &chart, &db, r, &mut state, &video, &raster, &params).unwrap();
    assert_eq!(out.mouth_texture, db.samples[0].texture);
}

#[test]
fn repeated_retrieval_gives_a_constant_texture() {
    let (prior, params, chart, db, video) = composite_setup();
    let raster = rasterize(&prior, &params, 96, 96).unwrap();
    let mut state = RetrievalState::default();
    let r = Retrieval { target: 1, inbetween: 1 };
    let first = blend_and_composite(&prior, &chart, &db, r, &mut state, &video, &raster, &params).unwrap();
    for _ in 0..3 {
        let next = blend_and_composite(&prior, &chart, &db, r, &mut state, &video, &raster, &params).unwrap();
        for (a, b) in first.mouth_texture.rgb.iter().zip(&next.mouth_texture.rgb) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(first.frame, next.frame);
    }
}

#[test]
fn feathered_alpha_is_zero_outside_the_eroded_coverage() {
    let (prior, params) = frontal_scene(32, 64);
    let raster = rasterize(&prior, &params, 64, 64).unwrap();
    let alpha = feathered_alpha(&raster);
    let covered = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < 64 && y < 64 && raster.tri_id[(y * 64 + x) as usize] != crate::imaging::NO_TRIANGLE
    };
    let mut interior = 0;
    for y in 0..64i64 {
        for x in 0..64i64 {
            let a = alpha[(y * 64 + x) as usize];
            let full = (-1..=1).all(|dy| (-1..=1).all(|dx| covered(x + dx, y + dy)));
            if !full {
                assert_eq!(a, 0.0);
            }
            assert!([0.0, 0.5, 1.0].contains(&a));
            interior += (a == 1.0) as usize;
        }
    }
    assert!(interior > 100);
}

#[test]
fn invalid_mouth_configs_are_rejected() {
    assert!(MouthConfig { clusters: 0, ..Default::default() }.validate().is_err());
    assert!(MouthConfig { texture_size: 4, ..Default::default() }.validate().is_err());
    assert!(MouthConfig {
        landmark_pairs: vec![[0, 4]],
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(MouthConfig::default().validate().is_ok());
}

#[test]
fn descriptor_landmarks_follow_the_mouth_vertices() {
    let (prior, params) = frontal_scene(33, 64);
    let d = MouthDescriptor::from_params(&prior, &params, compute_lbp(&Frame::filled(16, 16, [0.0; 3]))).unwrap();
    let lms = testutil::landmarks(&prior, &params);
    let mouth = prior.mouth_landmark_vertices();
    for (k, v) in mouth.iter().enumerate() {
        let l = prior.landmark_vertices.iter().position(|x| x == v).unwrap();
        assert_eq!(d.landmarks[k], lms[l].position);
    }
    assert_eq!(d.rotation, params.pose.rotation);
}
