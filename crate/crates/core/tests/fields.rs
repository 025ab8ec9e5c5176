mod common;

use pafparse::groundtruth::{build_mask, render_paf_with_counts, stage_loss, Rect};
use pafparse::topology::Limb;
use pafparse::*;
use proptest::prelude::*;

fn mpii() -> Topology {
    Topology::preset(Preset::Mpii14)
}

fn arb_point(w: f64, h: f64) -> impl Strategy<Value = Point> {
    (0.0..w, 0.0..h).prop_map(|(x, y)| Point::new(x, y))
}

/// Scenes of up to four single-limb persons on a small canvas.
fn arb_two_part_scene() -> impl Strategy<Value = Scene> {
    prop::collection::vec((arb_point(48.0, 40.0), arb_point(48.0, 40.0)), 0..4).prop_map(|pairs| {
        let persons = pairs.into_iter().map(|(a, b)| vec![Some(a), Some(b)]).collect();
        Scene::new(48, 40, 2, persons).unwrap()
    })
}

fn two_part() -> Topology {
    Topology::new(
        vec!["a".into(), "b".into()],
        vec![Limb::new(0, 1)],
        TopologyKind::Tree,
        None,
    )
    .unwrap()
}

/// Direct per-pixel evaluation of the confidence target, independent of the
/// renderer's bounding-box walk.
fn confidence_oracle(scene: &Scene, part: usize, p: &RenderParams, x: usize, y: usize) -> f32 {
    let cutoff = p.truncation_radius * p.sigma;
    scene
        .persons
        .iter()
        .filter_map(|person| person[part])
        .map(|kp| {
            let d2 = (x as f64 - kp.x).powi(2) + (y as f64 - kp.y).powi(2);
            if d2 <= cutoff * cutoff {
                (-d2 / (p.sigma * p.sigma)).exp() as f32
            } else {
                0.0
            }
        })
        .fold(0.0f32, f32::max)
}

/// Direct per-pixel affinity target: average of unit directions of the
/// limbs whose band holds the pixel. Directions are rounded to f32 before
/// summing, as stored fields are f32.
fn paf_oracle(scene: &Scene, p: &RenderParams, x: usize, y: usize) -> [f64; 2] {
    let q = Point::new(x as f64, y as f64);
    let mut sum = [0.0, 0.0];
    let mut count = 0;
    for person in &scene.persons {
        let (a, b) = (person[0].unwrap(), person[1].unwrap());
        let len = a.distance(b);
        if len == 0.0 {
            continue;
        }
        let v = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        let along = v.dot(q - a);
        let across = (v.x * (q.y - a.y) - v.y * (q.x - a.x)).abs();
        if (0.0..=len).contains(&along) && across <= p.sigma_l {
            sum[0] += v.x as f32 as f64;
            sum[1] += v.y as f32 as f64;
            count += 1;
        }
    }
    if count == 0 {
        [0.0, 0.0]
    } else {
        [sum[0] / count as f64, sum[1] / count as f64]
    }
}

#[test]
fn removing_any_tree_limb_disconnects() {
    for topo in [mpii(), Topology::preset(Preset::Coco18), common::chain4()] {
        for skip in 0..topo.num_limbs() {
            let limbs: Vec<Limb> = topo
                .limbs()
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != skip)
                .map(|(_, l)| *l)
                .collect();
            let reduced = Topology::new(topo.part_names().to_vec(), limbs, TopologyKind::Tree, None);
            assert!(reduced.is_err(), "limb {skip} removable");
        }
    }
}

#[test]
fn grid_read_write_sweep() {
    for (w, h) in [(1, 1), (3, 5), (7, 2)] {
        let mut g = ScalarGrid::new(w, h);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(g.get(x, y), 0.0);
                g.set(x, y, (y * w + x) as f32 + 0.5);
                assert_eq!(g.get(x, y), (y * w + x) as f32 + 0.5);
                assert_eq!(g.values()[g.index(x, y)], g.get(x, y));
            }
        }
        for y in 0..h {
            for x in 0..w {
                assert_eq!(g.get(x, y), (y * w + x) as f32 + 0.5);
            }
        }
    }
}

#[test]
fn two_person_render_matches_pixel_oracle() {
    let render = RenderParams::default();
    let scene = Scene::new(
        48,
        40,
        2,
        vec![
            vec![Some(Point::new(6.3, 7.9)), Some(Point::new(30.2, 21.4))],
            vec![Some(Point::new(9.0, 25.5)), Some(Point::new(33.7, 8.1))],
        ],
    )
    .unwrap();
    let topo = two_part();
    let (maps, fields) = render_all(&scene, &topo, &render).unwrap();
    let (_, counts) = render_paf_with_counts(&scene, &topo, 0, &render);
    let mut overlap = 0;
    for y in 0..40 {
        for x in 0..48 {
            for j in 0..2 {
                assert_eq!(maps[j].get(x, y), confidence_oracle(&scene, j, &render, x, y));
            }
            let want = paf_oracle(&scene, &render, x, y);
            assert_eq!(fields[0].get(x, y), [want[0] as f32, want[1] as f32], "({x}, {y})");
            overlap += (counts.get(x, y) == 2) as usize;
        }
    }
    assert!(overlap > 0, "the two limbs should share pixels");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segment_direction_antisymmetric(a in arb_point(100.0, 100.0), b in arb_point(100.0, 100.0)) {
        prop_assume!(a.distance(b) > 1e-9);
        let ab = LimbSegment::new(a, b).unwrap();
        let ba = LimbSegment::new(b, a).unwrap();
        prop_assert!((ab.direction.x + ba.direction.x).abs() <= 1e-12);
        prop_assert!((ab.direction.y + ba.direction.y).abs() <= 1e-12);
    }

    #[test]
    fn confidence_bounded_and_peaks_dominate(scene in arb_two_part_scene()) {
        let render = RenderParams::default();
        for j in 0..2 {
            let map = render_confidence(&scene, j, &render);
            prop_assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let kps: Vec<Point> = scene.persons.iter().filter_map(|p| p[j]).collect();
            for kp in &kps {
                let nearest = |c: f64, len: usize| (c.round() as usize).min(len - 1);
                let peak = map.get(nearest(kp.x, map.width()), nearest(kp.y, map.height()));
                for y in 0..map.height() {
                    for x in 0..map.width() {
                        let q = Point::new(x as f64, y as f64);
                        if kps.iter().all(|k| k.distance(q) > 1.0) {
                            prop_assert!(peak >= map.get(x, y));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn paf_magnitudes(scene in arb_two_part_scene()) {
        let render = RenderParams::default();
        let field = render_paf(&scene, &two_part(), 0, &render);
        for v in field.values() {
            prop_assert!(((v[0] as f64).hypot(v[1] as f64)) <= 1.0 + 1e-6);
        }
        if scene.num_persons() > 0 {
            let single = render_paf(&scene.single(0), &two_part(), 0, &render);
            for v in single.values() {
                let m = (v[0] as f64).hypot(v[1] as f64);
                prop_assert!(m == 0.0 || (m - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rendering_permutation_invariant(scene in arb_two_part_scene(), rot in 0usize..4) {
        prop_assume!(scene.num_persons() > 1);
        let mut persons = scene.persons.clone();
        let k = rot % persons.len();
        persons.rotate_left(k);
        let permuted = Scene::new(scene.width, scene.height, 2, persons).unwrap();
        let render = RenderParams::default();
        let (m1, f1) = render_all(&scene, &two_part(), &render).unwrap();
        let (m2, f2) = render_all(&permuted, &two_part(), &render).unwrap();
        prop_assert_eq!(m1, m2);
        for (a, b) in f1[0].values().iter().zip(f2[0].values()) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-6 && (a[1] - b[1]).abs() <= 1e-6);
        }
    }

    #[test]
    fn loss_symmetric_and_zero_iff_agree(
        scene in arb_two_part_scene(),
        other in arb_two_part_scene(),
        x0 in 0usize..48, y0 in 0usize..40,
    ) {
        let render = RenderParams::default();
        let (gm, gf) = render_all(&scene, &two_part(), &render).unwrap();
        let (pm, pf) = render_all(&other, &two_part(), &render).unwrap();
        let mask = build_mask(&scene, &[Rect::new(x0, y0, (x0 + 10).min(48), (y0 + 10).min(40))]).unwrap();
        let ab = stage_loss(&pm, &pf, &gm, &gf, &mask).unwrap();
        let ba = stage_loss(&gm, &gf, &pm, &pf, &mask).unwrap();
        prop_assert_eq!(ab, ba);
        let agree = mask.values().iter().enumerate().filter(|(_, &m)| m).all(|(i, _)| {
            pm.iter().zip(&gm).all(|(p, g)| p.values()[i] == g.values()[i])
                && pf.iter().zip(&gf).all(|(p, g)| p.values()[i] == g.values()[i])
        });
        prop_assert_eq!(ab.f == 0.0, agree);
    }

    #[test]
    fn nms_invariants(values in prop::collection::vec(0.0f32..1.0, 20 * 16), t1 in 0.0f64..0.9, dt in 0.0f64..0.5) {
        let map = ScalarGrid::from_vec(20, 16, values).unwrap();
        let low = NmsParams { threshold: t1, refine: true };
        let high = NmsParams { threshold: t1 + dt, refine: true };
        let peaks = nms_peaks(&map, 0, &low);
        for (i, p) in peaks.iter().enumerate() {
            prop_assert!(p.score > t1);
            let (px, py) = (p.position.x.round() as usize, p.position.y.round() as usize);
            prop_assert!((p.position.x - px as f64).abs() <= 0.5 && (p.position.y - py as f64).abs() <= 0.5);
            prop_assert_eq!(map.get(px, py) as f64, p.score);
            for q in &peaks[i + 1..] {
                prop_assert!(p.position.distance(q.position) > 1.0);
            }
        }
        prop_assert!(nms_peaks(&map, 0, &high).len() <= peaks.len());
    }
}

#[test]
fn detection_counts_match_annotations() {
    let topo = mpii();
    let render = RenderParams::default();
    for seed in 0..40 {
        let cfg = SceneConfig {
            persons: (0, 6),
            min_separation: 6.0 * render.sigma,
            occlusion_prob: 0.2,
            seed,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, &topo).unwrap();
        let (maps, _) = render_all(&scene, &topo, &render).unwrap();
        let candidates = detect_all(&maps, &NmsParams::default());
        for j in 0..topo.num_parts() {
            assert_eq!(candidates.part(j).len(), scene.labeled_count(j), "seed {seed} part {j}");
            for c in candidates.part(j) {
                let nearest = scene
                    .persons
                    .iter()
                    .filter_map(|p| p[j])
                    .map(|k| k.distance(c.position))
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest <= 1.0, "seed {seed} part {j}: {nearest}");
            }
        }
    }
}
