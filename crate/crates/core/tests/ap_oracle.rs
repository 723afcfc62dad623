mod oracles;

use oracles::*;
use stomaforge::coco::Prediction;
use stomaforge::evaluator::{evaluate_instances, ApResult};

fn class_aps(r: &ApResult) -> Vec<Option<(f64, f64)>> {
    let mut classes: Vec<_> = r.classes.iter().collect();
    classes.sort_by_key(|c| c.category_id);
    classes.iter().map(|c| c.ap.zip(c.ap50)).collect()
}

fn assert_close(lib: &[Option<(f64, f64)>], oracle: &[Option<(f64, f64)>], ctx: &str) {
    assert_eq!(lib.len(), oracle.len());
    for (l, o) in lib.iter().zip(oracle) {
        match (l, o) {
            (None, None) => {}
            (Some(l), Some(o)) => {
                assert!((l.0 - o.0).abs() <= 1e-6 && (l.1 - o.1).abs() <= 1e-6, "{ctx}: {l:?} vs {o:?}");
            }
            _ => panic!("{ctx}: presence differs {l:?} vs {o:?}"),
        }
    }
}

#[test]
fn matches_brute_force_on_random_scenes() {
    let mut rng = rng(21);
    for case in 0..150 {
        let scene = random_scene(&mut rng, 3);
        let (gt, preds) = scene_dataset(&scene);
        let lib = evaluate_instances(&gt, &preds).unwrap();
        assert_close(&class_aps(&lib), &brute_force_ap(&scene, 3), &format!("scene {case}"));
    }
}

#[test]
fn monotone_score_transform_is_invariant() {
    let mut rng = rng(22);
    for _ in 0..60 {
        let scene = random_scene(&mut rng, 3);
        let (gt, preds) = scene_dataset(&scene);
        let squashed: Vec<Prediction> = preds
            .iter()
            .map(|p| Prediction {
                score: p.score * p.score * 0.5,
                ..p.clone()
            })
            .collect();
        assert_eq!(
            evaluate_instances(&gt, &preds).unwrap(),
            evaluate_instances(&gt, &squashed).unwrap()
        );
    }
}

#[test]
fn duplicate_detection_never_raises_ap() {
    let mut rng = rng(23);
    for _ in 0..80 {
        let scene = random_scene(&mut rng, 3);
        let (gt, preds) = scene_dataset(&scene);
        let Some((k, first)) = preds.iter().enumerate().next() else { continue };
        let base = evaluate_instances(&gt, &preds).unwrap();
        let mut dup = preds.clone();
        // same mask right behind the original in rank order
        dup.insert(
            k + 1,
            Prediction {
                score: first.score,
                ..first.clone()
            },
        );
        let with_dup = evaluate_instances(&gt, &dup).unwrap();
        for (a, b) in base.classes.iter().zip(&with_dup.classes) {
            if let (Some(x), Some(y)) = (a.ap, b.ap) {
                assert!(y <= x + 1e-12, "{} rose {x} -> {y}", a.name);
            }
        }
    }
}

#[test]
fn iou_060_single_match() {
    let scene = Scene {
        images: vec![SceneImage { w: 32, h: 32 }],
        gt: vec![SceneInstance {
            image: 0,
            class: 0,
            rings: vec![rect_ring(0.0, 0.0, 10.0, 10.0)],
            score: 1.0,
        }],
        preds: vec![SceneInstance {
            image: 0,
            class: 0,
            rings: vec![rect_ring(0.0, 0.0, 6.0, 10.0)],
            score: 0.4,
        }],
    };
    let (gt, preds) = scene_dataset(&scene);
    let r = evaluate_instances(&gt, &preds).unwrap();
    let c = &r.classes[0];
    assert_eq!(c.ap, Some(0.3));
    assert_eq!(c.ap50, Some(1.0));
    assert_eq!(brute_force_ap(&scene, 1)[0], Some((0.3, 1.0)));
}
