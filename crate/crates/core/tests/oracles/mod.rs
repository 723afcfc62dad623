//! Independent reference implementations and random generators shared by the
//! integration and acceptance tests. Oracles never call library geometry;
//! only the dataset builders do.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stomaforge::coco::{Annotation, Category, Dataset, ImageRecord, Prediction, Provenance};
use stomaforge::maskgeom::{bbox_of, polygon_area, Point, PolygonSet, Segmentation};

pub mod synth;

pub type Ring = Vec<(f64, f64)>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn polygon_set(rings: &[Ring]) -> PolygonSet {
    PolygonSet::new(
        rings
            .iter()
            .map(|r| r.iter().map(|&(x, y)| Point::new(x, y)).collect())
            .collect(),
    )
}

/// Classic crossing test; `true` when `(x, y)` is inside `ring`.
pub fn pnpoly(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Even-odd membership over all rings.
pub fn inside(rings: &[Ring], x: f64, y: f64) -> bool {
    rings.iter().fold(false, |acc, r| acc ^ pnpoly(r, x, y))
}

/// Row-major mask sampling each pixel center.
pub fn raster(rings: &[Ring], h: u32, w: u32) -> Vec<bool> {
    let mut out = Vec::with_capacity(h as usize * w as usize);
    for r in 0..h {
        for c in 0..w {
            out.push(inside(rings, f64::from(c) + 0.5, f64::from(r) + 0.5));
        }
    }
    out
}

/// `(intersection, union)` pixel counts.
pub fn pixel_counts(a: &[bool], b: &[bool]) -> (u64, u64) {
    assert_eq!(a.len(), b.len());
    let mut inter = 0;
    let mut union = 0;
    for i in 0..a.len() {
        if a[i] && b[i] {
            inter += 1;
        }
        if a[i] || b[i] {
            union += 1;
        }
    }
    (inter, union)
}

pub fn pixel_iou(a: &[bool], b: &[bool]) -> f64 {
    match pixel_counts(a, b) {
        (_, 0) => 0.0,
        (i, u) => i as f64 / u as f64,
    }
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: u32, w: u32) -> Vec<bool> {
    let n = h as usize * w as usize;
    match rng.gen_range(0..4) {
        0 => (0..n).map(|_| rng.gen_bool(0.5)).collect(),
        1 => {
            let p = rng.gen_range(0.0..0.15);
            (0..n).map(|_| rng.gen_bool(p)).collect()
        }
        2 => vec![rng.gen_bool(0.5); n],
        _ => {
            // axis-aligned blob
            let (r0, r1) = sorted_pair(rng, h);
            let (c0, c1) = sorted_pair(rng, w);
            let mut v = vec![false; n];
            for r in r0..r1 {
                for c in c0..c1 {
                    v[(r * w + c) as usize] = true;
                }
            }
            v
        }
    }
}

fn sorted_pair(rng: &mut ChaCha8Rng, n: u32) -> (u32, u32) {
    let a = rng.gen_range(0..=n);
    let b = rng.gen_range(0..=n);
    (a.min(b), a.max(b))
}

/// Vertices on an ellipse at sorted random angles: convex.
pub fn random_convex(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64) -> Ring {
    let n = rng.gen_range(3..12);
    let (rx, ry) = (r * rng.gen_range(0.5..1.0), r * rng.gen_range(0.5..1.0));
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    angles
        .iter()
        .map(|a| (cx + rx * a.cos(), cy + ry * a.sin()))
        .collect()
}

/// Star-shaped about its center: jittered angles with every gap below pi
/// (a wider gap lets an edge cross the far side), random radii.
pub fn random_star(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64) -> Ring {
    let n = rng.gen_range(5..20);
    let angles: Vec<f64> = (0..n)
        .map(|k| (k as f64 + rng.gen_range(0.0..1.0)) / n as f64 * std::f64::consts::TAU)
        .collect();
    angles
        .iter()
        .map(|a| {
            let rr = r * rng.gen_range(0.25..1.0);
            (cx + rr * a.cos(), cy + rr * a.sin())
        })
        .collect()
}

pub fn rect_ring(x0: f64, y0: f64, x1: f64, y1: f64) -> Ring {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

/// Area of `rings ∩ [x0,x1]x[y0,y1]` integrated over a fine grid of sample
/// rows; along each row membership is resolved exactly from the original
/// polygon's crossings.
pub fn clipped_area_integral(rings: &[Ring], x0: f64, y0: f64, x1: f64, y1: f64, step: f64) -> f64 {
    let rows = ((y1 - y0) / step).ceil() as usize;
    let dy = (y1 - y0) / rows as f64;
    let mut total = 0.0;
    let mut xs = Vec::new();
    for k in 0..rows {
        let y = y0 + (k as f64 + 0.5) * dy;
        xs.clear();
        for ring in rings {
            let n = ring.len();
            for i in 0..n {
                let (ax, ay) = ring[i];
                let (bx, by) = ring[(i + 1) % n];
                if (ay > y) != (by > y) {
                    xs.push(ax + (bx - ax) * (y - ay) / (by - ay));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks(2) {
            if let [a, b] = pair {
                let lo = a.max(x0);
                let hi = b.min(x1);
                if hi > lo {
                    total += (hi - lo) * dy;
                }
            }
        }
    }
    total
}

/// Signed-area-free reference: sum of |shoelace| per ring.
pub fn shoelace(rings: &[Ring]) -> f64 {
    rings
        .iter()
        .map(|r| {
            let n = r.len();
            let s: f64 = (0..n).map(|i| r[i].0 * r[(i + 1) % n].1 - r[(i + 1) % n].0 * r[i].1).sum();
            (s / 2.0).abs()
        })
        .sum()
}

// ----- instance AP -----

pub struct SceneImage {
    pub w: u32,
    pub h: u32,
}

pub struct SceneInstance {
    pub image: usize,
    /// 0-based class index; category id is `class + 1`.
    pub class: usize,
    pub rings: Vec<Ring>,
    pub score: f64,
}

pub struct Scene {
    pub images: Vec<SceneImage>,
    pub gt: Vec<SceneInstance>,
    pub preds: Vec<SceneInstance>,
}

fn random_shape(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Ring {
    let cx = rng.gen_range(2.0..f64::from(w) - 2.0);
    let cy = rng.gen_range(2.0..f64::from(h) - 2.0);
    let r = rng.gen_range(2.0..(f64::from(w.min(h)) / 3.0));
    match rng.gen_range(0..3) {
        0 => random_convex(rng, cx, cy, r),
        1 => random_star(rng, cx, cy, r),
        _ => rect_ring(
            (cx - r).floor().max(0.0),
            (cy - r).floor().max(0.0),
            (cx + r).ceil().min(f64::from(w)),
            (cy + r).ceil().min(f64::from(h)),
        ),
    }
}

pub fn random_scene(rng: &mut ChaCha8Rng, classes: usize) -> Scene {
    let n_images = rng.gen_range(1..=3);
    let images: Vec<SceneImage> = (0..n_images)
        .map(|_| SceneImage {
            w: rng.gen_range(24..56),
            h: rng.gen_range(24..56),
        })
        .collect();
    let mut gt = Vec::new();
    let mut preds = Vec::new();
    let quantized = rng.gen_bool(0.5);
    for (i, im) in images.iter().enumerate() {
        let first = gt.len();
        for _ in 0..rng.gen_range(0..=5) {
            gt.push(SceneInstance {
                image: i,
                class: rng.gen_range(0..classes),
                rings: vec![random_shape(rng, im.w, im.h)],
                score: 1.0,
            });
        }
        let n_gt = gt.len() - first;
        for _ in 0..rng.gen_range(0..=10) {
            let score = if quantized {
                f64::from(rng.gen_range(1..=10)) / 10.0
            } else {
                rng.gen_range(0.0..1.0)
            };
            let (class, rings) = if n_gt > 0 && rng.gen_bool(0.7) {
                let src = &gt[first + rng.gen_range(0..n_gt)];
                let (dx, dy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let s = rng.gen_range(0.8..1.2);
                let (cx, cy) = centroid(&src.rings[0]);
                let ring = src.rings[0]
                    .iter()
                    .map(|&(x, y)| (cx + (x - cx) * s + dx, cy + (y - cy) * s + dy))
                    .collect();
                let class = if rng.gen_bool(0.85) { src.class } else { rng.gen_range(0..classes) };
                (class, vec![ring])
            } else {
                (rng.gen_range(0..classes), vec![random_shape(rng, im.w, im.h)])
            };
            preds.push(SceneInstance {
                image: i,
                class,
                rings,
                score,
            });
        }
    }
    Scene { images, gt, preds }
}

fn centroid(r: &Ring) -> (f64, f64) {
    let n = r.len() as f64;
    (r.iter().map(|p| p.0).sum::<f64>() / n, r.iter().map(|p| p.1).sum::<f64>() / n)
}

/// Library-side view of a scene: image ids from 1, category ids `class + 1`,
/// annotation ids from 1 in generation order.
pub fn scene_dataset(scene: &Scene) -> (Dataset, Vec<Prediction>) {
    let images = scene
        .images
        .iter()
        .enumerate()
        .map(|(i, im)| ImageRecord::new(i as u64 + 1, format!("scene_{i}.jpg"), im.w, im.h))
        .collect();
    let annotations = scene
        .gt
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let p = polygon_set(&g.rings);
            Annotation {
                id: k as u64 + 1,
                image_id: g.image as u64 + 1,
                category_id: g.class as u64 + 1,
                bbox: bbox_of(&p).expect("non-empty ring"),
                area: polygon_area(&p).expect("valid ring"),
                segmentation: Segmentation::Polygons(p),
                iscrowd: false,
                provenance: Provenance::Human,
                extra: Default::default(),
            }
        })
        .collect();
    let preds = scene
        .preds
        .iter()
        .map(|p| Prediction {
            image_id: p.image as u64 + 1,
            category_id: p.class as u64 + 1,
            segmentation: Segmentation::Polygons(polygon_set(&p.rings)),
            score: p.score,
            bbox: None,
        })
        .collect();
    let d = Dataset {
        images,
        annotations,
        categories: Category::stomata_defaults(),
        extra: Default::default(),
    };
    (d, preds)
}

/// Per class `(AP averaged over thresholds, AP at 0.50)`, `None` without
/// ground truth. Thresholds and IoU comparisons are exact rationals.
pub fn brute_force_ap(scene: &Scene, classes: usize) -> Vec<Option<(f64, f64)>> {
    let masks = |v: &[SceneInstance]| -> Vec<Vec<bool>> {
        v.iter()
            .map(|x| {
                let im = &scene.images[x.image];
                raster(&x.rings, im.h, im.w)
            })
            .collect()
    };
    let gt_masks = masks(&scene.gt);
    let pred_masks = masks(&scene.preds);
    (0..classes)
        .map(|c| {
            let gts: Vec<usize> = (0..scene.gt.len()).filter(|&g| scene.gt[g].class == c).collect();
            if gts.is_empty() {
                return None;
            }
            let mut order: Vec<usize> = (0..scene.preds.len()).filter(|&p| scene.preds[p].class == c).collect();
            order.sort_by(|&a, &b| {
                scene.preds[b]
                    .score
                    .partial_cmp(&scene.preds[a].score)
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let per_t: Vec<f64> = (0..10u64)
                .map(|k| {
                    let pct = 50 + 5 * k;
                    let mut taken = vec![false; scene.gt.len()];
                    let mut hits = Vec::new();
                    for &p in &order {
                        let mut best: Option<(usize, u64, u64)> = None;
                        for &g in &gts {
                            if taken[g] || scene.gt[g].image != scene.preds[p].image {
                                continue;
                            }
                            let (i, u) = pixel_counts(&pred_masks[p], &gt_masks[g]);
                            if u == 0 || i * 100 < pct * u {
                                continue;
                            }
                            let better = match best {
                                None => true,
                                Some((_, bi, bu)) => i * bu > bi * u,
                            };
                            if better {
                                best = Some((g, i, u));
                            }
                        }
                        if let Some((g, _, _)) = best {
                            taken[g] = true;
                        }
                        hits.push(best.is_some());
                    }
                    let n = gts.len() as u64;
                    let mut tp = 0u64;
                    let curve: Vec<(u64, f64)> = hits
                        .iter()
                        .enumerate()
                        .map(|(k, &h)| {
                            tp += u64::from(h);
                            (tp, tp as f64 / (k + 1) as f64)
                        })
                        .collect();
                    let sum: f64 = (0..=100u64)
                        .map(|r| {
                            curve
                                .iter()
                                .filter(|(tp, _)| tp * 100 >= r * n)
                                .map(|&(_, p)| p)
                                .fold(0.0, f64::max)
                        })
                        .sum();
                    sum / 101.0
                })
                .collect();
            Some((per_t.iter().sum::<f64>() / 10.0, per_t[0]))
        })
        .collect()
}
