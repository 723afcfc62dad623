//! Synthetic leaf frames: nested complex / guard cell / pore ellipses on a
//! jittered lattice, and model-like predictions derived from them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stomaforge::coco::{Annotation, Category, Dataset, ImageRecord, Prediction, Provenance};
use stomaforge::maskgeom::{bbox_of, polygon_area, Segmentation};

use super::{polygon_set, Ring};

const GENOTYPES: [&str; 5] = ["QL12", "TX7000", "R931945-2-2", "SC170-6-8", "SC237-14E"];
const SURFACES: [&str; 2] = ["abaxial", "adaxial"];
const REGIONS: [&str; 3] = ["base", "mid", "tip"];

/// Multiples of 1/64 print short and survive translation exactly.
fn snap(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, theta: f64, n: usize) -> Ring {
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            let (x, y) = (rx * t.cos(), ry * t.sin());
            (
                snap(cx + x * theta.cos() - y * theta.sin()),
                snap(cy + x * theta.sin() + y * theta.cos()),
            )
        })
        .collect()
}

pub fn file_name(i: usize) -> String {
    format!(
        "{}_{}_{}_{}_{}.jpg",
        GENOTYPES[i % 5],
        i / 30 + 1,
        if i % 7 == 6 { "FL".to_string() } else { format!("L{}", 9 + i % 10) },
        SURFACES[(i / 5) % 2],
        REGIONS[(i / 10) % 3]
    )
}

fn annotation(id: u64, image_id: u64, category_id: u64, ring: Ring) -> Annotation {
    let p = polygon_set(&[ring]);
    Annotation {
        id,
        image_id,
        category_id,
        bbox: bbox_of(&p).unwrap(),
        area: polygon_area(&p).unwrap(),
        segmentation: Segmentation::Polygons(p),
        iscrowd: false,
        provenance: Provenance::Human,
        extra: Default::default(),
    }
}

/// `n` frames of `w x h`, roughly `spacing`-px stomata lattice; about a
/// quarter of stomata carry a pore. Cells may be left empty to produce
/// empty patches.
pub fn frames(rng: &mut ChaCha8Rng, n: usize, w: u32, h: u32, spacing: f64, occupancy: f64) -> Dataset {
    let mut images = Vec::with_capacity(n);
    let mut annotations = Vec::new();
    let mut next_id = 1u64;
    for i in 0..n {
        let image_id = i as u64 + 1;
        images.push(ImageRecord::new(image_id, file_name(i), w, h));
        let (cols, rows) = ((f64::from(w) / spacing) as usize, (f64::from(h) / spacing) as usize);
        for r in 0..rows {
            for c in 0..cols {
                if !rng.gen_bool(occupancy) {
                    continue;
                }
                let cx = (c as f64 + 0.5) * spacing + rng.gen_range(-0.15..0.15) * spacing;
                let cy = (r as f64 + 0.5) * spacing + rng.gen_range(-0.15..0.15) * spacing;
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                let rx = spacing * rng.gen_range(0.22..0.32);
                let ry = rx * rng.gen_range(0.55..0.75);
                annotations.push(annotation(next_id, image_id, 1, ellipse(cx, cy, rx, ry, theta, 20)));
                annotations.push(annotation(next_id + 1, image_id, 2, ellipse(cx, cy, rx * 0.7, ry * 0.7, theta, 16)));
                next_id += 2;
                if rng.gen_bool(0.25) {
                    annotations.push(annotation(next_id, image_id, 3, ellipse(cx, cy, rx * 0.45, ry * 0.15, theta, 12)));
                    next_id += 1;
                }
            }
        }
    }
    Dataset {
        images,
        annotations,
        categories: Category::stomata_defaults(),
        extra: Default::default(),
    }
}

/// Perturbed copies of the ground truth with random scores, a sprinkling of
/// misses and false positives.
pub fn predictions(rng: &mut ChaCha8Rng, gt: &Dataset) -> Vec<Prediction> {
    let images = gt.image_index();
    let mut out = Vec::new();
    for a in &gt.annotations {
        if rng.gen_bool(0.1) {
            continue;
        }
        let Segmentation::Polygons(p) = &a.segmentation else { continue };
        let im = images[&a.image_id];
        let (dx, dy) = (snap(rng.gen_range(-2.0..2.0)), snap(rng.gen_range(-2.0..2.0)));
        let (w, h) = (f64::from(im.width), f64::from(im.height));
        let moved = p.translate(dx, dy);
        let clamped: Vec<Ring> = moved
            .rings
            .iter()
            .map(|r| r.iter().map(|pt| (pt.x.clamp(0.0, w), pt.y.clamp(0.0, h))).collect())
            .collect();
        out.push(Prediction {
            image_id: a.image_id,
            category_id: a.category_id,
            segmentation: Segmentation::Polygons(polygon_set(&clamped)),
            score: snap(rng.gen_range(0.3..1.0)),
            bbox: None,
        });
        if rng.gen_bool(0.05) {
            let (cx, cy) = (rng.gen_range(20.0..w - 20.0), rng.gen_range(20.0..h - 20.0));
            out.push(Prediction {
                image_id: a.image_id,
                category_id: rng.gen_range(1..=3),
                segmentation: Segmentation::Polygons(polygon_set(&[ellipse(cx, cy, 15.0, 9.0, 0.3, 12)])),
                score: snap(rng.gen_range(0.0..0.8)),
                bbox: None,
            });
        }
    }
    out
}
