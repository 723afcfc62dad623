mod oracles;

use std::collections::{BTreeMap, BTreeSet};

use oracles::synth;
use stomaforge::coco::{validate, Dataset, Prediction};
use stomaforge::maskgeom::{rle_encode, BitMask, Segmentation};
use stomaforge::pseudo::{build_pseudo_dataset, filter_predictions, merge_datasets, ThresholdPolicy};
use stomaforge::stats::{class_summary, split_dataset, subset, SplitSpec};
use stomaforge::tiler::{tile_dataset, EmptyPatchPolicy, DEFAULT_PATCH, DEFAULT_STRIDE};

fn synthetic(n: usize, seed: u64) -> Dataset {
    synth::frames(&mut oracles::rng(seed), n, 1000, 800, 150.0, 0.6)
}

fn tile(d: &Dataset, policy: EmptyPatchPolicy) -> Dataset {
    tile_dataset(d, policy, DEFAULT_PATCH, DEFAULT_STRIDE).unwrap().dataset
}

#[test]
fn split_before_tile_equals_tile_then_partition() {
    let d = synthetic(20, 31);
    assert!(validate(&d).is_valid());
    let splits = split_dataset(
        &d,
        &SplitSpec::Ratio {
            ratios: [0.6, 0.2, 0.2],
            seed: 5,
        },
    )
    .unwrap();
    let tiled_all = tile_dataset(&d, EmptyPatchPolicy::DropEmpty, DEFAULT_PATCH, DEFAULT_STRIDE).unwrap();
    let source_of: BTreeMap<u64, u64> = tiled_all
        .manifest
        .iter()
        .map(|p| (p.patch_image_id, p.source_image_id))
        .collect();
    for (name, part) in splits.iter() {
        let sources: BTreeSet<u64> = part.images.iter().map(|i| i.id).collect();
        let patch_ids: BTreeSet<u64> = source_of
            .iter()
            .filter(|(_, s)| sources.contains(s))
            .map(|(p, _)| *p)
            .collect();
        assert_eq!(tile(part, EmptyPatchPolicy::DropEmpty), subset(&tiled_all.dataset, &patch_ids), "{name}");
    }
}

#[test]
fn split_keeps_every_annotation_once() {
    let d = synthetic(30, 32);
    let s = split_dataset(&d, &SplitSpec::Ratio { ratios: [0.7, 0.2, 0.1], seed: 9 }).unwrap();
    let mut ids: Vec<u64> = s.iter().iter().flat_map(|(_, p)| p.annotations.iter().map(|a| a.id)).collect();
    ids.sort_unstable();
    let mut expected: Vec<u64> = d.annotations.iter().map(|a| a.id).collect();
    expected.sort_unstable();
    assert_eq!(ids, expected);
}

#[test]
fn tiled_and_merged_sets_validate() {
    let human = tile(&synthetic(6, 33), EmptyPatchPolicy::DropEmpty);
    assert!(validate(&human).is_valid(), "{:?}", validate(&human).issues.first());

    // unlabeled frames; the synthetic truth plays the seed model
    let truth = synthetic(6, 34);
    let unlabeled = Dataset {
        annotations: Vec::new(),
        ..truth.clone()
    };
    let patches = tile(&unlabeled, EmptyPatchPolicy::KeepEmpty);
    let truth_patches = tile(&truth, EmptyPatchPolicy::KeepEmpty);
    let preds = synth::predictions(&mut oracles::rng(35), &truth_patches);
    let outcome = filter_predictions(&preds, &ThresholdPolicy::default(), &patches.categories).unwrap();
    let pseudo = build_pseudo_dataset(&patches, &outcome.kept).unwrap();
    assert_eq!(pseudo.images.len(), patches.images.len());
    assert!(validate(&pseudo).is_valid(), "{:?}", validate(&pseudo).issues.first());

    let (merged, report) = merge_datasets(&human, &pseudo).unwrap();
    assert!(validate(&merged).is_valid(), "{:?}", validate(&merged).issues.first());
    assert_eq!(report.total_images(), merged.images.len());

    // geometry multiset: (file name, segmentation) pairs are the union of inputs
    let key = |d: &Dataset| {
        let names: BTreeMap<u64, &str> = d.images.iter().map(|i| (i.id, i.file_name.as_str())).collect();
        let mut v: Vec<String> = d
            .annotations
            .iter()
            .map(|a| format!("{}|{}", names[&a.image_id], serde_json::to_string(&a.segmentation).unwrap()))
            .collect();
        v.sort();
        v
    };
    let mut expected = key(&human);
    expected.extend(key(&pseudo));
    expected.sort();
    assert_eq!(key(&merged), expected);
}

#[test]
fn pseudo_keeps_unlabelled_patches_and_rle_area() {
    let truth = synthetic(2, 36);
    let patches = tile(
        &Dataset {
            annotations: Vec::new(),
            ..truth
        },
        EmptyPatchPolicy::KeepEmpty,
    );
    let target = &patches.images[3];
    let mut m = BitMask::zeros(target.height, target.width);
    for r in 10..20 {
        for c in 5..12 {
            m.set(r, c, true);
        }
    }
    let kept = vec![Prediction {
        image_id: target.id,
        category_id: 3,
        segmentation: Segmentation::Rle(rle_encode(&m)),
        score: 0.8,
        bbox: None,
    }];
    let d = build_pseudo_dataset(&patches, &kept).unwrap();
    assert_eq!(d.images.len(), patches.images.len());
    assert_eq!(d.annotations.len(), 1);
    assert_eq!(d.annotations[0].area, 70.0);

    let none = build_pseudo_dataset(&patches, &[]).unwrap();
    assert_eq!(none.images, patches.images);
    assert!(none.annotations.is_empty());
}

#[test]
fn coverage_stays_in_range() {
    let s = class_summary(&tile(&synthetic(4, 37), EmptyPatchPolicy::DropEmpty));
    for c in &s.classes {
        assert_eq!(c.count, c.coverage.len());
        assert!(c.coverage.iter().all(|v| (0.0..=100.0).contains(v)));
    }
    // pores are generated for about a quarter of stomata
    let (complex, pore) = (s.class("complex area").unwrap().count, s.class("pore area").unwrap().count);
    assert!(pore * 2 < complex);
}
