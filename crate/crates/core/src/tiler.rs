//! Overlapping patch tiling of full-frame datasets.
//!
//! Offsets along each axis step by `stride` from 0 while the window fits;
//! when the last lattice window stops short of the frame edge, one extra
//! window is placed flush against it. Each instance goes to the single patch
//! holding the largest share of its area, and only when that share is
//! strictly above one half.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::{Annotation, Dataset, ImageRecord};
use crate::maskgeom::{
    clip_polygon_to_rect, polygon_area, rle_decode, rle_encode, GeomError, Rect, Segmentation,
};

pub const DEFAULT_PATCH: u32 = 341;
pub const DEFAULT_STRIDE: u32 = 331;

/// Minimum patch share required for assignment (exclusive).
pub const ASSIGN_FRACTION: f64 = 0.5;

/// Patch image ids are `source_id * PATCH_ID_BASE + row * 1000 + col`.
pub const PATCH_ID_BASE: u64 = 1_000_000;
const MAX_GRID_AXIS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TileError {
    #[error("patch {patch} px does not fit in a {frame_w}x{frame_h} frame")]
    PatchLargerThanFrame { frame_w: u32, frame_h: u32, patch: u32 },
    #[error("stride {stride} must be in 1..={patch}")]
    InvalidStride { patch: u32, stride: u32 },
    #[error("image {0} has no tile grid")]
    MissingGrid(u64),
    #[error("patch id space exhausted for image {0}")]
    IdOverflow(u64),
    #[error("annotation {id}: {source}")]
    Geometry { id: u64, source: GeomError },
}

pub type Result<T> = std::result::Result<T, TileError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub frame_w: u32,
    pub frame_h: u32,
    pub patch: u32,
    pub stride: u32,
    pub col_offsets: Vec<u32>,
    pub row_offsets: Vec<u32>,
}

fn axis_offsets(dim: u32, patch: u32, stride: u32) -> Vec<u32> {
    let mut offsets: Vec<u32> = (0..)
        .map(|k| k * stride)
        .take_while(|&off| off + patch <= dim)
        .collect();
    let last = *offsets.last().expect("patch fits, so offset 0 exists");
    if last + patch < dim {
        offsets.push(dim - patch);
    }
    offsets
}

pub fn compute_grid(frame_w: u32, frame_h: u32, patch: u32, stride: u32) -> Result<TileGrid> {
    if patch == 0 || patch > frame_w || patch > frame_h {
        return Err(TileError::PatchLargerThanFrame { frame_w, frame_h, patch });
    }
    if stride == 0 || stride > patch {
        return Err(TileError::InvalidStride { patch, stride });
    }
    Ok(TileGrid {
        frame_w,
        frame_h,
        patch,
        stride,
        col_offsets: axis_offsets(frame_w, patch, stride),
        row_offsets: axis_offsets(frame_h, patch, stride),
    })
}

impl TileGrid {
    pub fn rows(&self) -> usize {
        self.row_offsets.len()
    }

    pub fn cols(&self) -> usize {
        self.col_offsets.len()
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_rect(&self, row: usize, col: usize) -> Rect {
        let (x0, y0) = (self.col_offsets[col], self.row_offsets[row]);
        Rect {
            x0,
            y0,
            x1: x0 + self.patch,
            y1: y0 + self.patch,
        }
    }

    /// Interval-union check that the windows tile both axes without gaps.
    pub fn covers_frame(&self) -> bool {
        fn covers(offsets: &[u32], patch: u32, dim: u32) -> bool {
            let mut reach = 0u32;
            for &off in offsets {
                if off > reach {
                    return false;
                }
                reach = reach.max(off + patch);
            }
            reach >= dim && offsets.iter().all(|&o| o + patch <= dim)
        }
        covers(&self.col_offsets, self.patch, self.frame_w)
            && covers(&self.row_offsets, self.patch, self.frame_h)
    }

    /// Row and column index ranges whose windows intersect `[x0,x1) x [y0,y1)`.
    fn touching(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> (Vec<usize>, Vec<usize>) {
        let p = f64::from(self.patch);
        let pick = |offsets: &[u32], lo: f64, hi: f64| {
            offsets
                .iter()
                .enumerate()
                .filter(|&(_, &o)| f64::from(o) < hi && f64::from(o) + p > lo)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        (pick(&self.row_offsets, y0, y1), pick(&self.col_offsets, x0, x1))
    }
}

/// Manifest entry tying a patch image back to its frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub source_image_id: u64,
    pub patch_image_id: u64,
    pub row: usize,
    pub col: usize,
    pub x0: u32,
    pub y0: u32,
    pub patch_w: u32,
    pub patch_h: u32,
    pub frame_w: u32,
    pub frame_h: u32,
    pub patch_file_name: String,
}

impl PatchRecord {
    pub fn new(image: &ImageRecord, grid: &TileGrid, row: usize, col: usize) -> Result<Self> {
        if row >= MAX_GRID_AXIS || col >= MAX_GRID_AXIS {
            return Err(TileError::IdOverflow(image.id));
        }
        let patch_image_id = image
            .id
            .checked_mul(PATCH_ID_BASE)
            .and_then(|v| v.checked_add((row * 1000 + col) as u64))
            .ok_or(TileError::IdOverflow(image.id))?;
        let stem = Path::new(&image.file_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| image.file_name.clone());
        Ok(Self {
            source_image_id: image.id,
            patch_image_id,
            row,
            col,
            x0: grid.col_offsets[col],
            y0: grid.row_offsets[row],
            patch_w: grid.patch,
            patch_h: grid.patch,
            frame_w: grid.frame_w,
            frame_h: grid.frame_h,
            patch_file_name: format!("{stem}_r{row:02}_c{col:02}.jpg"),
        })
    }

    pub fn rect(&self) -> Rect {
        Rect {
            x0: self.x0,
            y0: self.y0,
            x1: self.x0 + self.patch_w,
            y1: self.y0 + self.patch_h,
        }
    }

    pub fn image_record(&self) -> ImageRecord {
        ImageRecord::new(
            self.patch_image_id,
            self.patch_file_name.clone(),
            self.patch_w,
            self.patch_h,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyPatchPolicy {
    /// Human-annotated sets: patches with no assigned instance are omitted.
    #[default]
    DropEmpty,
    /// Pseudo-labelled / unlabeled sets: every patch is emitted.
    KeepEmpty,
}

fn geom(id: u64) -> impl Fn(GeomError) -> TileError {
    move |source| TileError::Geometry { id, source }
}

fn fraction_in_rect(a: &Annotation, rect: &Rect) -> Result<f64> {
    match &a.segmentation {
        Segmentation::Polygons(p) => {
            let total = polygon_area(p).map_err(geom(a.id))?;
            if total <= 0.0 {
                return Err(TileError::Geometry {
                    id: a.id,
                    source: GeomError::DegeneratePolygon("zero-area instance".into()),
                });
            }
            let inside = clip_polygon_to_rect(p, rect);
            let kept = if inside.is_empty() {
                0.0
            } else {
                polygon_area(&inside).map_err(geom(a.id))?
            };
            Ok(kept / total)
        }
        Segmentation::Rle(m) => {
            let total = m.area();
            if total == 0 {
                return Err(TileError::Geometry {
                    id: a.id,
                    source: GeomError::DegeneratePolygon("empty mask".into()),
                });
            }
            let inside = rle_decode(m).crop(rect).count_ones();
            Ok(inside as f64 / total as f64)
        }
    }
}

/// Share of the instance's area inside the patch window.
pub fn instance_patch_fraction(a: &Annotation, p: &PatchRecord) -> Result<f64> {
    fraction_in_rect(a, &p.rect())
}

/// Best `(row, col, fraction)` for one annotation; ties go to the lowest
/// `(row, col)`.
fn best_patch(a: &Annotation, grid: &TileGrid) -> Result<Option<(usize, usize, f64)>> {
    let Some(ext) = a.segmentation.extent().map_err(geom(a.id))? else {
        return Ok(None);
    };
    let (rows, cols) = grid.touching(ext.x, ext.y, ext.right(), ext.bottom());
    let mut best: Option<(usize, usize, f64)> = None;
    for &row in &rows {
        for &col in &cols {
            let f = fraction_in_rect(a, &grid.patch_rect(row, col))?;
            if best.map_or(true, |(_, _, b)| f > b) {
                best = Some((row, col, f));
            }
        }
    }
    Ok(best.filter(|&(_, _, f)| f > ASSIGN_FRACTION))
}

/// Maps every annotation id to the patch it belongs to, or `None` when no
/// patch holds more than half of it.
pub fn assign_instances(
    d: &Dataset,
    grids: &HashMap<u64, TileGrid>,
) -> Result<BTreeMap<u64, Option<PatchRecord>>> {
    let images = d.image_index();
    let mut out = BTreeMap::new();
    for a in &d.annotations {
        let grid = grids.get(&a.image_id).ok_or(TileError::MissingGrid(a.image_id))?;
        let image = images.get(&a.image_id).ok_or(TileError::MissingGrid(a.image_id))?;
        let rec = match best_patch(a, grid)? {
            Some((row, col, _)) => Some(PatchRecord::new(image, grid, row, col)?),
            None => None,
        };
        out.insert(a.id, rec);
    }
    Ok(out)
}

/// Clips an instance to the patch window and moves it into patch coordinates.
pub fn crop_annotation(a: &Annotation, p: &PatchRecord) -> Result<Annotation> {
    let rect = p.rect();
    let segmentation = match &a.segmentation {
        Segmentation::Polygons(poly) => Segmentation::Polygons(
            clip_polygon_to_rect(poly, &rect).translate(-f64::from(p.x0), -f64::from(p.y0)),
        ),
        Segmentation::Rle(m) => Segmentation::Rle(rle_encode(&rle_decode(m).crop(&rect))),
    };
    let area = segmentation.area().map_err(geom(a.id))?;
    let bbox = segmentation
        .extent()
        .map_err(geom(a.id))?
        .ok_or_else(|| TileError::Geometry {
            id: a.id,
            source: GeomError::DegeneratePolygon("instance vanished after clipping".into()),
        })?;
    Ok(Annotation {
        image_id: p.patch_image_id,
        segmentation,
        bbox,
        area,
        ..a.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiledDataset {
    pub dataset: Dataset,
    pub manifest: Vec<PatchRecord>,
    /// Annotation ids that no patch holds more than half of.
    pub unassigned: Vec<u64>,
    /// Grid windows before empty-patch filtering.
    pub generated: usize,
}

struct ImageTiles {
    patches: Vec<(PatchRecord, Vec<Annotation>)>,
    unassigned: Vec<u64>,
}

fn tile_image(
    image: &ImageRecord,
    anns: &[&Annotation],
    patch: u32,
    stride: u32,
) -> Result<ImageTiles> {
    let grid = compute_grid(image.width, image.height, patch, stride)?;
    let mut buckets: BTreeMap<(usize, usize), Vec<Annotation>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for a in anns {
        match best_patch(a, &grid)? {
            Some((row, col, _)) => {
                let rec = PatchRecord::new(image, &grid, row, col)?;
                buckets.entry((row, col)).or_default().push(crop_annotation(a, &rec)?);
            }
            None => unassigned.push(a.id),
        }
    }
    let mut patches = Vec::with_capacity(grid.len());
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            let rec = PatchRecord::new(image, &grid, row, col)?;
            patches.push((rec, buckets.remove(&(row, col)).unwrap_or_default()));
        }
    }
    Ok(ImageTiles { patches, unassigned })
}

/// Tiles every image with the given window and stride. Output images,
/// annotations and manifest entries are ordered by (source image id, row,
/// col); annotations keep their ids.
pub fn tile_dataset(
    d: &Dataset,
    policy: EmptyPatchPolicy,
    patch: u32,
    stride: u32,
) -> Result<TiledDataset> {
    let by_image = d.annotations_by_image();
    let mut images: Vec<&ImageRecord> = d.images.iter().collect();
    images.sort_by_key(|im| im.id);

    let tiles = images
        .par_iter()
        .map(|im| {
            let anns = by_image.get(&im.id).map(Vec::as_slice).unwrap_or(&[]);
            tile_image(im, anns, patch, stride)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Dataset {
        images: Vec::new(),
        annotations: Vec::new(),
        categories: d.categories.clone(),
        extra: d.extra.clone(),
    };
    let mut manifest = Vec::new();
    let mut unassigned = Vec::new();
    let mut generated = 0;
    for t in tiles {
        unassigned.extend(t.unassigned);
        generated += t.patches.len();
        for (rec, anns) in t.patches {
            if anns.is_empty() && policy == EmptyPatchPolicy::DropEmpty {
                continue;
            }
            out.images.push(rec.image_record());
            out.annotations.extend(anns);
            manifest.push(rec);
        }
    }
    Ok(TiledDataset {
        dataset: out,
        manifest,
        unassigned,
        generated,
    })
}
