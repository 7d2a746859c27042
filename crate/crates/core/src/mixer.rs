//! Blended training views: combination-ratio sampling, binary rectangle
//! masks, resize- and crop-based blending, and the augment-then-mix
//! pipeline with its placement ablations.
//!
//! Everything here is outside the gradient path and works on raw f32
//! pixel buffers. All randomness comes from the caller's generator; draw
//! orders are fixed and documented per function, and zero-effect
//! augmentations (pad 0, flip probability 0) consume no draws, so
//! equal-seed runs of different placements stay comparable.

use crate::dataset::{ImageDims, ImageSample};
use crate::rng::Prng;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// Foreground patch location, in pixels of the full frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl MaskRect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Whether pixel (y, x) falls inside the foreground rectangle.
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }
}

/// Provenance of one blended view. The soft label and the loss weights
/// downstream both use `lambda_effective`, the realized mask-area
/// fraction, so labels stay exactly consistent with the pixels;
/// `lambda_sampled` is the pre-rounding target (in [0.2,0.8] unless the
/// full-range ablation is on).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixRecord {
    pub fg_class: usize,
    pub bg_class: usize,
    pub lambda_sampled: f64,
    pub lambda_effective: f64,
    pub mask_rect: MaskRect,
    pub soft_label: Vec<f64>,
}

/// When augmentation runs relative to blending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    BeforeMix,
    AfterMix,
    None,
}

/// Which blending operation fills the mask rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixOp {
    Resize,
    Crop,
}

/// Pad-then-random-crop plus horizontal flip, and where they run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub pad: usize,
    pub flip_prob: f64,
    pub placement: Placement,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            pad: 4,
            flip_prob: 0.5,
            placement: Placement::BeforeMix,
        }
    }
}

/// Everything view construction needs beyond the two images.
#[derive(Debug, Clone, Copy)]
pub struct MixParams {
    pub num_classes: usize,
    pub alpha: f64,
    /// Ablation switch: keep the raw Beta draw on [0,1] instead of the
    /// normalized [0.2,0.8] band.
    pub full_range: bool,
    pub mix_op: MixOp,
    pub policy: AugmentPolicy,
}

fn map_to_band(raw: f64) -> f64 {
    0.2 + 0.6 * raw
}

/// Draws the combination ratio: λ_raw ~ Beta(α,α), affinely rescaled into
/// [0.2,0.8] (one draw; the rescale preserves the distribution's shape
/// rather than clamping mass onto the endpoints) unless `full_range`.
pub fn sample_lambda(alpha: f64, full_range: bool, rng: &mut Prng) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    let raw = Beta::new(alpha, alpha).expect("valid beta").sample(rng);
    if full_range {
        raw
    } else {
        map_to_band(raw)
    }
}

/// Places the foreground rectangle for a target area fraction `lambda`:
/// sides round(H·√λ) × round(W·√λ) (clamped to [1, side]), position
/// uniform over valid top-left corners (draw order: top, then left).
/// Returns the rect and the realized area fraction.
pub fn make_mask(h: usize, w: usize, lambda: f64, rng: &mut Prng) -> (MaskRect, f64) {
    assert!(h >= 8 && w >= 8, "frame sides below 8");
    assert!((0.0..=1.0).contains(&lambda), "lambda outside [0,1]");
    let side = lambda.sqrt();
    let height = ((h as f64 * side).round() as usize).clamp(1, h);
    let width = ((w as f64 * side).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - height);
    let left = rng.random_range(0..=w - width);
    let rect = MaskRect {
        top,
        left,
        height,
        width,
    };
    let lambda_effective = rect.area() as f64 / (h * w) as f64;
    (rect, lambda_effective)
}

fn lerp(a: f64, t: f64, b: f64) -> f64 {
    // This form is exact for a == b, which keeps constant images constant
    // through resampling.
    a + t * (b - a)
}

/// Blends by bilinear-resizing the whole foreground into the mask rect of
/// the background. Outside the rect the output equals `bg` bit-for-bit.
pub fn resize_mix(fg: &[f32], bg: &[f32], dims: ImageDims, rect: &MaskRect) -> Vec<f32> {
    assert_eq!(fg.len(), dims.numel(), "fg pixel buffer mismatch");
    assert_eq!(bg.len(), dims.numel(), "bg pixel buffer mismatch");
    assert!(
        rect.top + rect.height <= dims.h && rect.left + rect.width <= dims.w,
        "mask rect outside frame"
    );
    let (h, w) = (dims.h, dims.w);
    let mut out = bg.to_vec();
    let sy_scale = h as f64 / rect.height as f64;
    let sx_scale = w as f64 / rect.width as f64;
    for ch in 0..dims.c {
        let plane = &fg[ch * h * w..(ch + 1) * h * w];
        let out_plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for yd in 0..rect.height {
            let sy = ((yd as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for xd in 0..rect.width {
                let sx = ((xd as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let top = lerp(plane[y0 * w + x0] as f64, fx, plane[y0 * w + x1] as f64);
                let bot = lerp(plane[y1 * w + x0] as f64, fx, plane[y1 * w + x1] as f64);
                let v = lerp(top, fy, bot).clamp(0.0, 1.0);
                out_plane[(rect.top + yd) * w + rect.left + xd] = v as f32;
            }
        }
    }
    out
}

/// Blending ablation: instead of resizing, crops a rect-sized window from
/// a uniformly random position of the foreground (draw order: source top,
/// then source left) and pastes it at the mask rect.
pub fn crop_mix(
    fg: &[f32],
    bg: &[f32],
    dims: ImageDims,
    rect: &MaskRect,
    rng: &mut Prng,
) -> Vec<f32> {
    assert_eq!(fg.len(), dims.numel(), "fg pixel buffer mismatch");
    assert_eq!(bg.len(), dims.numel(), "bg pixel buffer mismatch");
    assert!(
        rect.top + rect.height <= dims.h && rect.left + rect.width <= dims.w,
        "mask rect outside frame"
    );
    let (h, w) = (dims.h, dims.w);
    let src_top = rng.random_range(0..=h - rect.height);
    let src_left = rng.random_range(0..=w - rect.width);
    let mut out = bg.to_vec();
    for ch in 0..dims.c {
        let plane = &fg[ch * h * w..(ch + 1) * h * w];
        let out_plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for yd in 0..rect.height {
            let src_row = (src_top + yd) * w + src_left;
            let dst_row = (rect.top + yd) * w + rect.left;
            out_plane[dst_row..dst_row + rect.width]
                .copy_from_slice(&plane[src_row..src_row + rect.width]);
        }
    }
    out
}

/// Pad-with-zeros-then-random-crop (offsets drawn as dy, dx over
/// [0, 2·pad], skipped entirely when pad is 0) followed by a horizontal
/// flip with probability `flip_prob` (one draw, skipped when 0).
pub fn augment(
    pixels: &[f32],
    dims: ImageDims,
    pad: usize,
    flip_prob: f64,
    rng: &mut Prng,
) -> Vec<f32> {
    assert_eq!(pixels.len(), dims.numel(), "pixel buffer mismatch");
    let (h, w) = (dims.h, dims.w);
    let mut out;
    if pad > 0 {
        let dy = rng.random_range(0..=2 * pad);
        let dx = rng.random_range(0..=2 * pad);
        out = vec![0.0f32; pixels.len()];
        for ch in 0..dims.c {
            let plane = &pixels[ch * h * w..(ch + 1) * h * w];
            let out_plane = &mut out[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                let sy = y + dy;
                if sy < pad || sy >= pad + h {
                    continue;
                }
                for x in 0..w {
                    let sx = x + dx;
                    if sx < pad || sx >= pad + w {
                        continue;
                    }
                    out_plane[y * w + x] = plane[(sy - pad) * w + sx - pad];
                }
            }
        }
    } else {
        out = pixels.to_vec();
    }
    if flip_prob > 0.0 && rng.random::<f64>() < flip_prob {
        for ch in 0..dims.c {
            let plane = &mut out[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                plane[y * w..(y + 1) * w].reverse();
            }
        }
    }
    out
}

/// Builds one blended training view and its record.
///
/// `lambda` overrides the ratio draw (used to share λ between the two
/// views of a pair); `None` samples a fresh one. Draw order: foreground
/// augmentation, background augmentation (before-mix placement only),
/// λ (unless overridden), mask position, crop source (crop op only),
/// mixture augmentation (after-mix placement only).
pub fn make_training_view(
    fg: &ImageSample,
    bg: &ImageSample,
    dims: ImageDims,
    params: &MixParams,
    lambda: Option<f64>,
    rng: &mut Prng,
) -> (Vec<f32>, MixRecord) {
    assert!(fg.class_id < params.num_classes && bg.class_id < params.num_classes);
    let policy = &params.policy;

    let (fg_px, bg_px): (std::borrow::Cow<[f32]>, std::borrow::Cow<[f32]>) =
        if policy.placement == Placement::BeforeMix {
            (
                augment(&fg.pixels, dims, policy.pad, policy.flip_prob, rng).into(),
                augment(&bg.pixels, dims, policy.pad, policy.flip_prob, rng).into(),
            )
        } else {
            ((&fg.pixels[..]).into(), (&bg.pixels[..]).into())
        };

    let lambda_sampled = lambda.unwrap_or_else(|| sample_lambda(params.alpha, params.full_range, rng));
    let (rect, lambda_effective) = make_mask(dims.h, dims.w, lambda_sampled, rng);
    let mut blended = match params.mix_op {
        MixOp::Resize => resize_mix(&fg_px, &bg_px, dims, &rect),
        MixOp::Crop => crop_mix(&fg_px, &bg_px, dims, &rect, rng),
    };
    if policy.placement == Placement::AfterMix {
        blended = augment(&blended, dims, policy.pad, policy.flip_prob, rng);
    }

    let mut soft_label = vec![0.0; params.num_classes];
    soft_label[fg.class_id] += lambda_effective;
    soft_label[bg.class_id] += 1.0 - lambda_effective;

    let record = MixRecord {
        fg_class: fg.class_id,
        bg_class: bg.class_id,
        lambda_sampled,
        lambda_effective,
        mask_rect: rect,
        soft_label,
    };
    (blended, record)
}

/// An un-mixed view for no-mixing training: optional augmentation, a
/// full-frame "mask", a one-hot label, λ_effective = 1.
pub fn make_plain_view(
    sample: &ImageSample,
    dims: ImageDims,
    num_classes: usize,
    policy: &AugmentPolicy,
    rng: &mut Prng,
) -> (Vec<f32>, MixRecord) {
    let pixels = if policy.placement == Placement::None {
        sample.pixels.clone()
    } else {
        augment(&sample.pixels, dims, policy.pad, policy.flip_prob, rng)
    };
    let mut soft_label = vec![0.0; num_classes];
    soft_label[sample.class_id] = 1.0;
    let record = MixRecord {
        fg_class: sample.class_id,
        bg_class: sample.class_id,
        lambda_sampled: 1.0,
        lambda_effective: 1.0,
        mask_rect: MaskRect {
            top: 0,
            left: 0,
            height: dims.h,
            width: dims.w,
        },
        soft_label,
    };
    (pixels, record)
}
