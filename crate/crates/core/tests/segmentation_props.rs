use std::collections::VecDeque;

use circuitrec::imaging::{convert, ColorSpace, Image};
use circuitrec::segmentation::{segment, LabelMap, SegmentationParams};
use proptest::prelude::*;

fn arb_image() -> impl Strategy<Value = Image> {
    (4usize..24, 4usize..24, 1u8..5).prop_flat_map(|(w, h, levels)| {
        proptest::collection::vec(0..levels, w * h * 3).prop_map(move |v| {
            let step = 255 / levels.max(1);
            Image::from_fn_rgb(w, h, |x, y| {
                let i = (y * w + x) * 3;
                [v[i] * step, v[i + 1] * step, v[i + 2] * step]
            })
        })
    })
}

fn arb_params() -> impl Strategy<Value = SegmentationParams> {
    (0.0f64..1.5, 1.0f64..800.0, 1usize..40).prop_map(|(sigma, k, min_size)| SegmentationParams { sigma, k, min_size })
}

/// Number of 4-connected pieces of label `l`.
fn pieces_of(labels: &LabelMap, l: u32) -> usize {
    let (w, h) = (labels.width(), labels.height());
    let lab = labels.labels();
    let mut seen = vec![false; lab.len()];
    let mut count = 0;
    for start in 0..lab.len() {
        if lab[start] != l || seen[start] {
            continue;
        }
        count += 1;
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = q.pop_front() {
            let (x, y) = (i % w, i / w);
            let nbrs = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in nbrs.into_iter().flatten() {
                if lab[j] == l && !seen[j] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
    }
    count
}

proptest! {
    #[test]
    fn labels_are_dense_and_regions_connected(img in arb_image(), params in arb_params()) {
        let labels = segment(&img, &params);
        let n = labels.num_regions();
        prop_assert!(n >= 1);
        prop_assert!(labels.labels().iter().all(|&l| (l as usize) < n));
        let sizes = labels.region_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), img.area());
        for l in 0..n as u32 {
            prop_assert_eq!(pieces_of(&labels, l), 1, "region {} is not 4-connected", l);
        }
    }

    #[test]
    fn small_regions_only_when_the_image_is_one_region(img in arb_image(), params in arb_params()) {
        let labels = segment(&img, &params);
        if labels.num_regions() > 1 {
            prop_assert!(labels.region_sizes().iter().all(|&s| s >= params.min_size));
        }
    }

    #[test]
    fn segmentation_is_deterministic(img in arb_image(), params in arb_params()) {
        prop_assert_eq!(segment(&img, &params), segment(&img, &params));
    }

    #[test]
    fn two_flat_halves_split_at_the_seam(
        w in 4usize..30,
        h in 2usize..20,
        split_frac in 0.2f64..0.8,
        a in any::<[u8; 3]>(),
        b in any::<[u8; 3]>(),
    ) {
        prop_assume!(a != b);
        let split = ((w as f64 * split_frac) as usize).clamp(1, w - 1);
        let img = Image::from_fn_rgb(w, h, |x, _| if x < split { a } else { b });
        // Colors differ by at least one level, which beats k / size for
        // any region of two or more pixels.
        let params = SegmentationParams { sigma: 0.0, k: 1.0, min_size: 1 };
        let labels = segment(&img, &params);
        prop_assert_eq!(labels.num_regions(), 2);
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(labels.label(x, y) == labels.label(0, 0), x < split);
            }
        }
    }

    #[test]
    fn flat_images_are_one_region(
        w in 1usize..30,
        h in 1usize..30,
        c in any::<[u8; 3]>(),
        params in arb_params(),
    ) {
        let img = Image::filled_rgb(w, h, c);
        prop_assert_eq!(segment(&img, &params).num_regions(), 1);
    }

    #[test]
    fn every_color_space_segments(img in arb_image(), params in arb_params()) {
        for cs in [ColorSpace::Hsv, ColorSpace::Lab, ColorSpace::Gray] {
            let labels = segment(&convert(&img, cs), &params);
            prop_assert_eq!(labels.region_sizes().iter().sum::<usize>(), img.area());
        }
    }
}
