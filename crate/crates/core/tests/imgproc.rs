mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use shcnn::imgproc::{self, Contour, Point};
use shcnn::{BinaryImage, GrayImage};
use support::{components, equalize_oracle, erode_oracle, outer_boundary};

fn gray_image() -> impl Strategy<Value = GrayImage> {
    (1usize..=16, 1usize..=16).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

/// Few gray levels so that ties and empty bins are common.
fn coarse_image() -> impl Strategy<Value = GrayImage> {
    (1usize..=16, 1usize..=16).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..6, w * h)
            .prop_map(move |px| GrayImage::new(w, h, px.into_iter().map(|v| v * 40 + 7).collect()).unwrap())
    })
}

fn binary_image() -> impl Strategy<Value = BinaryImage> {
    (1usize..=16, 1usize..=16, 0.1f64..0.9).prop_flat_map(|(w, h, p)| {
        prop::collection::vec(prop::bool::weighted(p), w * h)
            .prop_map(move |b| BinaryImage::new(w, h, b.into_iter().map(u8::from).collect()).unwrap())
    })
}

/// Between-class variance of `{v < t}` vs `{v >= t}` scaled by `N²`, as an exact fraction.
fn otsu_score(px: &[u8], t: u32) -> (u128, u128) {
    let n = px.len() as i128;
    let total: i128 = px.iter().map(|&v| v as i128).sum();
    let w0 = px.iter().filter(|&&v| (v as u32) < t).count() as i128;
    let s0: i128 = px.iter().filter(|&&v| (v as u32) < t).map(|&v| v as i128).sum();
    let w1 = n - w0;
    if w0 == 0 || w1 == 0 {
        return (0, 1);
    }
    let d = n * s0 - w0 * total;
    ((d * d) as u128, (w0 * w1) as u128)
}

fn shoelace(points: &[Point]) -> f64 {
    let n = points.len();
    let mut twice = 0i64;
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        twice += a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64;
    }
    twice.abs() as f64 / 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn equalize_matches_cdf_formula(img in gray_image()) {
        prop_assert_eq!(imgproc::equalize_histogram(&img).into_pixels(), equalize_oracle(&img));
    }

    #[test]
    fn equalize_coarse_matches_cdf_formula(img in coarse_image()) {
        prop_assert_eq!(imgproc::equalize_histogram(&img).into_pixels(), equalize_oracle(&img));
    }

    #[test]
    fn equalize_is_monotone_from_zero(img in gray_image()) {
        let out = imgproc::equalize_histogram(&img);
        let constant = img.pixels().iter().all(|&p| p == img.pixels()[0]);
        if !constant {
            prop_assert_eq!(*out.pixels().iter().min().unwrap(), 0);
        }
        for (i, &a) in img.pixels().iter().enumerate() {
            for (j, &b) in img.pixels().iter().enumerate() {
                if a <= b {
                    prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                }
            }
        }
    }

    #[test]
    fn equalization_lut_agrees_with_image(img in coarse_image()) {
        let lut = imgproc::equalization_lut(&img);
        let out = imgproc::equalize_histogram(&img);
        for (&p, &q) in img.pixels().iter().zip(out.pixels()) {
            prop_assert_eq!(lut[p as usize], q);
        }
        prop_assert!(lut.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn otsu_maximizes_between_class_variance(img in prop_oneof![gray_image(), coarse_image()]) {
        let px = img.pixels();
        let best = (0..=255).map(|t| otsu_score(px, t)).fold((0u128, 1u128), |a, b| {
            if b.0 * a.1 > a.0 * b.1 { b } else { a }
        });
        let t = imgproc::otsu_threshold(&img);
        let got = otsu_score(px, t as u32);
        prop_assert_eq!(got.0 * best.1, best.0 * got.1, "t = {} is not a maximizer", t);
        // smallest maximizer
        for s in 0..t as u32 {
            let o = otsu_score(px, s);
            prop_assert!(o.0 * best.1 < best.0 * o.1);
        }
    }

    #[test]
    fn threshold_is_pixelwise(img in gray_image(), t in any::<u8>()) {
        let b = imgproc::threshold_binary(&img, Some(t));
        for (&p, &bit) in img.pixels().iter().zip(b.bits()) {
            prop_assert_eq!(bit == 1, p >= t);
        }
    }

    #[test]
    fn erode_matches_set_definition(img in binary_image(), r in 1usize..=3) {
        let out = imgproc::erode(&img, r);
        prop_assert_eq!(&out, &erode_oracle(&img, r));
        prop_assert!(out.is_subset_of(&img));
    }

    #[test]
    fn borders_match_flood_fill_boundaries(img in binary_image()) {
        let contours = imgproc::follow_borders(&img);
        let comps = components(&img);
        prop_assert_eq!(contours.len(), comps.len());
        for (c, comp) in contours.iter().zip(&comps) {
            let got: BTreeSet<Point> = c.points.iter().copied().collect();
            prop_assert_eq!(&got, &outer_boundary(&img, comp));
            prop_assert_eq!(c.points[0], *comp.iter().min_by_key(|p| (p.y, p.x)).unwrap());
            let n = c.points.len();
            for i in 0..n {
                let (a, b) = (c.points[i], c.points[(i + 1) % n]);
                prop_assert!((a.x - b.x).abs() <= 1 && (a.y - b.y).abs() <= 1);
                if n > 1 {
                    prop_assert_ne!(a, b);
                }
            }
        }
    }

    #[test]
    fn largest_has_max_shoelace_area(img in binary_image()) {
        let contours = imgproc::follow_borders(&img);
        prop_assume!(!contours.is_empty());
        let max = contours.iter().map(|c| shoelace(&c.points)).fold(f64::MIN, f64::max);
        let best = imgproc::largest_contour(&contours).unwrap();
        prop_assert_eq!(shoelace(&best.points), max);
        let first = contours.iter().find(|c| shoelace(&c.points) == max).unwrap();
        prop_assert_eq!(best, first);
    }

    #[test]
    fn side_centers_of_jittered_rectangle(
        x0 in 0i32..5, y0 in 0i32..5, w in 3i32..12, h in 3i32..12,
        dents in prop::collection::vec((0usize..4, 0i32..12), 0..6),
    ) {
        // rectangle outline with a few border pixels pushed one step inward
        let mut img = BinaryImage::from_fn(20, 20, |x, y| {
            let (x, y) = (x as i32, y as i32);
            x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
        });
        for (side, k) in dents {
            let (x, y) = match side {
                0 => (x0 + 1 + k % (w - 2), y0),
                1 => (x0 + w - 1, y0 + 1 + k % (h - 2)),
                2 => (x0 + 1 + k % (w - 2), y0 + h - 1),
                _ => (x0, y0 + 1 + k % (h - 2)),
            };
            img.set(x as usize, y as usize, false);
        }
        let contours = imgproc::follow_borders(&img);
        let c: &Contour = imgproc::largest_contour(&contours).unwrap();
        let [top, right, bottom, left] = imgproc::side_centers(c).unwrap();
        let (bx0, by0, bx1, by1) = c.bounds().unwrap();
        let mid = |sel: &dyn Fn(&Point) -> Option<i32>| {
            let v: Vec<i32> = c.points.iter().filter_map(sel).collect();
            (*v.iter().min().unwrap() as f64 + *v.iter().max().unwrap() as f64) / 2.0
        };
        prop_assert_eq!((top.x, top.y), (mid(&|p| (p.y == by0).then_some(p.x)), by0 as f64));
        prop_assert_eq!((bottom.x, bottom.y), (mid(&|p| (p.y == by1).then_some(p.x)), by1 as f64));
        prop_assert_eq!((left.x, left.y), (bx0 as f64, mid(&|p| (p.x == bx0).then_some(p.y))));
        prop_assert_eq!((right.x, right.y), (bx1 as f64, mid(&|p| (p.x == bx1).then_some(p.y))));
        prop_assert!(top.x >= bx0 as f64 && top.x <= bx1 as f64);
        prop_assert!(left.y >= by0 as f64 && left.y <= by1 as f64);
    }
}

#[test]
fn filled_square_has_eight_point_perimeter() {
    let img = BinaryImage::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
    let contours = imgproc::follow_borders(&img);
    assert_eq!(contours.len(), 1);
    let pts = &contours[0].points;
    assert_eq!(pts.len(), 8);
    let want: BTreeSet<Point> = (1..=3)
        .flat_map(|y| (1..=3).map(move |x| Point::new(x, y)))
        .filter(|p| *p != Point::new(2, 2))
        .collect();
    assert_eq!(pts.iter().copied().collect::<BTreeSet<_>>(), want);
    // clockwise on screen: east along the top row first
    assert_eq!(&pts[..3], &[Point::new(1, 1), Point::new(2, 1), Point::new(3, 1)]);
}

#[test]
fn equalize_ramp_example() {
    let img = GrayImage::new(4, 1, vec![0, 1, 2, 3]).unwrap();
    assert_eq!(imgproc::equalize_histogram(&img).pixels(), &[0, 85, 170, 255]);
}

#[test]
fn pgm_round_trip() {
    let img = GrayImage::from_fn(7, 3, |x, y| (x * 31 + y * 7) as u8);
    let back = GrayImage::read_pgm(img.to_pgm_bytes().as_slice()).unwrap();
    assert_eq!(back, img);
    assert!(GrayImage::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
}
