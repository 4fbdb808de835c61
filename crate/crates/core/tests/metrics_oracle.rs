//! The metric functions against independent brute-force counting.
//!
//! The oracle enumerates coarse cells and, for each, the pixel range
//! `[⌈c/δ⌉, ⌈(c+1)/δ⌉)` that maps into it, which is a different route from
//! the per-pixel floor used by the implementation.

use edgeattnet::metrics::{
    downsample, iou_multiscale, iou_pairwise, scale_ratio, InstanceMask, ScaleSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 16;

fn random_mask(rng: &mut ChaCha8Rng) -> InstanceMask {
    // Mix sparse noise with a random rectangle so overlaps are common.
    let density = rng.gen_range(0.05..0.5);
    let (x0, y0) = (rng.gen_range(0..N), rng.gen_range(0..N));
    let (x1, y1) = (rng.gen_range(x0..N), rng.gen_range(y0..N));
    let bits = (0..N * N)
        .map(|i| {
            let (x, y) = (i % N, i / N);
            rng.gen_bool(density) || (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
        })
        .collect();
    InstanceMask::new(N, N, bits).unwrap()
}

fn oracle_iou(a: &InstanceMask, b: &InstanceMask) -> f64 {
    let (mut i, mut u) = (0u32, 0u32);
    for y in 0..a.height {
        for x in 0..a.width {
            let (p, q) = (a.get(x, y), b.get(x, y));
            if p && q {
                i += 1;
            }
            if p || q {
                u += 1;
            }
        }
    }
    if i == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

fn pixel_range(cell: usize, delta: f64, n: usize) -> std::ops::Range<usize> {
    let lo = (cell as f64 / delta).ceil() as usize;
    let hi = ((cell + 1) as f64 / delta).ceil() as usize;
    lo.min(n)..hi.min(n)
}

fn oracle_cells(m: &InstanceMask, delta: f64) -> Vec<Vec<bool>> {
    let gh = (m.height as f64 * delta).ceil() as usize;
    let gw = (m.width as f64 * delta).ceil() as usize;
    (0..gh)
        .map(|cy| {
            (0..gw)
                .map(|cx| {
                    pixel_range(cy, delta, m.height)
                        .any(|y| pixel_range(cx, delta, m.width).any(|x| m.get(x, y)))
                })
                .collect()
        })
        .collect()
}

fn oracle_ratio(a: &InstanceMask, b: &InstanceMask, delta: f64) -> f64 {
    let (ca, cb) = (oracle_cells(a, delta), oracle_cells(b, delta));
    let mut n = 0u32;
    let mut both = 0u32;
    for (ra, rb) in ca.iter().zip(&cb) {
        for (p, q) in ra.iter().zip(rb) {
            n += u32::from(*p);
            both += u32::from(*p && *q);
        }
    }
    if n == 0 {
        0.0
    } else {
        both as f64 / n as f64
    }
}

fn oracle_multiscale(a: &InstanceMask, b: &InstanceMask, deltas: &[f64]) -> f64 {
    let mut s = 0.0;
    for &d in deltas {
        s += oracle_ratio(a, b, d);
    }
    s / deltas.len() as f64
}

#[test]
fn two_hundred_random_pairs_agree_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scales = ScaleSet::default();
    for case in 0..200 {
        let (a, b) = (random_mask(&mut rng), random_mask(&mut rng));
        assert_eq!(iou_pairwise(&a, &b).unwrap(), oracle_iou(&a, &b), "case {case}");
        for &d in scales.deltas() {
            let g = downsample(&a, d).unwrap();
            let o = oracle_cells(&a, d);
            assert_eq!((g.height, g.width), (o.len(), o[0].len()));
            for (cy, row) in o.iter().enumerate() {
                for (cx, &v) in row.iter().enumerate() {
                    assert_eq!(g.get(cx, cy), v, "case {case} delta {d} cell {cx},{cy}");
                }
            }
            assert_eq!(scale_ratio(&a, &b, d).unwrap(), oracle_ratio(&a, &b, d), "case {case}");
        }
        assert_eq!(
            iou_multiscale(&a, &b, &scales).unwrap(),
            oracle_multiscale(&a, &b, scales.deltas()),
            "case {case}"
        );
    }
}

#[test]
fn worked_examples_agree_with_oracle() {
    let rows = |r: std::ops::Range<usize>| InstanceMask::from_fn(4, 4, |_, y| r.contains(&y));
    let (gt, pt) = (rows(0..2), rows(1..3));
    assert_eq!(iou_pairwise(&gt, &pt).unwrap(), 1.0 / 3.0);
    assert_eq!(oracle_iou(&gt, &pt), 1.0 / 3.0);

    let checker = InstanceMask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
    assert_eq!(downsample(&checker, 0.5).unwrap().count(), 4);
    assert_eq!(oracle_cells(&checker, 0.5).iter().flatten().filter(|&&v| v).count(), 4);

    let a = InstanceMask::from_fn(8, 8, |x, y| (x, y) == (0, 0));
    let b = InstanceMask::from_fn(8, 8, |x, y| (x, y) == (1, 0));
    let two = ScaleSet::new(vec![1.0, 0.5]).unwrap();
    assert_eq!(scale_ratio(&a, &b, 0.5).unwrap(), 1.0);
    assert_eq!(iou_multiscale(&a, &b, &two).unwrap(), 0.5);
    assert_eq!(oracle_multiscale(&a, &b, two.deltas()), 0.5);
}
