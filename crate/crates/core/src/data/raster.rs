use crate::error::{Error, Result};
use crate::metrics::InstanceMask;

/// Shoelace area of a flat `x0, y0, x1, y1, …` vertex list.
pub fn polygon_area(flat: &[f64]) -> f64 {
    let n = flat.len() / 2;
    let mut twice = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        twice += flat[2 * i] * flat[2 * j + 1] - flat[2 * j] * flat[2 * i + 1];
    }
    twice.abs() / 2.0
}

/// Even-odd fill of a flat `x0, y0, x1, y1, …` polygon. Pixel `(x, y)` covers
/// `[x, x+1) × [y, y+1)` and is set iff its centre lies inside. Vertices are
/// clamped to the image rectangle first; a zero-area polygon yields an empty
/// mask.
pub fn rasterize_polygon(flat: &[f64], width: usize, height: usize) -> Result<InstanceMask> {
    if flat.len() % 2 != 0 || flat.len() < 6 {
        return Err(Error::invalid(format!(
            "polygon needs at least 3 vertices as x,y pairs, got {} numbers",
            flat.len()
        )));
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("polygon has non-finite coordinates"));
    }
    let pts: Vec<(f64, f64)> = flat
        .chunks(2)
        .map(|p| (p[0].clamp(0.0, width as f64), p[1].clamp(0.0, height as f64)))
        .collect();
    let mut mask = InstanceMask::empty(width, height);
    let mut crossings = Vec::new();
    for y in 0..height {
        let py = y as f64 + 0.5;
        crossings.clear();
        for i in 0..pts.len() {
            let (xi, yi) = pts[i];
            let (xj, yj) = pts[(i + pts.len() - 1) % pts.len()];
            if (yi > py) != (yj > py) {
                crossings.push((xj - xi) * (py - yi) / (yj - yi) + xi);
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        // A centre is inside iff an odd number of crossings lie strictly to its right.
        let mut right = crossings.len();
        let mut k = 0;
        for x in 0..width {
            let px = x as f64 + 0.5;
            while k < crossings.len() && crossings[k] <= px {
                k += 1;
                right -= 1;
            }
            if right % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sets_nine_pixels() {
        let m = rasterize_polygon(&[1.0, 1.0, 4.0, 1.0, 4.0, 4.0, 1.0, 4.0], 6, 6).unwrap();
        assert_eq!(m.count(), 9);
        for y in 1..4 {
            for x in 1..4 {
                assert!(m.get(x, y));
            }
        }
    }

    #[test]
    fn triangle_area_matches_shoelace() {
        let tri = [0.0, 0.0, 2.0, 0.0, 0.0, 2.0];
        let m = rasterize_polygon(&tri, 2, 2).unwrap();
        assert!((m.count() as f64 - polygon_area(&tri)).abs() <= 1.0);
        let big = [3.0, 2.0, 57.0, 9.0, 20.0, 61.0];
        let m = rasterize_polygon(&big, 64, 64).unwrap();
        let area = polygon_area(&big);
        assert!((m.count() as f64 - area).abs() / area < 0.02);
    }

    #[test]
    fn orientation_does_not_matter() {
        let ccw = [1.0, 1.0, 7.0, 2.0, 5.0, 6.5, 2.0, 5.0];
        let cw: Vec<f64> = ccw.chunks(2).rev().flatten().copied().collect();
        assert_eq!(rasterize_polygon(&ccw, 8, 8).unwrap(), rasterize_polygon(&cw, 8, 8).unwrap());
    }

    #[test]
    fn degenerate_and_malformed_polygons() {
        let line = [0.0, 0.0, 3.0, 3.0, 6.0, 6.0];
        assert_eq!(polygon_area(&line), 0.0);
        assert!(rasterize_polygon(&line, 8, 8).unwrap().is_empty());
        assert!(rasterize_polygon(&[0.0, 0.0, 1.0, 1.0], 4, 4).is_err());
        assert!(rasterize_polygon(&[0.0, 0.0, 1.0, 1.0, 2.0], 4, 4).is_err());
    }

    #[test]
    fn out_of_bounds_vertices_are_clamped() {
        let m = rasterize_polygon(&[-5.0, -5.0, 20.0, -5.0, 20.0, 20.0, -5.0, 20.0], 4, 3).unwrap();
        assert_eq!(m.count(), 12);
    }
}
