use super::polygon::edge_crossing_x;
use super::{BinaryMask, Polygon};

/// Scanline even-odd fill. Pixel `(i, j)` is set iff its centre
/// `(i + 0.5, j + 0.5)` is inside `poly`; parts of the polygon off the canvas
/// are ignored.
pub fn rasterize_polygon(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    fill_into(&mut mask, poly);
    mask
}

/// Union of several rasterized polygons on one canvas.
pub fn rasterize_union<'a>(
    polys: impl IntoIterator<Item = &'a Polygon>,
    width: usize,
    height: usize,
) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for p in polys {
        fill_into(&mut mask, p);
    }
    mask
}

fn fill_into(mask: &mut BinaryMask, poly: &Polygon) {
    let (width, height) = (mask.width(), mask.height());
    if width == 0 || height == 0 {
        return;
    }
    let (lo, hi) = poly.bounds();
    let j0 = (lo.y - 0.5).floor().max(0.0) as usize;
    let j1 = ((hi.y - 0.5).ceil().max(-1.0) + 1.0).min(height as f64) as usize;
    let mut xs: Vec<f64> = Vec::new();
    for j in j0..j1 {
        let y = j as f64 + 0.5;
        xs.clear();
        xs.extend(poly.edges().filter_map(|(a, b)| edge_crossing_x(a, b, y)));
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let (xa, xb) = (span[0], span[1]);
            if xb <= 0.0 {
                continue;
            }
            let mut i = (xa - 0.5).floor().max(0.0) as usize;
            while i < width && (i as f64 + 0.5) < xa {
                i += 1;
            }
            while i < width && (i as f64 + 0.5) < xb {
                mask.set(i, j, true);
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{point_in_polygon, Point};

    #[test]
    fn small_square() {
        let sq = Polygon::new(vec![
            Point::new(0., 0.),
            Point::new(2., 0.),
            Point::new(2., 2.),
            Point::new(0., 2.),
        ])
        .unwrap();
        let m = rasterize_polygon(&sq, 4, 4);
        let set: Vec<_> = m.set_pixels().collect();
        assert_eq!(set, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn off_canvas() {
        let far = Polygon::new(vec![
            Point::new(50., 50.),
            Point::new(60., 50.),
            Point::new(55., 60.),
        ])
        .unwrap();
        assert!(rasterize_polygon(&far, 8, 8).is_empty());
        let left = Polygon::new(vec![
            Point::new(-9., 0.),
            Point::new(-1., 0.),
            Point::new(-5., 8.),
        ])
        .unwrap();
        assert!(rasterize_polygon(&left, 8, 8).is_empty());
    }

    #[test]
    fn straddling_canvas_matches_membership() {
        let p = Polygon::new(vec![
            Point::new(-3.2, -1.7),
            Point::new(9.9, 2.25),
            Point::new(4.5, 12.0),
            Point::new(1.5, 3.5),
        ])
        .unwrap();
        let m = rasterize_polygon(&p, 7, 9);
        for y in 0..9 {
            for x in 0..7 {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(m.get(x, y), point_in_polygon(c, &p), "pixel ({x},{y})");
            }
        }
    }
}
