use std::collections::{HashMap, VecDeque};

use super::{signed_area, BinaryMask, Point, Polygon};

/// Components with fewer set pixels than this are dropped as noise.
pub const MIN_COMPONENT_PIXELS: usize = 4;

/// Outer boundaries of the 4-connected components of `mask`, traced along
/// pixel corners and simplified with Douglas–Peucker tolerance `eps`.
///
/// The simplification never moves a pixel centre across the outline, so
/// rasterizing a traced polygon gives back its component with holes filled.
///
/// Holes are ignored and components below [`MIN_COMPONENT_PIXELS`] are
/// dropped. Polygons run clockwise on screen from their top-left-most vertex,
/// ordered by the row-major position of each component's first pixel.
pub fn trace_mask_to_polygons(mask: &BinaryMask, eps: f64) -> Vec<Polygon> {
    trace_mask_to_polygons_with(mask, eps, MIN_COMPONENT_PIXELS)
}

/// [`trace_mask_to_polygons`] with an explicit minimum component size.
pub fn trace_mask_to_polygons_with(mask: &BinaryMask, eps: f64, min_pixels: usize) -> Vec<Polygon> {
    let eps = if eps.is_finite() { eps.max(0.0) } else { 0.0 };
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![usize::MAX; w * h];
    let mut out = Vec::new();
    let mut next = 0;
    for start in 0..w * h {
        if !mask.bits()[start] || label[start] != usize::MAX {
            continue;
        }
        let comp = flood(mask, start, next, &mut label);
        next += 1;
        if comp.len() < min_pixels.max(1) {
            continue;
        }
        let ring = outer_ring(mask, &comp);
        let ring = drop_collinear(ring);
        let simplified = simplify_closed(&ring, eps);
        let poly = Polygon::new(simplified).or_else(|_| Polygon::new(ring));
        if let Ok(p) = poly {
            out.push(p);
        }
    }
    out
}

fn flood(mask: &BinaryMask, start: usize, id: usize, label: &mut [usize]) -> Vec<(i64, i64)> {
    let w = mask.width();
    let mut comp = Vec::new();
    let mut queue = VecDeque::from([start]);
    label[start] = id;
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        comp.push((x, y));
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if mask.get_signed(nx, ny) {
                let j = ny as usize * w + nx as usize;
                if label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }
    comp
}

type Vertex = (i64, i64);
type Dir = (i64, i64);

/// Walks the boundary edges of one component with the foreground on the right
/// and returns the loop enclosing the most area.
fn outer_ring(mask: &BinaryMask, comp: &[(i64, i64)]) -> Vec<Point> {
    let mut out_edges: HashMap<Vertex, Vec<Dir>> = HashMap::new();
    let mut add = |v: Vertex, d: Dir| out_edges.entry(v).or_default().push(d);
    for &(x, y) in comp {
        if !mask.get_signed(x, y - 1) {
            add((x, y), (1, 0));
        }
        if !mask.get_signed(x + 1, y) {
            add((x + 1, y), (0, 1));
        }
        if !mask.get_signed(x, y + 1) {
            add((x + 1, y + 1), (-1, 0));
        }
        if !mask.get_signed(x - 1, y) {
            add((x, y + 1), (0, -1));
        }
    }

    let mut starts: Vec<Vertex> = out_edges.keys().copied().collect();
    starts.sort_by_key(|&(x, y)| (y, x));
    let mut best: Vec<Vertex> = Vec::new();
    let mut best_area = 0.0f64;
    for s in starts {
        while let Some(d0) = out_edges.get_mut(&s).and_then(|v| v.pop()) {
            let mut ring = vec![s];
            let mut v = (s.0 + d0.0, s.1 + d0.1);
            let mut d = d0;
            while v != s {
                ring.push(v);
                let outs = out_edges
                    .get_mut(&v)
                    .expect("boundary edges form closed loops");
                // prefer right, then straight, then left: keeps diagonal
                // neighbours apart
                let prefs = [(-d.1, d.0), d, (d.1, -d.0)];
                let k = prefs
                    .iter()
                    .find_map(|p| outs.iter().position(|o| o == p))
                    .expect("boundary edges form closed loops");
                d = outs.swap_remove(k);
                v = (v.0 + d.0, v.1 + d.1);
            }
            let pts: Vec<Point> = ring
                .iter()
                .map(|&(x, y)| Point::new(x as f64, y as f64))
                .collect();
            let a = signed_area(&pts);
            if a > best_area {
                best_area = a;
                best = ring;
            }
        }
    }
    // start at the top-left-most vertex
    let k = (0..best.len())
        .min_by_key(|&i| (best[i].1, best[i].0))
        .unwrap_or(0);
    best.rotate_left(k);
    best.into_iter()
        .map(|(x, y)| Point::new(x as f64, y as f64))
        .collect()
}

fn drop_collinear(ring: Vec<Point>) -> Vec<Point> {
    let n = ring.len();
    if n < 4 {
        return ring;
    }
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        if (b - a).cross(c - b) != 0.0 {
            keep.push(b);
        }
    }
    keep
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

fn dp(pts: &[Point], eps: f64, keep: &mut [bool]) {
    if pts.len() < 3 {
        return;
    }
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let (mut idx, mut dmax) = (0, 0.0);
    for (i, &p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = seg_dist(p, a, b);
        if d > dmax {
            idx = i;
            dmax = d;
        }
    }
    if idx == 0 {
        idx = pts.len() / 2;
    }
    if dmax > eps || chord_flips_pixels(pts) {
        keep[idx] = true;
        dp(&pts[..=idx], eps, &mut keep[..=idx]);
        dp(&pts[idx..], eps, &mut keep[idx..]);
    }
}

/// True when replacing the integer-vertex path `pts` by the straight chord
/// between its ends would move some pixel centre across the outline: either a
/// centre lies on the chord, or the loop formed by path and chord encloses one
/// under the even-odd rule.
fn chord_flips_pixels(pts: &[Point]) -> bool {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let (ax, ay, bx, by) = (a.x as i64, a.y as i64, b.x as i64, b.y as i64);
    let (dx, dy) = (bx - ax, by - ay);
    let ymin = pts.iter().map(|p| p.y as i64).min().unwrap();
    let ymax = pts.iter().map(|p| p.y as i64).max().unwrap();
    let mut xs: Vec<f64> = Vec::new();
    for j in ymin..ymax {
        let yc = j as f64 + 0.5;
        // centre exactly on the chord, in doubled integer coordinates
        if dy != 0
            && (2 * j + 1 - 2 * ay) * dy.signum() >= 0
            && (2 * j + 1 - 2 * by) * dy.signum() <= 0
        {
            let num = 2 * ax * dy + (2 * j + 1 - 2 * ay) * dx;
            if num % dy == 0 && (num / dy).rem_euclid(2) == 1 {
                return true;
            }
        }
        xs.clear();
        let n = pts.len();
        for k in 0..n {
            let (p, q) = (pts[k], pts[(k + 1) % n]);
            if (p.y > yc) != (q.y > yc) {
                xs.push(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let first = (span[0] - 0.5).ceil() + 0.5;
            if first < span[1] {
                return true;
            }
        }
    }
    false
}

/// Douglas–Peucker on a closed ring, anchored at vertex 0 and the vertex
/// farthest from it.
fn simplify_closed(ring: &[Point], eps: f64) -> Vec<Point> {
    let n = ring.len();
    if n <= 3 || eps == 0.0 {
        return ring.to_vec();
    }
    let far = (1..n)
        .max_by(|&i, &j| {
            ring[0]
                .dist(ring[i])
                .total_cmp(&ring[0].dist(ring[j]))
                .then(j.cmp(&i))
        })
        .unwrap();
    let mut closed = ring.to_vec();
    closed.push(ring[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    dp(&closed[..=far], eps, &mut keep[..=far]);
    dp(&closed[far..], eps, &mut keep[far..]);
    (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polygon_area;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn single_pixel_square() {
        let m = BinaryMask::from_pixels(3, 3, &[(0, 0)]);
        let polys = trace_mask_to_polygons_with(&m, 0.0, 1);
        assert_eq!(polys.len(), 1);
        assert_eq!(
            polys[0].vertices(),
            pts(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)]).as_slice()
        );
        // default filter treats it as noise
        assert!(trace_mask_to_polygons(&m, 0.0).is_empty());
    }

    #[test]
    fn two_blobs() {
        let m = BinaryMask::from_pixels(
            8,
            8,
            &[
                (0, 0),
                (1, 0),
                (0, 1),
                (1, 1),
                (5, 5),
                (6, 5),
                (5, 6),
                (6, 6),
            ],
        );
        let polys = trace_mask_to_polygons(&m, 0.0);
        assert_eq!(polys.len(), 2);
        assert_eq!(
            polys[0].vertices(),
            pts(&[(0., 0.), (2., 0.), (2., 2.), (0., 2.)]).as_slice()
        );
        assert_eq!(polygon_area(&polys[1]), 4.0);
    }

    #[test]
    fn holes_are_filled() {
        let mut m = BinaryMask::new(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                m.set(x, y, !(x == 2 && y == 2));
            }
        }
        let polys = trace_mask_to_polygons(&m, 0.0);
        assert_eq!(polys.len(), 1);
        assert_eq!(polygon_area(&polys[0]), 25.0);
    }

    #[test]
    fn diagonal_touch_is_two_components() {
        let m = BinaryMask::from_pixels(
            4,
            4,
            &[
                (0, 0),
                (1, 0),
                (0, 1),
                (1, 1),
                (2, 2),
                (3, 2),
                (2, 3),
                (3, 3),
            ],
        );
        assert_eq!(trace_mask_to_polygons(&m, 0.0).len(), 2);
    }

    #[test]
    fn pinch_inside_one_component() {
        // U-turn whose tips touch diagonally at (2,1)/(3,2)... component is
        // still one piece; the traced outline must be a valid simple ring
        let m = BinaryMask::from_pixels(
            5,
            4,
            &[
                (0, 0),
                (1, 0),
                (2, 0),
                (3, 0),
                (0, 1),
                (0, 2),
                (1, 2),
                (2, 2),
                (2, 1),
                (3, 2),
                (4, 2),
                (4, 1),
                (4, 0),
            ],
        );
        let polys = trace_mask_to_polygons(&m, 0.0);
        assert_eq!(polys.len(), 1);
        assert!(polygon_area(&polys[0]) >= m.count() as f64);
    }

    #[test]
    fn thin_line_survives_simplification() {
        let m = BinaryMask::from_pixels(6, 3, &[(0, 1), (1, 1), (2, 1), (3, 1)]);
        let polys = trace_mask_to_polygons(&m, 1.0);
        assert_eq!(polys.len(), 1);
        assert_eq!(polygon_area(&polys[0]), 4.0);
    }
}
