use super::{signed_area, GeomError, Point, Polygon};

/// True when every turn of the polygon has the same orientation. Collinear
/// vertices are tolerated.
pub fn is_convex(poly: &Polygon) -> bool {
    let v = poly.vertices();
    let n = v.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let c = v[(i + 2) % n];
        let turn = (b - a).cross(c - b);
        if turn != 0.0 {
            if sign == 0.0 {
                sign = turn.signum();
            } else if turn.signum() != sign {
                return false;
            }
        }
    }
    // a star polygon can keep a constant turn sign while winding twice
    let total: f64 = (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            let e1 = b - a;
            let e2 = c - b;
            e1.cross(e2).atan2(e1.dot(e2))
        })
        .sum();
    (total.abs() - std::f64::consts::TAU).abs() < 1e-6
}

/// Sutherland–Hodgman clipping of `subject` against a convex `clipper`.
///
/// Returns `Ok(None)` when the intersection has no area. Either vertex order
/// is accepted for both inputs.
pub fn convex_clip(subject: &Polygon, clipper: &Polygon) -> Result<Option<Polygon>, GeomError> {
    if !is_convex(clipper) {
        return Err(GeomError::NonConvexClipper);
    }
    let orient = clipper.signed_area().signum();
    let mut output: Vec<Point> = subject.vertices().to_vec();

    for (a, b) in clipper.edges() {
        if output.is_empty() {
            break;
        }
        let edge = b - a;
        let side = |p: Point| edge.cross(p - a) * orient;
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(intersect(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(intersect(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }

    let scale = subject.signed_area().abs().max(clipper.signed_area().abs());
    Ok(cleanup(output, scale).and_then(|v| Polygon::new(v).ok()))
}

fn intersect(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Drops repeated and collinear vertices left behind by clipping.
fn cleanup(mut pts: Vec<Point>, scale: f64) -> Option<Vec<Point>> {
    let eps = 1e-12 * scale.max(1e-300);
    pts.dedup_by(|b, a| (*a - *b).dot(*a - *b) <= eps);
    while pts.len() > 1 && {
        let d = pts[0] - pts[pts.len() - 1];
        d.dot(d) <= eps
    } {
        pts.pop();
    }
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            if (b - a).cross(c - a).abs() <= eps {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    if pts.len() < 3 || signed_area(&pts).abs() <= eps {
        None
    } else {
        Some(pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polygon_area;

    fn square(x0: f64, y0: f64, s: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ])
        .unwrap()
    }

    #[test]
    fn self_intersection_is_identity() {
        let s = square(0., 0., 1.);
        let r = convex_clip(&s, &s).unwrap().unwrap();
        assert_eq!(r.len(), 4);
        for v in s.vertices() {
            assert!(r.vertices().contains(v));
        }
    }

    #[test]
    fn disjoint_is_empty() {
        assert!(convex_clip(&square(0., 0., 1.), &square(5., 5., 1.))
            .unwrap()
            .is_none());
        // touching along an edge has no area either
        assert!(convex_clip(&square(0., 0., 1.), &square(1., 0., 1.))
            .unwrap()
            .is_none());
    }

    #[test]
    fn half_overlap() {
        let r = convex_clip(&square(0., 0., 1.), &square(0.5, 0., 1.))
            .unwrap()
            .unwrap();
        assert!((polygon_area(&r) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clipper_winding_does_not_matter() {
        let ccw = Polygon::new(vec![
            Point::new(0.5, 0.),
            Point::new(0.5, 1.),
            Point::new(1.5, 1.),
            Point::new(1.5, 0.),
        ])
        .unwrap();
        let r = convex_clip(&square(0., 0., 1.), &ccw).unwrap().unwrap();
        assert!((polygon_area(&r) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_concave_clipper() {
        let l = Polygon::new(vec![
            Point::new(0., 0.),
            Point::new(2., 0.),
            Point::new(2., 1.),
            Point::new(1., 1.),
            Point::new(1., 2.),
            Point::new(0., 2.),
        ])
        .unwrap();
        assert_eq!(
            convex_clip(&square(0., 0., 1.), &l),
            Err(GeomError::NonConvexClipper)
        );
        // concave subjects are fine
        assert!(convex_clip(&l, &square(0., 0., 1.)).unwrap().is_some());
    }
}
