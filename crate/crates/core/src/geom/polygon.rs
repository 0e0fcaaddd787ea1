use serde::{Deserialize, Serialize};

use super::{signed_area, GeomError, Point};

/// Simple polygon stored open: the closing edge from the last vertex back to
/// the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeomError> {
        if vertices.len() < 3 {
            return Err(GeomError::Degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeomError::Degenerate(format!(
                    "consecutive vertices {} and {} coincide",
                    i,
                    (i + 1) % n
                )));
            }
        }
        if signed_area(&vertices) == 0.0 {
            return Err(GeomError::Degenerate("zero area polygon".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point {
        let a = self.signed_area();
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Bounding rectangle as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// Edges as `(start, end)` pairs including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeomError;

    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

pub fn polygon_area(poly: &Polygon) -> f64 {
    poly.signed_area().abs()
}

/// If the edge `a -> b` straddles the horizontal line at `y` under the
/// half-open rule `min(a.y, b.y) <= y < max(a.y, b.y)`, returns the x where it
/// crosses. Horizontal edges never cross.
///
/// The rasterizer and the membership test both go through this function, so
/// their answers agree bit for bit.
#[inline]
pub(crate) fn edge_crossing_x(a: Point, b: Point, y: f64) -> Option<f64> {
    if (a.y > y) != (b.y > y) {
        Some(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
    } else {
        None
    }
}

/// Even-odd membership test.
///
/// A point exactly on the boundary is inside when it lies on a left or top
/// edge and outside on a right or bottom edge, so polygons sharing an edge
/// partition the plane without double counting.
pub fn point_in_polygon(pt: Point, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if let Some(x) = edge_crossing_x(a, b, pt.y) {
            if x > pt.x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> Polygon {
        Polygon::new(pts.iter().map(|&p| p.into()).collect()).unwrap()
    }

    #[test]
    fn areas() {
        assert_eq!(
            polygon_area(&poly(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)])),
            1.0
        );
        let pond = poly(&[(100., 100.), (100., 200.), (200., 200.), (200., 100.)]);
        assert_eq!(polygon_area(&pond), 10000.0);
        assert_eq!(polygon_area(&poly(&[(0., 0.), (4., 0.), (0., 3.)])), 6.0);
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(Polygon::new(vec![Point::new(0., 0.), Point::new(1., 0.)]).is_err());
        assert!(Polygon::new(vec![
            Point::new(0., 0.),
            Point::new(1., 0.),
            Point::new(1., 0.),
            Point::new(0., 1.)
        ])
        .is_err());
        // collinear
        assert!(Polygon::new(vec![
            Point::new(0., 0.),
            Point::new(1., 1.),
            Point::new(2., 2.)
        ])
        .is_err());
        assert!(Polygon::new(vec![
            Point::new(0., 0.),
            Point::new(f64::NAN, 0.),
            Point::new(0., 1.)
        ])
        .is_err());
    }

    #[test]
    fn membership() {
        let pond = poly(&[(100., 100.), (100., 200.), (200., 200.), (200., 100.)]);
        assert!(point_in_polygon(Point::new(150., 150.), &pond));
        assert!(!point_in_polygon(Point::new(1e6, -3.0), &pond));
        let tri = poly(&[(0., 0.), (4., 0.), (0., 3.)]);
        assert!(point_in_polygon(tri.centroid(), &tri));
    }

    #[test]
    fn boundary_rule_is_half_open() {
        let sq = poly(&[(0., 0.), (2., 0.), (2., 2.), (0., 2.)]);
        assert!(point_in_polygon(Point::new(0.0, 1.0), &sq), "left edge");
        assert!(point_in_polygon(Point::new(1.0, 0.0), &sq), "top edge");
        assert!(!point_in_polygon(Point::new(2.0, 1.0), &sq), "right edge");
        assert!(!point_in_polygon(Point::new(1.0, 2.0), &sq), "bottom edge");
        // the neighbour to the right owns the shared edge
        let right = poly(&[(2., 0.), (4., 0.), (4., 2.), (2., 2.)]);
        assert!(point_in_polygon(Point::new(2.0, 1.0), &right));
    }
}
