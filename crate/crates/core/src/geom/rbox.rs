use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{convex_clip, polygon_area, signed_area, GeomError, Point, Polygon};

/// Relative tolerance (times the box diagonal) used for rectangle checks.
const RECT_TOL: f64 = 1e-6;

/// Centre/extent/angle parameterization of a rotated rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Radians in `[-pi/2, pi/2)`; positive turns clockwise on screen.
    pub theta: f64,
}

impl BoxParams {
    pub fn validate(&self) -> Result<(), GeomError> {
        let bad = |field, reason: &str| {
            Err(GeomError::InvalidParam {
                field,
                reason: reason.into(),
            })
        };
        if !self.cx.is_finite() {
            return bad("cx", "must be finite");
        }
        if !self.cy.is_finite() {
            return bad("cy", "must be finite");
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return bad("w", "must be finite and > 0");
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad("h", "must be finite and > 0");
        }
        if !(-FRAC_PI_2..FRAC_PI_2).contains(&self.theta) {
            return bad("theta", "must lie in [-pi/2, pi/2)");
        }
        Ok(())
    }
}

/// Four-corner box.
///
/// Boxes built by [`RotatedBox::new`] or [`rbb_from_params`] are true
/// rectangles. [`RotatedBox::from_quad`] also admits the slightly skewed
/// quadrilaterals that come out of bin quantization or model predictions;
/// [`RotatedBox::is_rectangle`] tells the two apart. Corners are kept in the
/// order given so that serialized answers reproduce their source exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct RotatedBox {
    corners: [Point; 4],
}

impl RotatedBox {
    /// Strict constructor: the corners must form a rectangle (either winding)
    /// within `1e-6 * diagonal`.
    pub fn new(corners: [Point; 4]) -> Result<Self, GeomError> {
        let b = Self::from_quad(corners)?;
        b.check_rectangle()?;
        Ok(b)
    }

    /// Lenient constructor: any four finite corners forming a non-degenerate
    /// simple quadrilateral outline.
    pub fn from_quad(corners: [Point; 4]) -> Result<Self, GeomError> {
        Polygon::new(corners.to_vec())?;
        Ok(Self { corners })
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.corners.to_vec()).expect("validated at construction")
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners).abs()
    }

    pub fn center(&self) -> Point {
        let c = &self.corners;
        Point::new(
            (c[0].x + c[1].x + c[2].x + c[3].x) / 4.0,
            (c[0].y + c[1].y + c[2].y + c[3].y) / 4.0,
        )
    }

    pub fn diagonal(&self) -> f64 {
        let c = &self.corners;
        c[0].dist(c[2]).max(c[1].dist(c[3]))
    }

    pub fn is_rectangle(&self) -> bool {
        self.check_rectangle().is_ok()
    }

    /// True when both boxes have the same corner set, regardless of order.
    pub fn same_vertices(&self, other: &RotatedBox) -> bool {
        self.corners.iter().all(|p| other.corners.contains(p))
            && other.corners.iter().all(|p| self.corners.contains(p))
    }

    fn check_rectangle(&self) -> Result<(), GeomError> {
        let c = &self.corners;
        let tol = RECT_TOL * self.diagonal();
        let e01 = c[1] - c[0];
        let e32 = c[2] - c[3];
        let e12 = c[2] - c[1];
        let e03 = c[3] - c[0];
        if (e01 - e32).dot(e01 - e32).sqrt() > tol || (e12 - e03).dot(e12 - e03).sqrt() > tol {
            return Err(GeomError::NotRectangle("opposite edges differ".into()));
        }
        if (c[0].dist(c[2]) - c[1].dist(c[3])).abs() > tol {
            return Err(GeomError::NotRectangle("diagonals differ in length".into()));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Point>> for RotatedBox {
    type Error = GeomError;

    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        let corners: [Point; 4] = v.try_into().map_err(|v: Vec<Point>| {
            GeomError::Degenerate(format!("box needs 4 corners, got {}", v.len()))
        })?;
        RotatedBox::from_quad(corners)
    }
}

impl From<RotatedBox> for Vec<Point> {
    fn from(b: RotatedBox) -> Self {
        b.corners.to_vec()
    }
}

/// Corners of the rectangle described by `p`, clockwise on screen, starting
/// from the corner that is top-left before rotation.
pub fn rbb_from_params(p: &BoxParams) -> Result<RotatedBox, GeomError> {
    p.validate()?;
    let (s, c) = p.theta.sin_cos();
    let (hw, hh) = (p.w / 2.0, p.h / 2.0);
    let corner = |dx: f64, dy: f64| Point::new(p.cx + dx * c - dy * s, p.cy + dx * s + dy * c);
    let corners = [
        corner(-hw, -hh),
        corner(hw, -hh),
        corner(hw, hh),
        corner(-hw, hh),
    ];
    RotatedBox::from_quad(corners)
}

/// Inverse of [`rbb_from_params`]; the result reproduces the corner set, though
/// the starting corner may differ.
pub fn rbb_to_params(b: &RotatedBox) -> Result<BoxParams, GeomError> {
    b.check_rectangle()?;
    let mut c = *b.corners();
    if signed_area(&c) < 0.0 {
        c = [c[0], c[3], c[2], c[1]];
    }
    let center = b.center();
    let e = c[1] - c[0];
    let w = e.dot(e).sqrt();
    let h = c[2].dist(c[1]);
    let mut theta = e.y.atan2(e.x);
    if theta >= FRAC_PI_2 {
        theta -= PI;
    } else if theta < -FRAC_PI_2 {
        theta += PI;
    }
    // guard against rounding pushing theta onto the excluded endpoint
    if theta >= FRAC_PI_2 {
        theta = -FRAC_PI_2;
    }
    Ok(BoxParams {
        cx: center.x,
        cy: center.y,
        w,
        h,
        theta,
    })
}

/// Intersection over union of two boxes. Symmetric in its arguments and exactly
/// 1 when the corner sets coincide. Non-rectangular quads are scored through
/// their convex hulls.
pub fn rotated_iou(a: &RotatedBox, b: &RotatedBox) -> f64 {
    if a.same_vertices(b) {
        return 1.0;
    }
    let (Some(ha), Some(hb)) = (hull(a), hull(b)) else {
        return 0.0;
    };
    let clip_area = |s: &Polygon, c: &Polygon| {
        convex_clip(s, c)
            .expect("hull is convex")
            .map_or(0.0, |p| polygon_area(&p))
    };
    let inter = 0.5 * (clip_area(&ha, &hb) + clip_area(&hb, &ha));
    let union = polygon_area(&ha) + polygon_area(&hb) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn hull(b: &RotatedBox) -> Option<Polygon> {
    let mut pts = b.corners().to_vec();
    pts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    pts.dedup();
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2])
                <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2])
                <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Polygon::new(lower).ok()
}
