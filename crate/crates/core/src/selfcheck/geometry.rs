//! Random geometry generators and brute-force references for the geometry
//! kernels.

use rand::Rng;

use crate::geom::{
    point_in_polygon, rasterize_polygon, rbb_from_params, rbb_to_params, rotated_iou,
    trace_mask_to_polygons, BinaryMask, BoxParams, Point, Polygon, RotatedBox,
};

use super::CheckOutcome;

pub fn random_params(rng: &mut impl Rng) -> BoxParams {
    BoxParams {
        cx: rng.gen_range(-500.0..500.0),
        cy: rng.gen_range(-500.0..500.0),
        w: rng.gen_range(0.5..300.0),
        h: rng.gen_range(0.5..300.0),
        theta: rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
    }
}

/// Two boxes that usually overlap: the second is a jittered copy of the first.
pub fn random_box_pair(rng: &mut impl Rng) -> (RotatedBox, RotatedBox) {
    let p = BoxParams {
        cx: rng.gen_range(0.0..100.0),
        cy: rng.gen_range(0.0..100.0),
        w: rng.gen_range(2.0..40.0),
        h: rng.gen_range(2.0..40.0),
        theta: rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
    };
    let q = if rng.gen_bool(0.1) {
        random_params(rng)
    } else {
        let mut t = p.theta + rng.gen_range(-0.8..0.8);
        if t >= std::f64::consts::FRAC_PI_2 {
            t -= std::f64::consts::PI;
        } else if t < -std::f64::consts::FRAC_PI_2 {
            t += std::f64::consts::PI;
        }
        BoxParams {
            cx: p.cx + rng.gen_range(-10.0..10.0),
            cy: p.cy + rng.gen_range(-10.0..10.0),
            w: (p.w * rng.gen_range(0.5..1.5)).max(0.5),
            h: (p.h * rng.gen_range(0.5..1.5)).max(0.5),
            theta: t,
        }
    };
    (rbb_from_params(&p).unwrap(), rbb_from_params(&q).unwrap())
}

/// Star-shaped simple polygon with 3..=12 vertices inside a `size` square,
/// sometimes spilling over the edges.
pub fn random_polygon(rng: &mut impl Rng, size: f64) -> Polygon {
    loop {
        let n = rng.gen_range(3..=12);
        let c = Point::new(rng.gen_range(0.0..size), rng.gen_range(0.0..size));
        let mut angles: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        angles.sort_by(f64::total_cmp);
        let verts: Vec<Point> = angles
            .iter()
            .map(|a| {
                let r = rng.gen_range(0.1..0.6) * size;
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect();
        if let Ok(p) = Polygon::new(verts) {
            return p;
        }
    }
}

/// One 4-connected blob of at least 16 pixels: either a filled ellipse or a
/// union of overlapping discs.
pub fn random_blob(rng: &mut impl Rng) -> BinaryMask {
    loop {
        let (w, h) = (48usize, 48usize);
        let mut m = BinaryMask::new(w, h);
        let blobs = rng.gen_range(1..=3);
        let (mut cx, mut cy) = (rng.gen_range(14.0..34.0), rng.gen_range(14.0..34.0));
        for _ in 0..blobs {
            let rx: f64 = rng.gen_range(2.5..10.0);
            let ry: f64 = rng.gen_range(2.5..10.0);
            let rot: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (s, c) = rot.sin_cos();
            for y in 0..h {
                for x in 0..w {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    let u = (dx * c + dy * s) / rx;
                    let v = (-dx * s + dy * c) / ry;
                    if u * u + v * v <= 1.0 {
                        m.set(x, y, true);
                    }
                }
            }
            cx += rng.gen_range(-4.0..4.0);
            cy += rng.gen_range(-4.0..4.0);
        }
        let m = largest_component(&m);
        if m.count() >= 16 {
            return m;
        }
    }
}

fn largest_component(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..w * h {
        if !m.bits()[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if m.bits()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let mut out = BinaryMask::new(w, h);
    for i in best {
        out.set(i % w, i / w, true);
    }
    out
}

/// Inside test for a convex quadrilateral by half-plane signs, independent of
/// the polygon kernels.
fn inside_convex(p: Point, c: &[Point; 4]) -> bool {
    let mut pos = false;
    let mut neg = false;
    for i in 0..4 {
        let a = c[i];
        let b = c[(i + 1) % 4];
        let s = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        pos |= s > 0.0;
        neg |= s < 0.0;
    }
    !(pos && neg)
}

/// IoU estimated by counting the centres of an `n x n` grid laid over the
/// joint bounding window of both boxes.
pub fn grid_iou(a: &RotatedBox, b: &RotatedBox, n: usize) -> f64 {
    let all: Vec<Point> = a.corners().iter().chain(b.corners()).copied().collect();
    let x0 = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = all.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = all.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let (sx, sy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut ca, mut cb, mut both) = (0u64, 0u64, 0u64);
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * sy;
        for i in 0..n {
            let p = Point::new(x0 + (i as f64 + 0.5) * sx, y);
            let ia = inside_convex(p, a.corners());
            let ib = inside_convex(p, b.corners());
            ca += ia as u64;
            cb += ib as u64;
            both += (ia && ib) as u64;
        }
    }
    let union = ca + cb - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

/// Per-pixel membership raster built by testing every pixel centre.
pub fn membership_raster(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    for y in 0..height {
        for x in 0..width {
            if point_in_polygon(Point::new(x as f64 + 0.5, y as f64 + 0.5), poly) {
                m.set(x, y, true);
            }
        }
    }
    m
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn check_param_roundtrip(rng: &mut impl Rng, n: usize, rel_tol: f64) -> CheckOutcome {
    let mut worst = 0.0f64;
    for _ in 0..n {
        let b = rbb_from_params(&random_params(rng)).unwrap();
        let back = rbb_from_params(&rbb_to_params(&b).unwrap()).unwrap();
        let diag = b.diagonal();
        let resid = b
            .corners()
            .iter()
            .map(|p| {
                back.corners()
                    .iter()
                    .map(|q| p.dist(*q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        worst = worst.max(resid / diag);
    }
    CheckOutcome::new(
        "box_param_roundtrip",
        worst < rel_tol,
        format!("{n} boxes, worst residual {worst:.3e} x diagonal (limit {rel_tol:.0e})"),
    )
}

pub fn check_iou_vs_grid(rng: &mut impl Rng, pairs: usize, grid: usize, tol: f64) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut asym = 0.0f64;
    for _ in 0..pairs {
        let (a, b) = random_box_pair(rng);
        let iou = rotated_iou(&a, &b);
        asym = asym.max((iou - rotated_iou(&b, &a)).abs());
        worst = worst.max((iou - grid_iou(&a, &b, grid)).abs());
    }
    CheckOutcome::new(
        "rotated_iou_vs_grid",
        worst <= tol && asym == 0.0,
        format!("{pairs} pairs on a {grid}x{grid} grid, worst |diff| {worst:.2e} (limit {tol:.0e}), asymmetry {asym:.1e}"),
    )
}

pub fn check_raster_vs_membership(rng: &mut impl Rng, polys: usize) -> CheckOutcome {
    let mut mismatched = 0usize;
    for _ in 0..polys {
        let (w, h) = (rng.gen_range(8..64), rng.gen_range(8..64));
        let p = random_polygon(rng, w.max(h) as f64);
        if rasterize_polygon(&p, w, h) != membership_raster(&p, w, h) {
            mismatched += 1;
        }
    }
    CheckOutcome::new(
        "raster_vs_membership",
        mismatched == 0,
        format!("{polys} polygons, {mismatched} rasters differ"),
    )
}

pub fn check_trace_fidelity(
    rng: &mut impl Rng,
    blobs: usize,
    eps: f64,
    min_iou: f64,
) -> CheckOutcome {
    let mut worst = 1.0f64;
    for _ in 0..blobs {
        let m = random_blob(rng);
        let polys = trace_mask_to_polygons(&m, eps);
        let back = crate::geom::rasterize_union(&polys, m.width(), m.height());
        worst = worst.min(mask_iou(&back, &m));
    }
    CheckOutcome::new(
        "trace_fidelity",
        worst >= min_iou,
        format!("{blobs} blobs, eps {eps}, worst IoU {worst:.4} (limit {min_iou})"),
    )
}
