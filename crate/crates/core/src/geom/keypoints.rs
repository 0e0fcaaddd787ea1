use super::{BinaryMask, GeomError, Point};

/// Picks `n` prompt points on the set pixels of `mask`.
///
/// The first point is the most interior pixel (largest Euclidean distance to
/// the background, with the canvas border counting as background). The rest
/// come from farthest-point sampling over the set pixels. All ties resolve to
/// the first pixel in row-major order. When the mask has fewer than `n` set
/// pixels some points repeat.
pub fn sample_keypoints(mask: &BinaryMask, n: usize) -> Result<Vec<Point>, GeomError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let pixels: Vec<(usize, usize)> = mask.set_pixels().collect();
    if pixels.is_empty() {
        return Err(GeomError::EmptyMask);
    }
    let dt = squared_distance_transform(mask);
    let mut best = 0;
    for (k, &(x, y)) in pixels.iter().enumerate() {
        if dt[y * mask.width() + x] > dt[pixels[best].1 * mask.width() + pixels[best].0] {
            best = k;
        }
    }
    let mut chosen = vec![pixels[best]];
    let mut nearest: Vec<i64> = pixels.iter().map(|&p| sq_dist(p, pixels[best])).collect();
    while chosen.len() < n {
        let mut far = 0;
        for k in 1..pixels.len() {
            if nearest[k] > nearest[far] {
                far = k;
            }
        }
        let pick = pixels[far];
        chosen.push(pick);
        for (d, &p) in nearest.iter_mut().zip(&pixels) {
            *d = (*d).min(sq_dist(p, pick));
        }
    }
    Ok(chosen
        .into_iter()
        .map(|(x, y)| Point::new(x as f64, y as f64))
        .collect())
}

fn sq_dist(a: (usize, usize), b: (usize, usize)) -> i64 {
    let dx = a.0 as i64 - b.0 as i64;
    let dy = a.1 as i64 - b.1 as i64;
    dx * dx + dy * dy
}

/// Exact squared Euclidean distance from each pixel to the nearest unset pixel,
/// with a one-pixel unset frame around the canvas. Separable lower-envelope
/// method of Felzenszwalb and Huttenlocher.
fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width() + 2, mask.height() + 2);
    let mut grid = vec![0.0f64; w * h];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                grid[(y + 1) * w + x + 1] = f64::INFINITY;
            }
        }
    }
    let mut buf_in = vec![0.0; w.max(h)];
    let mut buf_out = vec![0.0; w.max(h)];
    for x in 0..w {
        for y in 0..h {
            buf_in[y] = grid[y * w + x];
        }
        edt_1d(&buf_in[..h], &mut buf_out[..h]);
        for y in 0..h {
            grid[y * w + x] = buf_out[y];
        }
    }
    for y in 0..h {
        buf_in[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&buf_in[..w], &mut buf_out[..w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&buf_out[..w]);
    }
    let mut out = vec![0.0; mask.width() * mask.height()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            out[y * mask.width() + x] = grid[(y + 1) * w + x + 1];
        }
    }
    out
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    // the padded frame guarantees at least one finite sample per line
    let first = f.iter().position(|x| x.is_finite()).unwrap_or(0);
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}
