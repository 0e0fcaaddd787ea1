use std::io::{Read, Write};
use std::path::Path;

use super::{GeomError, HorizontalBox, Point};

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeomError> {
        if bits.len() != width * height {
            return Err(GeomError::MaskSize {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from the listed `(x, y)` pixels.
    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut m = Self::new(width, height);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but treats anything off the canvas as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// Parses a binary PBM (`P4`) or PGM (`P5`) image. Gray values above 127
    /// count as set; PBM ones are set.
    pub fn from_pnm(data: &[u8]) -> Result<Self, GeomError> {
        let mut hdr = Header { data, pos: 0 };
        let magic = hdr.token()?;
        let is_pbm = match magic.as_str() {
            "P4" => true,
            "P5" => false,
            other => return Err(GeomError::Format(format!("unsupported magic {other:?}"))),
        };
        let width = hdr.number("width")?;
        let height = hdr.number("height")?;
        let maxval = if is_pbm { 1 } else { hdr.number("maxval")? };
        if !is_pbm && !(1..=65535).contains(&maxval) {
            return Err(GeomError::Format(format!("maxval {maxval} out of range")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = hdr.pos + 1;
        let body = data
            .get(start..)
            .ok_or_else(|| GeomError::Format("missing raster".into()))?;
        let mut bits = Vec::with_capacity(width * height);
        if is_pbm {
            let stride = width.div_ceil(8);
            if body.len() < stride * height {
                return Err(GeomError::Format("truncated P4 raster".into()));
            }
            for y in 0..height {
                let row = &body[y * stride..(y + 1) * stride];
                for x in 0..width {
                    bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
                }
            }
        } else {
            let bytes_per = if maxval < 256 { 1 } else { 2 };
            if body.len() < width * height * bytes_per {
                return Err(GeomError::Format("truncated P5 raster".into()));
            }
            for i in 0..width * height {
                let v = if bytes_per == 1 {
                    body[i] as u32
                } else {
                    u16::from_be_bytes([body[2 * i], body[2 * i + 1]]) as u32
                };
                bits.push(v > 127);
            }
        }
        Self::from_bits(width, height, bits)
    }

    /// Binary PBM (`P4`) encoding with rows padded to whole bytes.
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let stride = self.width.div_ceil(8);
        for y in 0..self.height {
            let mut row = vec![0u8; stride];
            for x in 0..self.width {
                if self.get(x, y) {
                    row[x / 8] |= 0x80 >> (x % 8);
                }
            }
            out.extend_from_slice(&row);
        }
        out
    }

    pub fn read_file(path: impl AsRef<Path>) -> std::io::Result<Result<Self, GeomError>> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Ok(Self::from_pnm(&buf))
    }

    pub fn write_pbm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_pbm())
    }
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<String, GeomError> {
        loop {
            match self.data.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.data.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(GeomError::Format("truncated header".into())),
            }
        }
        let start = self.pos;
        while self
            .data
            .get(self.pos)
            .is_some_and(|c| !c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.data[start..self.pos]).into_owned())
    }

    fn number(&mut self, what: &str) -> Result<usize, GeomError> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| GeomError::Format(format!("bad {what} {t:?}")))
    }
}

/// Tight inclusive bounds of the set pixels.
pub fn mask_to_hbb(mask: &BinaryMask) -> Result<HorizontalBox, GeomError> {
    let mut it = mask.set_pixels();
    let (x0, y0) = it.next().ok_or(GeomError::EmptyMask)?;
    let (mut min_x, mut max_x, mut max_y) = (x0, x0, y0);
    for (x, y) in it {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        max_y = y;
    }
    HorizontalBox::new(
        Point::new(min_x as f64, y0 as f64),
        Point::new(max_x as f64, max_y as f64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hbb_examples() {
        let b = mask_to_hbb(&BinaryMask::from_pixels(10, 10, &[(3, 7)])).unwrap();
        assert_eq!((b.min(), b.max()), (Point::new(3., 7.), Point::new(3., 7.)));
        let full = BinaryMask::from_bits(4, 3, vec![true; 12]).unwrap();
        let b = mask_to_hbb(&full).unwrap();
        assert_eq!((b.min(), b.max()), (Point::new(0., 0.), Point::new(3., 2.)));
        let b = mask_to_hbb(&BinaryMask::from_pixels(10, 10, &[(1, 2), (5, 9)])).unwrap();
        assert_eq!((b.min(), b.max()), (Point::new(1., 2.), Point::new(5., 9.)));
        assert_eq!(
            mask_to_hbb(&BinaryMask::new(3, 3)),
            Err(GeomError::EmptyMask)
        );
    }

    #[test]
    fn pbm_layout_is_bit_exact() {
        let m = BinaryMask::from_pixels(10, 2, &[(0, 0), (9, 0), (8, 1)]);
        let bytes = m.to_pbm();
        assert_eq!(&bytes[..8], b"P4\n10 2\n");
        assert_eq!(
            &bytes[8..],
            &[0b1000_0000, 0b0100_0000, 0b0000_0000, 0b1000_0000]
        );
        assert_eq!(BinaryMask::from_pnm(&bytes).unwrap(), m);
    }

    #[test]
    fn pgm_threshold_and_comments() {
        let mut data = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        data.extend_from_slice(&[127, 128, 255]);
        let m = BinaryMask::from_pnm(&data).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);

        let mut wide = b"P5 2 1 65535\n".to_vec();
        wide.extend_from_slice(&[0x00, 0x7f, 0x01, 0x00]);
        assert_eq!(BinaryMask::from_pnm(&wide).unwrap().bits(), &[false, true]);
    }

    #[test]
    fn bad_bitmaps() {
        assert!(BinaryMask::from_pnm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(BinaryMask::from_pnm(b"P4\n16 2\n\0").is_err());
        assert!(BinaryMask::from_bits(2, 2, vec![true; 3]).is_err());
    }
}
