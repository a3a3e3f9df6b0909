//! FAST segment-test corners on the 16-pixel Bresenham circle of radius 3.

use crate::imaging::Image;
use crate::par;

/// Circle offsets, clockwise from twelve o'clock.
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

pub const BORDER: usize = 3;

#[inline]
fn ring(img: &Image, x: usize, y: usize) -> [i16; 16] {
    let mut r = [0i16; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        r[k] = img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i16;
    }
    r
}

/// True when the 16-bit circular mask has a run of at least `n` set bits.
#[inline]
fn has_arc(mask: u16, n: usize) -> bool {
    if n == 0 {
        return true;
    }
    let mut m = (mask as u32) | ((mask as u32) << 16);
    for _ in 1..n {
        m &= m >> 1;
    }
    m != 0
}

#[inline]
fn masks(r: &[i16; 16], center: i16, t: i16) -> (u16, u16) {
    let (mut bright, mut dark) = (0u16, 0u16);
    for (k, &v) in r.iter().enumerate() {
        if v > center + t {
            bright |= 1 << k;
        }
        if v < center - t {
            dark |= 1 << k;
        }
    }
    (bright, dark)
}

/// Segment test at one pixel (caller guarantees a 3-pixel margin).
#[inline]
pub fn is_corner(img: &Image, x: usize, y: usize, t: u8, n: usize) -> bool {
    let p = img.get(x, y) as i16;
    let t = t as i16;
    // An arc of n pixels covers at least n/4 of the four compass points.
    let need = n / 4;
    if need > 0 {
        let compass = [
            img.get(x, y - 3) as i16,
            img.get(x + 3, y) as i16,
            img.get(x, y + 3) as i16,
            img.get(x - 3, y) as i16,
        ];
        let b = compass.iter().filter(|&&v| v > p + t).count();
        let d = compass.iter().filter(|&&v| v < p - t).count();
        if b < need && d < need {
            return false;
        }
    }
    let (bright, dark) = masks(&ring(img, x, y), p, t);
    has_arc(bright, n) || has_arc(dark, n)
}

/// Every pixel passing the segment test, in raster order.
pub fn fast_corners(img: &Image, t: u8, n: usize) -> Vec<(usize, usize)> {
    let (w, h) = img.dims();
    if w <= 2 * BORDER || h <= 2 * BORDER || n > 16 {
        return Vec::new();
    }
    par::map_range(h - 2 * BORDER, |row| {
        let y = row + BORDER;
        (BORDER..w - BORDER)
            .filter(|&x| is_corner(img, x, y, t, n))
            .map(|x| (x, y))
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Sum of absolute differences beyond the threshold on the winning side.
pub fn fast_score(img: &Image, x: usize, y: usize, t: u8) -> f32 {
    let p = img.get(x, y) as i16;
    let t = t as i16;
    let r = ring(img, x, y);
    let bright: i32 = r
        .iter()
        .filter(|&&v| v > p + t)
        .map(|&v| (v - p - t) as i32)
        .sum();
    let dark: i32 = r
        .iter()
        .filter(|&&v| v < p - t)
        .map(|&v| (p - t - v) as i32)
        .sum();
    bright.max(dark) as f32
}

/// 3x3 non-maximum suppression over scored corners. Ties keep the corner
/// that comes first in raster order.
pub fn non_max_suppression(corners: &[(usize, usize, f32)], w: usize, h: usize) -> Vec<(usize, usize, f32)> {
    let mut grid = vec![f32::NEG_INFINITY; w * h];
    let mut order = vec![usize::MAX; w * h];
    for (i, &(x, y, s)) in corners.iter().enumerate() {
        grid[y * w + x] = s;
        order[y * w + x] = i;
    }
    corners
        .iter()
        .enumerate()
        .filter(|&(i, &(x, y, s))| {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if grid[j] > s || (grid[j] == s && order[j] < i) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|(_, &c)| c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_detection() {
        assert!(has_arc(0xFFFF, 16));
        assert!(has_arc(0b0000_0000_1111_1111, 8));
        assert!(!has_arc(0b0000_0000_1111_1111, 9));
        // wraps around bit 15 -> bit 0
        assert!(has_arc(0b1111_0000_0000_1111, 8));
        assert!(!has_arc(0b1010_1010_1010_1010, 2));
    }

    #[test]
    fn uniform_image_has_no_corners() {
        assert!(fast_corners(&Image::filled(32, 32, 90), 10, 12).is_empty());
    }

    #[test]
    fn bright_square_corner_detected() {
        let img = Image::from_fn(32, 32, |x, y| if x >= 16 && y >= 16 { 200 } else { 20 });
        let c = fast_corners(&img, 10, 9);
        assert!(c.iter().any(|&(x, y)| x.abs_diff(16) <= 1 && y.abs_diff(16) <= 1));
    }
}
