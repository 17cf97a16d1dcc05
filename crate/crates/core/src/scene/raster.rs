/// Row-major 2D raster. Pixel centers sit at integer coordinates with the
/// origin at the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster { width, height, data: vec![value; width * height] }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "raster data length");
        Raster { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster { width, height, data }
    }

    pub fn same_size<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Integer pixel nearest to the continuous position `(u, v)`.
    pub fn nearest_pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = u.round();
        let y = v.round();
        if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
            return None;
        }
        Some((x as usize, y as usize))
    }

    pub fn sample_nearest(&self, u: f64, v: f64) -> Option<&T> {
        self.nearest_pixel(u, v).map(|(x, y)| self.get(x, y))
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Raster<U> {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }
}

impl Raster<f32> {
    /// Bilinear sample with clamping at the border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let a = *self.get(x0, y0) as f64;
        let b = *self.get(x1, y0) as f64;
        let c = *self.get(x0, y1) as f64;
        let d = *self.get(x1, y1) as f64;
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }
}

/// Per-pixel hair direction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirLabel {
    Background,
    /// Direction quadrant `k`: angle in `[k * pi/2, (k + 1) * pi/2)`.
    Bin(u8),
    Undetermined,
}

impl DirLabel {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DirLabel::Background),
            1..=4 => Some(DirLabel::Bin(code - 1)),
            5 => Some(DirLabel::Undetermined),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DirLabel::Background => 0,
            DirLabel::Bin(b) => b + 1,
            DirLabel::Undetermined => 5,
        }
    }
}

/// Quadrant of the direction `(dx, dy)` in image coordinates (y down), using
/// sign tests so that negating the vector always moves it two bins over.
/// Returns `None` for the zero vector.
pub fn direction_bin(dx: f64, dy: f64) -> Option<u8> {
    if dx > 0.0 && dy >= 0.0 {
        Some(0)
    } else if dx <= 0.0 && dy > 0.0 {
        Some(1)
    } else if dx < 0.0 && dy <= 0.0 {
        Some(2)
    } else if dx >= 0.0 && dy < 0.0 {
        Some(3)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_quadrants() {
        assert_eq!(direction_bin(1.0, 0.0), Some(0));
        assert_eq!(direction_bin(0.0, 1.0), Some(1));
        assert_eq!(direction_bin(-1.0, 0.0), Some(2));
        assert_eq!(direction_bin(0.0, -1.0), Some(3));
        assert_eq!(direction_bin(0.0, 0.0), None);
        for i in 0..360 {
            let a = (i as f64 + 0.5).to_radians();
            let b = direction_bin(a.cos(), a.sin()).unwrap();
            assert_eq!(b as usize, (a / std::f64::consts::FRAC_PI_2) as usize);
            let r = direction_bin(-a.cos(), -a.sin()).unwrap();
            assert_eq!(r, (b + 2) % 4);
        }
    }

    #[test]
    fn bilinear_is_exact_on_ramps() {
        let r = Raster::from_fn(5, 4, |x, y| (2 * x + 3 * y) as f32);
        assert!((r.sample_bilinear(1.25, 2.5) - (2.5 + 7.5)).abs() < 1e-9);
    }
}
