use crate::math::Rgb;

/// Linear RGB image, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_rgb(width: usize, height: usize, pixels: impl IntoIterator<Item = Rgb>) -> Self {
        let pixels: Vec<[f32; 3]> = pixels.into_iter().map(|c| c.as_vec3().to_array()).collect();
        assert_eq!(pixels.len(), width * height, "pixel count");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let [r, g, b] = self.pixels[y * self.width + x];
        Rgb::new(r as f64, g as f64, b as f64)
    }

    /// Root-mean-square difference over all channels.
    pub fn rms_diff(&self, other: &FrameImage) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "image size"
        );
        let n = self.pixels.len() * 3;
        if n == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] as f64 - b[c] as f64).powi(2)))
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Pixels that are negative or not finite.
    pub fn invalid_pixels(&self) -> usize {
        self.pixels
            .iter()
            .filter(|p| p.iter().any(|c| !c.is_finite() || *c < 0.0))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms() {
        let a = FrameImage::new(2, 1);
        let b = FrameImage::from_rgb(2, 1, [Rgb::ONE, Rgb::ZERO]);
        assert!((a.rms_diff(&b) - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.invalid_pixels(), 0);
        assert_eq!(b.get(0, 0), Rgb::ONE);
    }
}
