/// Linear-light RGB image, row-major float triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0.0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut f = Self::new(width, height);
        for p in f.rgb.chunks_mut(3) {
            p.copy_from_slice(&color);
        }
        f
    }

    /// Ingests raw data, replacing non-finite values by 0 and clamping to [0, 1].
    pub fn from_rgb(width: usize, height: usize, mut rgb: Vec<f64>) -> Self {
        assert_eq!(rgb.len(), 3 * width * height, "frame buffer size");
        for v in rgb.iter_mut() {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self { width, height, rgb }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn pixel(&self, idx: usize) -> [f64; 3] {
        [self.rgb[3 * idx], self.rgb[3 * idx + 1], self.rgb[3 * idx + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn set_pixel(&mut self, idx: usize, c: [f64; 3]) {
        self.rgb[3 * idx..3 * idx + 3].copy_from_slice(&c);
    }

    pub fn clamped(&self) -> Self {
        Self::from_rgb(self.width, self.height, self.rgb.clone())
    }
}
