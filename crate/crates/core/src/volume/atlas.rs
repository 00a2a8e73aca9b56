//! Octahedral texel atlases: one `(res+2)²` tile per probe, interior texels
//! surrounded by a one-texel border that makes bilinear fetches wrap
//! correctly across the octahedral fold.

use crate::math::OctUV;

/// Irradiance tile interior resolution.
pub const IRRADIANCE_RES: usize = 8;
/// Visibility tile interior resolution.
pub const VISIBILITY_RES: usize = 16;

/// Per-probe tiles of `C`-channel 32-bit texels, tiles stored contiguously
/// in row-major texel order.
#[derive(Clone, Debug, PartialEq)]
pub struct OctAtlas<const C: usize> {
    res: usize,
    tiles: usize,
    data: Vec<[f32; C]>,
}

impl<const C: usize> OctAtlas<C> {
    pub fn new(tiles: usize, res: usize) -> Self {
        Self {
            res,
            tiles,
            data: vec![[0.0; C]; tiles * (res + 2) * (res + 2)],
        }
    }

    /// Interior resolution.
    pub fn res(&self) -> usize {
        self.res
    }

    /// Bordered side length.
    pub fn side(&self) -> usize {
        self.res + 2
    }

    pub fn tile_count(&self) -> usize {
        self.tiles
    }

    fn tile_len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn tile(&self, i: usize) -> &[[f32; C]] {
        let n = self.tile_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn tile_mut(&mut self, i: usize) -> &mut [[f32; C]] {
        let n = self.tile_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// Mutable iterator over all tiles, for parallel per-probe writes.
    pub fn tiles_mut(&mut self) -> std::slice::ChunksExactMut<'_, [f32; C]> {
        let n = self.tile_len();
        self.data.chunks_exact_mut(n)
    }

    /// Interior texel `(tx, ty)` of tile `i`.
    pub fn texel(&self, i: usize, tx: usize, ty: usize) -> [f32; C] {
        self.tile(i)[(ty + 1) * self.side() + tx + 1]
    }

    pub fn clear_tile(&mut self, i: usize) {
        self.tile_mut(i).fill([0.0; C]);
    }

    pub fn fill_tile(&mut self, i: usize, value: [f32; C]) {
        self.tile_mut(i).fill(value);
    }

    /// Bilinear fetch from tile `i`.
    pub fn sample(&self, i: usize, uv: OctUV) -> [f64; C] {
        sample_tile(self.tile(i), self.res, uv)
    }

    pub fn data(&self) -> &[[f32; C]] {
        &self.data
    }

    /// Lays tiles out `columns` per row (including borders) for dumping.
    /// Returns `(width, height, texels)` with rows top to bottom.
    pub fn to_image(&self, columns: usize) -> (usize, usize, Vec<[f32; C]>) {
        let columns = columns.max(1);
        let rows = self.tiles.div_ceil(columns);
        let side = self.side();
        let (w, h) = (columns * side, rows * side);
        let mut out = vec![[0.0; C]; w * h];
        for t in 0..self.tiles {
            let (cx, cy) = ((t % columns) * side, (t / columns) * side);
            for (y, row) in self.tile(t).chunks_exact(side).enumerate() {
                let start = (cy + y) * w + cx;
                out[start..start + side].copy_from_slice(row);
            }
        }
        (w, h, out)
    }
}

/// Interior texel that border texel `(x, y)` copies from, in bordered
/// coordinates. Interior coordinates map to themselves.
pub fn border_source(x: usize, y: usize, res: usize) -> (usize, usize) {
    let n = res;
    let last = n + 1;
    match (x, y) {
        (0, 0) => (n, n),
        (x, 0) if x == last => (1, n),
        (0, y) if y == last => (n, 1),
        (x, y) if x == last && y == last => (1, 1),
        (x, 0) => (n + 1 - x, 1),
        (x, y) if y == last => (n + 1 - x, n),
        (0, y) => (1, n + 1 - y),
        (x, y) if x == last => (n, n + 1 - y),
        inner => inner,
    }
}

/// Fills the border ring of one tile from its interior.
pub fn write_borders<T: Copy>(tile: &mut [T], res: usize) {
    let side = res + 2;
    debug_assert_eq!(tile.len(), side * side);
    let last = side - 1;
    for i in 0..side {
        for (x, y) in [(i, 0), (i, last), (0, i), (last, i)] {
            let (sx, sy) = border_source(x, y, res);
            tile[y * side + x] = tile[sy * side + sx];
        }
    }
}

/// Bilinear fetch from a bordered tile. The continuous texel coordinate of
/// `u` is `1 + u·res`, with texel centers at half-integers.
pub fn sample_tile<const C: usize>(tile: &[[f32; C]], res: usize, uv: OctUV) -> [f64; C] {
    let side = res + 2;
    let coord = |u: f64| {
        let p = 1.0 + u * res as f64 - 0.5;
        let i0 = (p.floor().max(0.0) as usize).min(res);
        (i0, (p - i0 as f64).clamp(0.0, 1.0))
    };
    let (x0, fx) = coord(uv.u);
    let (y0, fy) = coord(uv.v);
    let at = |x: usize, y: usize| &tile[y * side + x];
    let mut out = [0.0; C];
    for (c, o) in out.iter_mut().enumerate() {
        let a = at(x0, y0)[c] as f64 * (1.0 - fx) + at(x0 + 1, y0)[c] as f64 * fx;
        let b = at(x0, y0 + 1)[c] as f64 * (1.0 - fx) + at(x0 + 1, y0 + 1)[c] as f64 * fx;
        *o = a * (1.0 - fy) + b * fy;
    }
    out
}
