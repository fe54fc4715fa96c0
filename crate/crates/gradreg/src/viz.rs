//! Small output helpers: binary PGM image grids for inspecting perturbed
//! inputs, and CSV dumps of histograms.

use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::perturb::PerturbSpec;
use std::io::Write;
use std::path::Path;

/// Fixed-size grayscale tiles laid out in a grid with white padding.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub tile_w: usize,
    pub tile_h: usize,
    pub cols: usize,
    pub padding: usize,
    /// Row-major tiles, values in `[0, 1]`.
    tiles: Vec<Vec<f64>>,
}

impl ImageGrid {
    pub fn new(tile_w: usize, tile_h: usize, cols: usize, padding: usize) -> Result<ImageGrid> {
        if tile_w == 0 || tile_h == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "grid tile dimensions and column count must be positive".into(),
            ));
        }
        Ok(ImageGrid {
            tile_w,
            tile_h,
            cols,
            padding,
            tiles: Vec::new(),
        })
    }

    pub fn push(&mut self, tile: &[f64]) -> Result<()> {
        if tile.len() != self.tile_w * self.tile_h {
            return Err(Error::Shape(format!(
                "tile has {} values, grid expects {}x{}",
                tile.len(),
                self.tile_h,
                self.tile_w
            )));
        }
        self.tiles.push(tile.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    fn dims(&self) -> (usize, usize) {
        let rows = self.tiles.len().div_ceil(self.cols);
        let w = self.cols * self.tile_w + (self.cols - 1) * self.padding;
        let h = rows * self.tile_h + rows.saturating_sub(1) * self.padding;
        (w, h)
    }

    /// Rasterize to one grayscale byte per pixel; padding and unfilled cells
    /// are white (255).
    pub fn rasterize(&self) -> (usize, usize, Vec<u8>) {
        let (w, h) = self.dims();
        let mut px = vec![255u8; w * h];
        for (i, tile) in self.tiles.iter().enumerate() {
            let gr = i / self.cols;
            let gc = i % self.cols;
            let y0 = gr * (self.tile_h + self.padding);
            let x0 = gc * (self.tile_w + self.padding);
            for ty in 0..self.tile_h {
                for tx in 0..self.tile_w {
                    let v = tile[ty * self.tile_w + tx].clamp(0.0, 1.0);
                    px[(y0 + ty) * w + x0 + tx] = (v * 255.0).round() as u8;
                }
            }
        }
        (w, h, px)
    }
}

/// Write the grid as a binary PGM (P5, maxval 255).
pub fn write_pgm_grid(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("refusing to write an empty grid".into()));
    }
    let (w, h, px) = grid.rasterize();
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::File {
        path: path.display().to_string(),
        source: e,
    })?;
    write!(f, "P5\n{w} {h}\n255\n")?;
    f.write_all(&px)?;
    Ok(())
}

/// Write three PGM grids next to each other on disk: the original inputs,
/// the perturbed inputs `clamp(x + ε)`, and the perturbations magnified
/// around mid-gray `clamp(0.5 + magnify·ε)`. Returns the three paths.
pub fn render_perturbation_panel(
    model: &MlpModel,
    inputs: &[(&[f64], Vec<f64>)],
    spec: &PerturbSpec,
    tile_w: usize,
    tile_h: usize,
    cols: usize,
    magnify: f64,
    out_dir: impl AsRef<Path>,
) -> Result<[std::path::PathBuf; 3]> {
    let mut orig = ImageGrid::new(tile_w, tile_h, cols, 1)?;
    let mut pert = ImageGrid::new(tile_w, tile_h, cols, 1)?;
    let mut magn = ImageGrid::new(tile_w, tile_h, cols, 1)?;
    for (x, t) in inputs {
        let g = crate::model::backprop(model, x, t, 0.0)?;
        let eps = crate::perturb::worst_case_epsilon(&g.grad_input, spec);
        orig.push(x)?;
        let xp: Vec<f64> = x.iter().zip(&eps).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
        pert.push(&xp)?;
        let xm: Vec<f64> = eps.iter().map(|e| (0.5 + magnify * e).clamp(0.0, 1.0)).collect();
        magn.push(&xm)?;
    }
    let dir = out_dir.as_ref();
    let paths = [
        dir.join("originals.pgm"),
        dir.join("perturbed.pgm"),
        dir.join("perturbations.pgm"),
    ];
    write_pgm_grid(&orig, &paths[0])?;
    write_pgm_grid(&pert, &paths[1])?;
    write_pgm_grid(&magn, &paths[2])?;
    Ok(paths)
}

/// `bin_lower,bin_upper,count` rows for uniform bins starting at 0.
pub fn write_histogram_csv(
    counts: &[u64],
    bin_width: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::from("bin_lower,bin_upper,count\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = i as f64 * bin_width;
        out.push_str(&format!("{lo:.6},{:.6},{c}\n", lo + bin_width));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_two_tiles() {
        // two 2x2 tiles, cols = 2, padding = 1 → 5x2 raster with a white
        // column between the tiles
        let mut g = ImageGrid::new(2, 2, 2, 1).unwrap();
        g.push(&[0.0, 1.0, 0.5, 0.25]).unwrap();
        g.push(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        let (w, h, px) = g.rasterize();
        assert_eq!((w, h), (5, 2));
        assert_eq!(
            px,
            vec![
                0, 255, 255, 255, 0, //
                128, 64, 255, 0, 255,
            ]
        );
    }

    #[test]
    fn pgm_header_and_size() {
        let mut g = ImageGrid::new(3, 2, 2, 1).unwrap();
        g.push(&[0.0; 6]).unwrap();
        g.push(&[1.0; 6]).unwrap();
        g.push(&[0.5; 6]).unwrap(); // second row, one unfilled cell
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        write_pgm_grid(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n7 5\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 7 * 5);
        // unfilled bottom-right cell stays white
        assert_eq!(bytes[header.len() + 3 * 7 + 4], 255);
    }

    #[test]
    fn values_clamped() {
        let mut g = ImageGrid::new(1, 1, 1, 0).unwrap();
        g.push(&[-3.0]).unwrap();
        let (_, _, px) = g.rasterize();
        assert_eq!(px, vec![0]);
    }

    #[test]
    fn rejects_bad_tile_and_empty_grid() {
        let mut g = ImageGrid::new(2, 2, 1, 0).unwrap();
        assert!(g.push(&[0.0; 3]).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(write_pgm_grid(&g, dir.path().join("x.pgm")).is_err());
    }

    #[test]
    fn zero_magnification_panel_is_mid_gray() {
        let model = crate::model::MlpModel::new(&[2, 2], &mut crate::num::Rng::new(9));
        let spec = PerturbSpec::new(2.0, 0.3).unwrap();
        let inputs = [(&[0.4, 0.7][..], vec![1.0, 0.0])];
        let dir = tempfile::tempdir().unwrap();
        let [_, _, magn] =
            render_perturbation_panel(&model, &inputs, &spec, 2, 1, 1, 0.0, dir.path())
                .unwrap();
        let bytes = std::fs::read(&magn).unwrap();
        let header = b"P5\n2 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|&b| b == 128));
    }

    #[test]
    fn histogram_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_histogram_csv(&[3, 0, 7], 0.05, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_lower,bin_upper,count");
        assert_eq!(lines[1], "0.000000,0.050000,3");
        assert_eq!(lines[3], "0.100000,0.150000,7");
    }
}
