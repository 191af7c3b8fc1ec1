//! Binary grayscale PGM heatmaps, normalized per image.

use std::fs;
use std::io;
use std::path::Path;

use sdl_core::Distribution;

/// `P5` bytes for `dist`: pixel `round(255 * mass / max_mass)`, row `iy = 0` first.
pub fn heatmap_bytes(dist: &Distribution) -> io::Result<Vec<u8>> {
    let grid = dist.grid();
    let max = dist.max_mass();
    if !(max > 0.0) || !max.is_finite() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "distribution has no positive mass to scale by"));
    }
    let header = format!("P5\n{} {}\n255\n", grid.n_x(), grid.n_y());
    let mut bytes = Vec::with_capacity(header.len() + dist.len());
    bytes.extend_from_slice(header.as_bytes());
    // mass is stored row-major by iy, which is already the image scan order
    bytes.extend(dist.mass().iter().map(|&m| (255.0 * m / max).round().clamp(0.0, 255.0) as u8));
    Ok(bytes)
}

pub fn render_heatmap(dist: &Distribution, path: &Path) -> io::Result<()> {
    fs::write(path, heatmap_bytes(dist)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sdl_core::GridSpec;

    fn pixels(bytes: &[u8]) -> &[u8] {
        let mut newlines = 0;
        let start = bytes.iter().position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        });
        &bytes[start.unwrap() + 1..]
    }

    #[test]
    fn uniform_is_all_white() {
        let g = GridSpec::new(4, 3, [0.0, 1.0, 0.0, 1.0], true).unwrap();
        let bytes = heatmap_bytes(&Distribution::uniform(g)).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pixels(&bytes), &[255u8; 12]);
    }

    #[test]
    fn point_mass_is_one_pixel() {
        let g = GridSpec::new(4, 3, [0.0, 1.0, 0.0, 1.0], true).unwrap();
        let d = Distribution::point_mass(g, g.bin(1, 2).unwrap()).unwrap();
        let bytes = heatmap_bytes(&d).unwrap();
        let px = pixels(&bytes);
        assert_eq!(px.len(), 12);
        assert_eq!(px[2 * 4 + 1], 255);
        assert_eq!(px.iter().filter(|&&p| p == 0).count(), 11);
    }

    #[test]
    fn scaling_rounds_to_nearest() {
        let g = GridSpec::new(2, 2, [0.0, 1.0, 0.0, 1.0], true).unwrap();
        let d = Distribution::from_weights(g, vec![1.0, 0.41, 0.2, 0.0]).unwrap();
        assert_eq!(pixels(&heatmap_bytes(&d).unwrap()), &[255, 105, 51, 0]);
    }

    #[test]
    fn rerender_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::unit_square(5).unwrap();
        let d = Distribution::from_weights(g, (0..25).map(|i| (i as f64 * 0.37).sin().abs() + 0.01).collect()).unwrap();
        let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
        render_heatmap(&d, &a).unwrap();
        render_heatmap(&d, &b).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}
