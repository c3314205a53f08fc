//! Colormaps and PNG encoding for human-facing images.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::hsv_to_rgb;

pub type Rgb = [u8; 3];

/// Entry `i` of the 256-entry heat table, black through red and yellow to
/// white: with `t = i / 255`, `r = clamp(3t)`, `g = clamp(3t - 1)`,
/// `b = clamp(3t - 2)`, each scaled by 255 and rounded.
pub fn heat_entry(i: u8) -> Rgb {
    let t = i as f64 / 255.0;
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(3.0 * t), c(3.0 * t - 1.0), c(3.0 * t - 2.0)]
}

pub fn heat_table() -> [Rgb; 256] {
    std::array::from_fn(|i| heat_entry(i as u8))
}

/// Values in `[0, 1]` (clamped) through the heat table; pixels outside the
/// mask are black.
pub fn render_heat(values: &Grid<f64>, mask: Option<&Grid<bool>>) -> Grid<Rgb> {
    let table = heat_table();
    Grid::from_fn(values.height(), values.width(), |x, y| {
        if mask.is_some_and(|m| !*m.get(x, y)) {
            return [0, 0, 0];
        }
        let v = *values.get(x, y);
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        table[(v * 255.0).round() as usize]
    })
}

/// Linear grey ramp from `lo` to `hi`.
pub fn render_gray(values: &Grid<f64>, lo: f64, hi: f64) -> Grid<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values.map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Well separated hues stepping by the golden angle.
pub fn label_color(label: usize) -> Rgb {
    let h = (label as f64 * 137.507_764).rem_euclid(360.0) / 360.0;
    let v = if label % 2 == 0 { 0.95 } else { 0.75 };
    hsv_to_rgb(h, 0.8, v)
}

pub fn render_labels(labels: &Grid<usize>, mask: &Grid<bool>) -> Grid<Rgb> {
    Grid::from_fn(labels.height(), labels.width(), |x, y| {
        if *mask.get(x, y) {
            label_color(*labels.get(x, y))
        } else {
            [0, 0, 0]
        }
    })
}

fn encode(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let (w, h) = (
        u32::try_from(width).map_err(|_| Error::invalid("image too wide"))?,
        u32::try_from(height).map_err(|_| Error::invalid("image too tall"))?,
    );
    if w == 0 || h == 0 {
        return Err(Error::invalid("cannot encode an empty image"));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn encode_png_rgb(image: &Grid<Rgb>) -> Result<Vec<u8>> {
    let data: Vec<u8> = image.as_slice().iter().flatten().copied().collect();
    encode(image.width(), image.height(), png::ColorType::Rgb, &data)
}

pub fn encode_png_gray(image: &Grid<u8>) -> Result<Vec<u8>> {
    encode(
        image.width(),
        image.height(),
        png::ColorType::Grayscale,
        image.as_slice(),
    )
}

/// Decoded 8-bit PNG: `(width, height, channels, samples)`.
pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Format(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format("only 8-bit png is supported".into()));
    }
    buf.truncate(info.buffer_size());
    Ok((
        info.width as usize,
        info.height as usize,
        info.color_type.samples(),
        buf,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_table_anchors() {
        let t = heat_table();
        assert_eq!(t[0], [0, 0, 0]);
        assert_eq!(t[85], [255, 0, 0]);
        assert_eq!(t[170], [255, 255, 0]);
        assert_eq!(t[255], [255, 255, 255]);
        assert_eq!(t[42], [126, 0, 0]);
        assert!(t.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a <= b)));
    }

    #[test]
    fn png_round_trip() {
        let g = Grid::from_fn(3, 5, |x, y| (x as f64 + y as f64) / 6.0);
        let mask = Grid::from_fn(3, 5, |x, _| x != 2);
        let img = render_heat(&g, Some(&mask));
        let (w, h, c, data) = decode_png(&encode_png_rgb(&img).unwrap()).unwrap();
        assert_eq!((w, h, c), (5, 3, 3));
        assert_eq!(&data[6..9], &[0, 0, 0]);
        assert_eq!(&data[3..6], &heat_entry(43));
        let gray = render_gray(&g, 0.0, 1.0);
        let (_, _, c, data) = decode_png(&encode_png_gray(&gray).unwrap()).unwrap();
        assert_eq!(c, 1);
        assert_eq!(data, gray.into_vec());
    }

    #[test]
    fn labels_get_distinct_colors() {
        let colors: Vec<Rgb> = (0..16).map(label_color).collect();
        for i in 0..16 {
            for j in 0..i {
                assert_ne!(colors[i], colors[j]);
            }
        }
    }
}
