//! Serialization for Information Maps: the native line-oriented text format
//! (bit-exact round trip) and the 8-bit grayscale image round trip used for
//! the expert-editing workflow, with binary PGM (P5) as the container.

use std::path::Path;

use thiserror::Error;

use crate::grid::{is_unknown, unknown, Frame, GridError, GridSpec, InformationMap, OobPolicy};

pub const NATIVE_MAGIC: &str = "IMAP1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("format error at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("raster is {got_rows}x{got_cols} but the grid spec wants {rows}x{cols}")]
    DimensionMismatch {
        got_rows: usize,
        got_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("map has unknown cells but every pixel value is taken by known cells")]
    NoFreePixel,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(offset: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        offset,
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Native text format
// ---------------------------------------------------------------------------

fn policy_token(policy: OobPolicy) -> &'static str {
    match policy {
        OobPolicy::DefaultValue(_) => "default",
        OobPolicy::NearestCell => "nearest",
        OobPolicy::Error => "error",
    }
}

fn value_token(v: f64) -> String {
    if is_unknown(v) {
        "unknown".to_string()
    } else {
        format!("{v}")
    }
}

/// Serialize to the native text format. `load_native` restores the result
/// field-for-field and cell-for-cell.
pub fn save_native(map: &InformationMap) -> Vec<u8> {
    let spec = map.spec();
    let mut out = String::new();
    out.push_str(NATIVE_MAGIC);
    out.push('\n');
    let (frame, resolution) = match spec.frame() {
        Frame::Cartesian { cell_size } => ("cartesian", format!("{cell_size}")),
        Frame::Polar {
            range_bin,
            bearing_bin,
        } => ("polar", format!("{range_bin},{bearing_bin}")),
    };
    out.push_str(&format!("frame={frame}\n"));
    out.push_str(&format!("rows={}\n", spec.rows()));
    out.push_str(&format!("cols={}\n", spec.cols()));
    out.push_str(&format!("resolution={resolution}\n"));
    out.push_str(&format!("origin_row={}\n", spec.origin_row()));
    out.push_str(&format!("origin_col={}\n", spec.origin_col()));
    out.push_str(&format!("vmin={}\n", map.vmin()));
    out.push_str(&format!("vmax={}\n", map.vmax()));
    out.push_str(&format!("oob_policy={}\n", policy_token(map.oob_policy())));
    let oob_default = match map.oob_policy() {
        OobPolicy::DefaultValue(d) => d,
        _ => map.vmin(),
    };
    out.push_str(&format!("oob_default={oob_default}\n"));
    out.push_str("data\n");
    for row in 0..spec.rows() {
        let line: Vec<String> = (0..spec.cols())
            .map(|col| value_token(map.get(row, col).unwrap()))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

struct LineReader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    /// Next line with its starting byte offset; skips nothing.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos = start + advance;
        Some((start, line.strip_suffix('\r').unwrap_or(line)))
    }
}

fn parse_f64(offset: usize, key: &str, raw: &str) -> Result<f64, FormatError> {
    raw.parse::<f64>()
        .map_err(|_| malformed(offset, format!("{key}: invalid number `{raw}`")))
}

/// Parse the native text format.
pub fn load_native(bytes: &[u8]) -> Result<InformationMap, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(e.valid_up_to(), "not utf-8"))?;
    let mut lines = LineReader::new(text);

    let (off, magic) = lines
        .next_line()
        .ok_or_else(|| malformed(0, "empty input"))?;
    if magic != NATIVE_MAGIC {
        return Err(malformed(off, format!("expected magic `{NATIVE_MAGIC}`")));
    }

    let mut expect = |key: &str| -> Result<(usize, String), FormatError> {
        let (off, line) = lines
            .next_line()
            .ok_or_else(|| malformed(text.len(), format!("unexpected end of input, expected `{key}=`")))?;
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok((off, v.to_string())),
            _ => Err(malformed(off, format!("expected `{key}=...`, got `{line}`"))),
        }
    };

    let (frame_off, frame_raw) = expect("frame")?;
    let (rows_off, rows_raw) = expect("rows")?;
    let (cols_off, cols_raw) = expect("cols")?;
    let (res_off, res_raw) = expect("resolution")?;
    let (or_off, or_raw) = expect("origin_row")?;
    let (oc_off, oc_raw) = expect("origin_col")?;
    let (vmin_off, vmin_raw) = expect("vmin")?;
    let (vmax_off, vmax_raw) = expect("vmax")?;
    let (pol_off, pol_raw) = expect("oob_policy")?;
    let (def_off, def_raw) = expect("oob_default")?;

    let rows: usize = rows_raw
        .parse()
        .map_err(|_| malformed(rows_off, format!("rows: invalid count `{rows_raw}`")))?;
    let cols: usize = cols_raw
        .parse()
        .map_err(|_| malformed(cols_off, format!("cols: invalid count `{cols_raw}`")))?;
    let origin_row: i64 = or_raw
        .parse()
        .map_err(|_| malformed(or_off, format!("origin_row: invalid index `{or_raw}`")))?;
    let origin_col: i64 = oc_raw
        .parse()
        .map_err(|_| malformed(oc_off, format!("origin_col: invalid index `{oc_raw}`")))?;

    let frame = match frame_raw.as_str() {
        "cartesian" => {
            let cell_size = parse_f64(res_off, "resolution", &res_raw)?;
            Frame::Cartesian { cell_size }
        }
        "polar" => {
            let (r, b) = res_raw.split_once(',').ok_or_else(|| {
                malformed(res_off, "polar resolution wants `range,bearing`")
            })?;
            Frame::Polar {
                range_bin: parse_f64(res_off, "resolution", r)?,
                bearing_bin: parse_f64(res_off, "resolution", b)?,
            }
        }
        other => {
            return Err(malformed(
                frame_off,
                format!("frame must be `cartesian` or `polar`, got `{other}`"),
            ))
        }
    };

    let vmin = parse_f64(vmin_off, "vmin", &vmin_raw)?;
    let vmax = parse_f64(vmax_off, "vmax", &vmax_raw)?;
    let oob_default = parse_f64(def_off, "oob_default", &def_raw)?;
    let oob = match pol_raw.as_str() {
        "default" => OobPolicy::DefaultValue(oob_default),
        "nearest" => OobPolicy::NearestCell,
        "error" => OobPolicy::Error,
        other => {
            return Err(malformed(
                pol_off,
                format!("oob_policy must be default|nearest|error, got `{other}`"),
            ))
        }
    };

    let (data_off, data_line) = lines
        .next_line()
        .ok_or_else(|| malformed(text.len(), "unexpected end of input, expected `data`"))?;
    if data_line != "data" {
        return Err(malformed(data_off, format!("expected `data`, got `{data_line}`")));
    }

    let spec = GridSpec::new(rows, cols, origin_row, origin_col, frame)
        .map_err(|e| malformed(frame_off, e.to_string()))?;

    let mut values = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        let (off, line) = lines.next_line().ok_or_else(|| {
            malformed(text.len(), format!("unexpected end of input in data row {row}"))
        })?;
        let mut count = 0usize;
        for token in line.split_ascii_whitespace() {
            let v = if token == "unknown" {
                unknown()
            } else {
                parse_f64(off, "data", token)?
            };
            values.push(v);
            count += 1;
        }
        if count != cols {
            return Err(malformed(
                off,
                format!("data row {row} holds {count} values, expected {cols}"),
            ));
        }
    }
    for (off, line) in std::iter::from_fn(|| lines.next_line()) {
        if !line.trim().is_empty() {
            return Err(malformed(off, "trailing content after data rows"));
        }
    }

    InformationMap::from_values(spec, values, vmin, vmax, oob)
        .map_err(|e| malformed(data_off, e.to_string()))
}

pub fn save_native_file(map: &InformationMap, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, save_native(map))?;
    Ok(())
}

pub fn load_native_file(path: impl AsRef<Path>) -> Result<InformationMap, FormatError> {
    load_native(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// 8-bit grayscale raster round trip
// ---------------------------------------------------------------------------

/// A row-major 8-bit single-channel raster; row 0 is the top image row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FormatError> {
        if pixels.len() != width * height {
            return Err(malformed(
                0,
                format!(
                    "raster pixel count {} does not match {width}x{height}",
                    pixels.len()
                ),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        if row < self.height && col < self.width {
            Some(self.pixels[row * self.width + col])
        } else {
            None
        }
    }
}

/// An exported raster plus the pixel value reserved for unknown cells, if the
/// map had any. Record the reserved pixel in a sidecar next to the image so
/// a later import can restore the unknowns.
#[derive(Debug, Clone)]
pub struct ImageExport {
    pub raster: GrayRaster,
    pub unknown_pixel: Option<u8>,
}

fn quantize(value: f64, vmin: f64, vmax: f64) -> u8 {
    let t = 255.0 * (value - vmin) / (vmax - vmin);
    t.round().clamp(0.0, 255.0) as u8
}

fn dequantize(pixel: u8, vmin: f64, vmax: f64) -> f64 {
    match pixel {
        0 => vmin,
        255 => vmax,
        p => (vmin + (p as f64 / 255.0) * (vmax - vmin)).clamp(vmin, vmax),
    }
}

/// Linear 8-bit quantization of the map onto a grayscale raster:
/// `pixel = round(255 * (value - vmin) / (vmax - vmin))`.
///
/// When the map holds unknown cells, the smallest pixel value not produced by
/// any known cell is reserved for them; fails with [`FormatError::NoFreePixel`]
/// if known cells occupy all 256 values.
pub fn export_image(map: &InformationMap) -> Result<ImageExport, FormatError> {
    let spec = map.spec();
    let (vmin, vmax) = (map.vmin(), map.vmax());
    let has_unknown = map.values().iter().any(|&v| is_unknown(v));
    let unknown_pixel = if has_unknown {
        let mut used = [false; 256];
        for &v in map.values() {
            if !is_unknown(v) {
                used[quantize(v, vmin, vmax) as usize] = true;
            }
        }
        Some(
            (0usize..256)
                .find(|&p| !used[p])
                .ok_or(FormatError::NoFreePixel)? as u8,
        )
    } else {
        None
    };
    let pixels = map
        .values()
        .iter()
        .map(|&v| {
            if is_unknown(v) {
                unknown_pixel.expect("unknown cell implies reserved pixel")
            } else {
                quantize(v, vmin, vmax)
            }
        })
        .collect();
    Ok(ImageExport {
        raster: GrayRaster::new(spec.cols(), spec.rows(), pixels)?,
        unknown_pixel,
    })
}

/// Inverse of [`export_image`]: `value = vmin + (pixel / 255) * (vmax - vmin)`,
/// with pixels equal to `unknown_pixel` restored as unknown cells.
pub fn import_image(
    raster: &GrayRaster,
    spec: GridSpec,
    vmin: f64,
    vmax: f64,
    oob: OobPolicy,
    unknown_pixel: Option<u8>,
) -> Result<InformationMap, FormatError> {
    if raster.height() != spec.rows() || raster.width() != spec.cols() {
        return Err(FormatError::DimensionMismatch {
            got_rows: raster.height(),
            got_cols: raster.width(),
            rows: spec.rows(),
            cols: spec.cols(),
        });
    }
    let values = raster
        .pixels()
        .iter()
        .map(|&p| {
            if Some(p) == unknown_pixel {
                unknown()
            } else {
                dequantize(p, vmin, vmax)
            }
        })
        .collect();
    Ok(InformationMap::from_values(spec, values, vmin, vmax, oob)?)
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) container
// ---------------------------------------------------------------------------

/// Encode as binary PGM with maxval 255.
pub fn encode_pgm(raster: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend_from_slice(raster.pixels());
    out
}

/// Decode a binary PGM (P5) with maxval up to 255, tolerating `#` comments in
/// the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayRaster, FormatError> {
    let skip_separators = |pos: &mut usize| {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
    };
    let read_token = |pos: &mut usize| -> Result<usize, FormatError> {
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(malformed(start, "unexpected end of PGM header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| malformed(start, "invalid PGM header number"))
    };

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(malformed(0, "expected PGM magic `P5`"));
    }
    let mut pos = 2usize;
    skip_separators(&mut pos);
    let width = read_token(&mut pos)?;
    skip_separators(&mut pos);
    let height = read_token(&mut pos)?;
    skip_separators(&mut pos);
    let maxval_off = pos;
    let maxval = read_token(&mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(malformed(maxval_off, "PGM maxval must be in 1..=255"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed(pos, "expected single whitespace after maxval"));
    }
    pos += 1;
    let expected = width * height;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(malformed(
            pos,
            format!("PGM payload holds {} bytes, expected {expected}", data.len()),
        ));
    }
    GrayRaster::new(width, height, data[..expected].to_vec())
}

// ---------------------------------------------------------------------------
// Image sidecar
// ---------------------------------------------------------------------------

/// Sidecar text recording the reserved unknown pixel, or `None` when the
/// export reserved nothing.
pub fn sidecar_text(export: &ImageExport) -> Option<String> {
    export.unknown_pixel.map(|p| format!("unknown_pixel={p}\n"))
}

/// Parse a sidecar produced by [`sidecar_text`].
pub fn parse_sidecar(text: &str) -> Result<Option<u8>, FormatError> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        return match line.split_once('=') {
            Some(("unknown_pixel", v)) => v
                .trim()
                .parse::<u8>()
                .map(Some)
                .map_err(|_| malformed(i, format!("invalid unknown_pixel `{v}`"))),
            _ => Err(malformed(i, format!("unrecognized sidecar line `{line}`"))),
        };
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::WorldPosition;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn sample_map() -> InformationMap {
        let spec = GridSpec::cartesian(3, 4, 0.25, 2, 1).unwrap();
        let values = vec![
            0.0, 0.125, 0.25, 0.5,
            f64::NAN, 0.75, 1.0, 0.3,
            0.1, 0.2, f64::NAN, 0.9,
        ];
        InformationMap::from_values(spec, values, 0.0, 1.0, OobPolicy::DefaultValue(0.5)).unwrap()
    }

    #[test]
    fn native_round_trip_is_identity() {
        let m = sample_map();
        let restored = load_native(&save_native(&m)).unwrap();
        assert_eq!(restored, m);
    }

    #[test]
    fn native_round_trip_polar() {
        let spec = GridSpec::polar(2, 4, 1.5, std::f64::consts::PI / 2.0).unwrap();
        let m = InformationMap::new(spec, 0.25, 0.0, 2.0, OobPolicy::NearestCell).unwrap();
        let restored = load_native(&save_native(&m)).unwrap();
        assert_eq!(restored, m);
    }

    #[test]
    fn truncated_payload_is_malformed() {
        let bytes = save_native(&sample_map());
        let truncated = &bytes[..bytes.len() - 10];
        assert!(matches!(
            load_native(truncated),
            Err(FormatError::Malformed { .. })
        ));
    }

    #[test]
    fn row_value_count_mismatch_is_reported() {
        let mut text = String::from_utf8(save_native(&sample_map())).unwrap();
        // drop the final value of the last data row
        text = text.trim_end().rsplit_once(' ').unwrap().0.to_string();
        text.push('\n');
        let err = load_native(text.as_bytes()).unwrap_err();
        let FormatError::Malformed { reason, .. } = err else {
            panic!("expected Malformed, got {err:?}")
        };
        assert!(reason.contains("expected 4"), "{reason}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(
            load_native(b"NOPE\nframe=cartesian\n"),
            Err(FormatError::Malformed { offset: 0, .. })
        ));
    }

    #[test]
    fn error_offsets_point_at_the_offending_line() {
        let bytes = save_native(&sample_map());
        let text = String::from_utf8(bytes).unwrap();
        let broken = text.replace("vmax=1", "vmax=banana");
        let err = load_native(broken.as_bytes()).unwrap_err();
        let FormatError::Malformed { offset, .. } = err else {
            panic!("expected Malformed")
        };
        assert_eq!(offset, broken.find("vmax=").unwrap());
    }

    #[test]
    fn quantizer_endpoints() {
        let spec = GridSpec::cartesian(1, 2, 1.0, 0, 0).unwrap();
        let raster = GrayRaster::new(2, 1, vec![0, 255]).unwrap();
        let m = import_image(&raster, spec, 0.2, 0.8, OobPolicy::NearestCell, None).unwrap();
        assert_eq!(m.get(0, 0).unwrap(), 0.2);
        assert_eq!(m.get(0, 1).unwrap(), 0.8);
    }

    #[test]
    fn export_import_identity_on_all_pixel_values() {
        let spec = GridSpec::cartesian(16, 16, 1.0, 0, 0).unwrap();
        let pixels: Vec<u8> = (0..=255u8).chain(0..=255u8).map(|p| p / 2 + p % 2).collect();
        let pixels: Vec<u8> = pixels[..256].to_vec();
        let raster = GrayRaster::new(16, 16, pixels).unwrap();
        let m = import_image(&raster, spec, -3.0, 7.0, OobPolicy::NearestCell, None).unwrap();
        let back = export_image(&m).unwrap();
        assert_eq!(back.raster, raster);
        assert_eq!(back.unknown_pixel, None);
    }

    #[test]
    fn import_export_within_one_quantization_step() {
        let spec = GridSpec::cartesian(10, 10, 1.0, 0, 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (vmin, vmax) = (0.0, 1.0);
        let values: Vec<f64> = (0..100).map(|_| rng.gen_range(vmin..=vmax)).collect();
        let m = InformationMap::from_values(spec, values, vmin, vmax, OobPolicy::NearestCell)
            .unwrap();
        let exported = export_image(&m).unwrap();
        let back = import_image(
            &exported.raster,
            spec,
            vmin,
            vmax,
            OobPolicy::NearestCell,
            exported.unknown_pixel,
        )
        .unwrap();
        let step = (vmax - vmin) / 255.0;
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= step, "{a} vs {b}");
        }
    }

    #[test]
    fn unknown_cells_survive_the_image_round_trip() {
        let m = sample_map();
        let exported = export_image(&m).unwrap();
        let pixel = exported.unknown_pixel.expect("map has unknowns");
        let back = import_image(
            &exported.raster,
            *m.spec(),
            m.vmin(),
            m.vmax(),
            m.oob_policy(),
            Some(pixel),
        )
        .unwrap();
        for (a, b) in m.values().iter().zip(back.values()) {
            assert_eq!(is_unknown(*a), is_unknown(*b));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let raster = GrayRaster::new(3, 3, vec![0; 9]).unwrap();
        let spec = GridSpec::cartesian(4, 3, 1.0, 0, 0).unwrap();
        assert!(matches!(
            import_image(&raster, spec, 0.0, 1.0, OobPolicy::NearestCell, None),
            Err(FormatError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pgm_round_trip() {
        let raster = GrayRaster::new(5, 3, (0u8..15).collect()).unwrap();
        let decoded = decode_pgm(&encode_pgm(&raster)).unwrap();
        assert_eq!(decoded, raster);
    }

    #[test]
    fn pgm_with_comment_decodes() {
        let mut bytes = b"P5\n# produced by an editor\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let raster = decode_pgm(&bytes).unwrap();
        assert_eq!(raster.pixels(), &[1, 2, 3, 4]);
    }

    #[test]
    fn pgm_short_payload_is_rejected() {
        let bytes = b"P5\n4 4\n255\nshort".to_vec();
        assert!(decode_pgm(&bytes).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let m = sample_map();
        let exported = export_image(&m).unwrap();
        let text = sidecar_text(&exported).unwrap();
        assert_eq!(parse_sidecar(&text).unwrap(), exported.unknown_pixel);
    }

    #[test]
    fn expert_edit_preserves_untouched_pixels() {
        // export -> edit a few pixels -> import: untouched cells identical
        let m = sample_map();
        let exported = export_image(&m).unwrap();
        let mut edited = exported.raster.pixels().to_vec();
        edited[3] = 200;
        let edited = GrayRaster::new(exported.raster.width(), exported.raster.height(), edited)
            .unwrap();
        let back = import_image(
            &edited,
            *m.spec(),
            m.vmin(),
            m.vmax(),
            m.oob_policy(),
            exported.unknown_pixel,
        )
        .unwrap();
        let again = export_image(&back).unwrap();
        assert_eq!(again.raster.pixels()[3], 200);
        for (i, (a, b)) in exported
            .raster
            .pixels()
            .iter()
            .zip(again.raster.pixels())
            .enumerate()
        {
            if i != 3 {
                assert_eq!(a, b, "pixel {i} drifted");
            }
        }
    }

    proptest! {
        /// Native round trip is exact for random maps with unknowns.
        #[test]
        fn native_round_trip_random(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows = rng.gen_range(1..8);
            let cols = rng.gen_range(1..8);
            let spec = GridSpec::cartesian(
                rows, cols,
                rng.gen_range(0.05..2.0),
                rng.gen_range(-5..10),
                rng.gen_range(-5..10),
            ).unwrap();
            let (vmin, vmax) = (-2.0, 3.0);
            let values: Vec<f64> = (0..rows * cols).map(|_| {
                if rng.gen_bool(0.2) { f64::NAN } else { rng.gen_range(vmin..=vmax) }
            }).collect();
            let oob = match rng.gen_range(0..3) {
                0 => OobPolicy::DefaultValue(rng.gen_range(vmin..=vmax)),
                1 => OobPolicy::NearestCell,
                _ => OobPolicy::Error,
            };
            let m = InformationMap::from_values(spec, values, vmin, vmax, oob).unwrap();
            let restored = load_native(&save_native(&m)).unwrap();
            prop_assert!(restored == m);
            // restored map answers lookups identically
            let p = WorldPosition::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            match (m.value_at(p), restored.value_at(p)) {
                (Ok(a), Ok(b)) => prop_assert!(a.to_bits() == b.to_bits()),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "mismatched lookup {other:?}"),
            }
        }
    }
}
