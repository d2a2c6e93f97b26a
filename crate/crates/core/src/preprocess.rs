//! Image-sequence I/O (binary PGM plus a CSV manifest), resizing, global
//! intensity scaling and linear-in-time imputation of missing frames.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ImageFrame, ImageSequence};

/// Raw PGM contents with samples scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<f64>,
}

fn skip_space_and_comments(bytes: &[u8], mut at: usize) -> usize {
    loop {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if at < bytes.len() && bytes[at] == b'#' {
            while at < bytes.len() && bytes[at] != b'\n' {
                at += 1;
            }
        } else {
            return at;
        }
    }
}

fn header_number(bytes: &[u8], at: &mut usize, path: &Path, what: &str) -> Result<usize> {
    *at = skip_space_and_comments(bytes, *at);
    let start = *at;
    while *at < bytes.len() && bytes[*at].is_ascii_digit() {
        *at += 1;
    }
    std::str::from_utf8(&bytes[start..*at])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad or missing {what} in header")))
}

/// Parses a binary (P5) PGM image.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Pgm> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(path, "not a binary PGM (P5) file"));
    }
    let mut at = 2;
    let width = header_number(bytes, &mut at, path, "width")?;
    let height = header_number(bytes, &mut at, path, "height")?;
    let maxval = header_number(bytes, &mut at, path, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(path, format!("maxval {maxval} out of range")));
    }
    if at >= bytes.len() || !bytes[at].is_ascii_whitespace() {
        return Err(Error::format(path, "missing whitespace after maxval"));
    }
    let body = &bytes[at + 1..];
    let wide = maxval > 255;
    let needed = width * height * if wide { 2 } else { 1 };
    if body.len() < needed {
        return Err(Error::format(path, format!("expected {needed} data bytes, found {}", body.len())));
    }
    let scale = maxval as f64;
    let data = if wide {
        body[..needed]
            .chunks_exact(2)
            .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / scale)
            .collect()
    } else {
        body[..needed].iter().map(|&b| f64::from(b) / scale).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Round-half-up quantization of `v` clamped to `[0, 1]`.
#[inline]
pub fn quantize(v: f64, maxval: u16) -> u16 {
    let m = f64::from(maxval);
    (v.clamp(0.0, 1.0) * m + 0.5).floor().min(m) as u16
}

/// Encodes a frame as binary PGM with 8 or 16 bits per sample.
pub fn encode_pgm(frame: &ImageFrame, bit_depth: u8) -> Result<Vec<u8>> {
    let maxval: u16 = match bit_depth {
        8 => 255,
        16 => 65535,
        other => return Err(Error::config(format!("bit depth must be 8 or 16, got {other}"))),
    };
    let (nx, ny) = frame.dims();
    let mut out = format!("P5\n{nx} {ny}\n{maxval}\n").into_bytes();
    for &v in frame.data() {
        let q = quantize(v, maxval);
        if bit_depth == 8 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, frame: &ImageFrame, bit_depth: u8) -> Result<()> {
    let bytes = encode_pgm(frame, bit_depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a manifest (`filename,time`) and the PGM frames it lists, sorted by
/// time. Filenames are relative to the manifest's directory.
pub fn load_sequence(manifest: &Path) -> Result<ImageSequence> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let file = fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(manifest, format!("missing column {name:?}")))
    };
    let (fcol, tcol) = (col("filename")?, col("time")?);
    let mut entries: Vec<(f64, PathBuf)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let name = record.get(fcol).unwrap_or_default();
        let time: f64 = record
            .get(tcol)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::format(manifest, format!("bad time for {name:?}")))?;
        entries.push((time, base.join(name)));
    }
    if entries.is_empty() {
        return Err(Error::format(manifest, "manifest lists no frames"));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let frames = entries
        .into_iter()
        .map(|(time, path)| {
            let pgm = read_pgm(&path)?;
            ImageFrame::new(pgm.width, pgm.height, pgm.data, time)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageSequence::new(frames)
}

/// Writes `frame_00001.pgm`, ... and `manifest.csv` into `dir`, returning
/// the manifest path.
pub fn save_sequence(seq: &ImageSequence, dir: &Path, bit_depth: u8) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("filename,time\n");
    for (k, frame) in seq.frames().iter().enumerate() {
        let name = format!("frame_{:05}.pgm", k + 1);
        write_pgm(&dir.join(&name), frame, bit_depth)?;
        manifest.push_str(&format!("{name},{}\n", frame.time()));
    }
    let path = dir.join("manifest.csv");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Bilinear resampling to `new_n x new_n`, with pixel centres aligned.
pub fn resize_frame(frame: &ImageFrame, new_n: usize) -> Result<ImageFrame> {
    if new_n < 2 {
        return Err(Error::FrameTooSmall(new_n, new_n));
    }
    let (nx, ny) = frame.dims();
    let source = |i: usize, n_out: usize, n_in: usize| {
        let u = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = (u.floor() as usize).min(n_in - 2);
        (i0, u - i0 as f64)
    };
    let mut data = Vec::with_capacity(new_n * new_n);
    for j in 0..new_n {
        let (j0, fy) = source(j, new_n, ny);
        for i in 0..new_n {
            let (i0, fx) = source(i, new_n, nx);
            let at = |di: usize, dj: usize| frame.get(i0 + di, j0 + dj);
            let top = (1.0 - fx) * at(0, 0) + fx * at(1, 0);
            let bottom = (1.0 - fx) * at(0, 1) + fx * at(1, 1);
            data.push((1.0 - fy) * top + fy * bottom);
        }
    }
    ImageFrame::new(new_n, new_n, data, frame.time())
}

/// Frames at `target_times`: observed times pass through, interior times are
/// interpolated linearly between the closest observed neighbours.
pub fn impute_missing(seq: &ImageSequence, target_times: &[f64]) -> Result<ImageSequence> {
    let frames = seq.frames();
    let times = seq.times();
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::SequenceTooShort { needed: 1, found: 0 });
    };
    let out = target_times
        .iter()
        .map(|&t| {
            if !(first <= t && t <= last) {
                return Err(Error::Extrapolation { t, min: first, max: last });
            }
            // First observed time >= t.
            let hi = times.partition_point(|&s| s < t);
            if times[hi] == t {
                return Ok(frames[hi].clone());
            }
            let (a, b) = (&frames[hi - 1], &frames[hi]);
            let (ta, tb) = (a.time(), b.time());
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(wa, wb)| (wa * (tb - t) + wb * (t - ta)) / (tb - ta))
                .collect();
            ImageFrame::new(a.nx(), a.ny(), data, t)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageSequence::new(out)
}

/// One affine map for the whole sequence sending its global minimum to 0
/// and maximum to 1.
pub fn scale_intensities(seq: &ImageSequence) -> Result<ImageSequence> {
    let (lo, hi) = seq
        .frames()
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::DegenerateRange);
    }
    let frames = seq
        .frames()
        .iter()
        .map(|f| f.map(|v| (v - lo) / (hi - lo)))
        .collect::<Result<Vec<_>>>()?;
    ImageSequence::new(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_from(values: &[(f64, [f64; 4])]) -> ImageSequence {
        ImageSequence::new(
            values
                .iter()
                .map(|(t, d)| ImageFrame::new(2, 2, d.to_vec(), *t).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(1.0, 255), 255);
        assert_eq!(quantize(0.0, 255), 0);
        assert_eq!(quantize(1.7, 255), 255);
        assert_eq!(quantize(-0.2, 65535), 0);
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let data: Vec<f64> = (0..12).map(|k| k as f64 / 11.0).collect();
        let frame = ImageFrame::new(4, 3, data, 0.0).unwrap();
        for (depth, bound) in [(8u8, 1.0 / 510.0), (16, 1.0 / 131_070.0)] {
            let bytes = encode_pgm(&frame, depth).unwrap();
            let pgm = parse_pgm(&bytes, Path::new("mem")).unwrap();
            assert_eq!((pgm.width, pgm.height), (4, 3));
            for (a, b) in pgm.data.iter().zip(frame.data()) {
                assert!((a - b).abs() <= bound + 1e-15, "{depth}-bit {a} vs {b}");
            }
        }
    }

    #[test]
    fn pgm_extremes_and_comments() {
        let bytes = b"P5\n# comment\n2 1\n255\n\xff\x00";
        let pgm = parse_pgm(bytes, Path::new("mem")).unwrap();
        assert_eq!(pgm.data, vec![1.0, 0.0]);
        assert!(parse_pgm(b"P2\n2 1\n255\n1 2", Path::new("mem")).is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00", Path::new("mem")).is_err());
    }

    #[test]
    fn sequence_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let seq = seq_from(&[(1.0, [0.0, 0.25, 0.5, 1.0]), (2.5, [1.0, 0.75, 0.5, 0.0]), (4.0, [0.1; 4])]);
        let manifest = save_sequence(&seq, dir.path(), 16).unwrap();
        let back = load_sequence(&manifest).unwrap();
        assert_eq!(back.times(), vec![1.0, 2.5, 4.0]);
        for (a, b) in back.frames().iter().zip(seq.frames()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1.0 / 131_070.0);
            }
        }
    }

    #[test]
    fn manifest_with_duplicate_times_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let frame = ImageFrame::constant(2, 2, 0.5, 0.0).unwrap();
        write_pgm(&dir.path().join("a.pgm"), &frame, 8).unwrap();
        write_pgm(&dir.path().join("b.pgm"), &frame, 8).unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "filename,time\na.pgm,3\nb.pgm,3\n").unwrap();
        assert!(matches!(load_sequence(&manifest), Err(Error::DuplicateTime(_))));
        fs::write(&manifest, "filename,time\nmissing.pgm,1\n").unwrap();
        assert!(matches!(load_sequence(&manifest), Err(Error::Io { .. })));
    }

    #[test]
    fn mixed_resolutions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), &ImageFrame::constant(2, 2, 0.5, 0.0).unwrap(), 8).unwrap();
        write_pgm(&dir.path().join("b.pgm"), &ImageFrame::constant(3, 3, 0.5, 0.0).unwrap(), 8).unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "filename,time\na.pgm,1\nb.pgm,2\n").unwrap();
        assert!(matches!(load_sequence(&manifest), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn resize_ramp_constant_and_identity() {
        let f = ImageFrame::new(2, 2, vec![0.0, 1.0, 0.0, 1.0], 0.0).unwrap();
        let r = resize_frame(&f, 4).unwrap();
        for j in 0..4 {
            let row: Vec<f64> = (0..4).map(|i| r.get(i, j)).collect();
            assert_eq!(row[0], 0.0);
            assert_eq!(row[3], 1.0);
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        }
        assert_eq!(r.get(1, 0), 0.25);
        let c = ImageFrame::constant(5, 5, 0.3, 1.0).unwrap();
        assert!(resize_frame(&c, 9).unwrap().data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let g = ImageFrame::from_fn(6, 6, 0.0, |x, y| x * y + 0.1).unwrap();
        assert_eq!(resize_frame(&g, 6).unwrap(), g);
        assert!(resize_frame(&g, 1).is_err());
    }

    #[test]
    fn imputation_formula() {
        let seq = seq_from(&[(2.0, [0.0, 1.0, 2.0, 4.0]), (4.0, [1.0, 1.0, 0.0, 8.0])]);
        let out = impute_missing(&seq, &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out.frames()[0], seq.frames()[0]);
        assert_eq!(out.frames()[1].data(), &[0.5, 1.0, 1.0, 6.0]);
        assert_eq!(out.frames()[2], seq.frames()[1]);
        assert!(matches!(impute_missing(&seq, &[5.0]), Err(Error::Extrapolation { .. })));
        assert!(matches!(impute_missing(&seq, &[1.0]), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn global_scaling() {
        let seq = seq_from(&[(0.0, [0.2, 0.45, 0.3, 0.3]), (1.0, [0.7, 0.5, 0.4, 0.3])]);
        let s = scale_intensities(&seq).unwrap();
        assert!((s.frames()[0].get(1, 0) - 0.5).abs() < 1e-15);
        assert_eq!(s.frames()[0].get(0, 0), 0.0);
        assert_eq!(s.frames()[1].get(0, 0), 1.0);
        let unit = seq_from(&[(0.0, [0.0, 1.0, 0.5, 0.25])]);
        assert_eq!(scale_intensities(&unit).unwrap(), unit);
        let flat = seq_from(&[(0.0, [0.3; 4]), (1.0, [0.3; 4])]);
        assert!(matches!(scale_intensities(&flat), Err(Error::DegenerateRange)));
    }

    proptest! {
        #[test]
        fn imputation_is_exact_on_affine_sequences(
            a in prop::collection::vec(-2.0..2.0f64, 4),
            b in prop::collection::vec(-2.0..2.0f64, 4),
            t in 0.0..9.0f64,
        ) {
            let at = |s: f64| -> [f64; 4] { std::array::from_fn(|p| a[p] + b[p] * s) };
            let seq = seq_from(&[(0.0, at(0.0)), (3.0, at(3.0)), (9.0, at(9.0))]);
            let out = impute_missing(&seq, &[t]).unwrap();
            for (got, want) in out.frames()[0].data().iter().zip(at(t)) {
                prop_assert!((got - want).abs() < 1e-12);
            }
        }

        #[test]
        fn scaling_commutes_with_imputation(
            d0 in prop::collection::vec(-2.0..2.0f64, 4),
            d1 in prop::collection::vec(-2.0..2.0f64, 4),
            t in 0.01..0.99f64,
        ) {
            let seq = seq_from(&[(0.0, d0.clone().try_into().unwrap()), (1.0, d1.clone().try_into().unwrap())]);
            prop_assume!(d0.iter().chain(&d1).any(|v| (v - d0[0]).abs() > 1e-6));
            let lhs = scale_intensities(&impute_missing(&seq, &[0.0, t, 1.0]).unwrap()).unwrap();
            let rhs = impute_missing(&scale_intensities(&seq).unwrap(), &[0.0, t, 1.0]).unwrap();
            for (fl, fr) in lhs.frames().iter().zip(rhs.frames()) {
                for (x, y) in fl.data().iter().zip(fr.data()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
