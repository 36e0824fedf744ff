use std::io::{self, Write};
use std::path::Path;

use serde_json::json;

use super::Observation;

/// Binary 8-bit PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()
}

/// Binary 8-bit PPM (P6), pixels as interleaved RGB.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> io::Result<()> {
    assert_eq!(rgb.len(), 3 * width * height);
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    f.flush()
}

/// Reads a P5 file written by [`write_pgm`] (no comments, maxval 255).
pub fn read_pgm(path: &Path) -> io::Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("not an 8-bit P5 file"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated pixels"))?.to_vec();
    Ok((w, h, data))
}

/// Maps [0, 1] to 0..=255 with rounding; values outside are clamped.
pub fn to_gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `<stem>_photo.pgm`, `<stem>_semantic.pgm` and `<stem>.json`.
pub fn dump_observation(obs: &Observation, dir: &Path, stem: &str) -> io::Result<()> {
    let photo: Vec<u8> = obs.photometric.iter().map(|&v| to_gray(v as f64)).collect();
    write_pgm(&dir.join(format!("{stem}_photo.pgm")), obs.width, obs.height, &photo)?;
    let sem: Vec<u8> = obs.semantic.classes.iter().map(|&c| c as u8 * 127).collect();
    write_pgm(&dir.join(format!("{stem}_semantic.pgm")), obs.width, obs.height, &sem)?;
    let meta = json!({
        "speed": obs.speed,
        "accel": obs.accel,
        "steering_angle": obs.steering_angle,
        "command": obs.command,
        "width": obs.width,
        "height": obs.height,
    });
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta).unwrap())
}
