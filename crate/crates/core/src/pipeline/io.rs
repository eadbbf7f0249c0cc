//! Run-directory file helpers: overwrite-guarded writes, binary PPM/PGM
//! image dumps, and the key-value manifest format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Create a file for writing; refuses to overwrite unless `force`.
pub fn create_file(path: &Path, force: bool) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    if path.exists() && !force {
        return Err(Error::InvalidArg(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(fs::File::create(path)?)
}

pub fn write_bytes(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    let mut f = create_file(path, force)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str, force: bool) -> Result<()> {
    write_bytes(path, text.as_bytes(), force)
}

/// Binary PPM (P6) for 3 channels or PGM (P5) for 1, maxval 255. Input is
/// `[C,H,W]` in [0,1].
pub fn image_bytes<E: Real>(img: &[E], channels: usize, size: usize) -> Result<Vec<u8>> {
    if img.len() != channels * size * size {
        return Err(Error::shape("image_bytes", format!("{} elements for {channels}x{size}x{size}", img.len())));
    }
    let mut out = Vec::with_capacity(32 + channels * size * size);
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidArg(format!("{c} channels cannot be dumped as PPM/PGM"))),
    };
    out.extend_from_slice(format!("{magic}\n{size} {size}\n255\n").as_bytes());
    let quant = |v: E| -> u8 { (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8 };
    for y in 0..size {
        for x in 0..size {
            for c in 0..channels {
                out.push(quant(img[c * size * size + y * size + x]));
            }
        }
    }
    Ok(out)
}

pub fn write_image<E: Real>(
    path: &Path,
    img: &[E],
    channels: usize,
    size: usize,
    force: bool,
) -> Result<()> {
    write_bytes(path, &image_bytes(img, channels, size)?, force)
}

/// Extension matching the encoding `image_bytes` picks.
pub fn image_ext(channels: usize) -> &'static str {
    if channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Ordered key-value manifest. Writes as `key = value` lines; values never
/// contain newlines. Deterministic byte-for-byte given the same entries.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        debug_assert!(!v.contains('\n'), "manifest values are single-line");
        self.entries.push((key.to_string(), v));
    }

    pub fn push_block(&mut self, text: &str) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.push(k, v);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn write_to(&self, path: &Path, force: bool) -> Result<()> {
        write_text(path, &self.render(), force)
    }

    pub fn parse(text: &str) -> Self {
        let mut m = Manifest::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                m.entries.push((k.trim().to_string(), v.to_string()));
            }
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Join with forbidden-overwrite semantics handled by callers.
pub fn run_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
