use std::fs;
use std::io::BufWriter;
use std::path::Path;

use sarforge::formats::{quantize_u16, write_image, write_pgm16};
use sarforge::numerics::RealMatrix;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::VERSION;

/// Creates `dir` and records the effective configuration and version.
pub fn prepare_run_dir(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("version.txt"), format!("sarforge {VERSION}\n"))?;
    Ok(())
}

/// `<stem>.sarf` (exact floats), `<stem>.pgm`, and optionally `<stem>.png`.
pub fn write_image_set(dir: &Path, stem: &str, img: &RealMatrix, png: bool) -> Result<(), CliError> {
    write_image(&dir.join(format!("{stem}.sarf")), img)?;
    write_pgm16(&dir.join(format!("{stem}.pgm")), img)?;
    if png {
        write_png16(&dir.join(format!("{stem}.png")), img)?;
    }
    Ok(())
}

fn write_png16(path: &Path, img: &RealMatrix) -> Result<(), CliError> {
    let (rows, cols) = img.dims();
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let bytes: Vec<u8> = quantize_u16(img, img.min(), img.max())
        .into_iter()
        .flat_map(u16::to_be_bytes)
        .collect();
    let png_err = |e: png::EncodingError| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&bytes).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
