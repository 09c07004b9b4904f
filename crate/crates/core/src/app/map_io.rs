//! Occupancy maps on disk: binary PGM images with a YAML side file.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AppError;
use crate::geometry::GridMeta;
use crate::grid::{CostGrid, Occupancy, OccupancyGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    /// Image file name, relative to the YAML file. Informational only.
    #[serde(default)]
    pub image: Option<String>,
    pub resolution: f64,
    /// `[x, y, yaw]` of the lower-left pixel corner.
    pub origin: [f64; 3],
    #[serde(default = "default_occ")]
    pub occupied_thresh: f64,
    #[serde(default = "default_free")]
    pub free_thresh: f64,
    #[serde(default)]
    pub negate: u8,
}

fn default_occ() -> f64 {
    0.65
}
fn default_free() -> f64 {
    0.196
}

impl MapMeta {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let m: MapMeta = serde_yaml::from_str(text).map_err(|e| AppError::MapParse(format!("map yaml: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(AppError::Config(format!("map resolution must be > 0, got {}", self.resolution)));
        }
        if !(0.0..=1.0).contains(&self.free_thresh)
            || !(0.0..=1.0).contains(&self.occupied_thresh)
            || self.free_thresh >= self.occupied_thresh
        {
            return Err(AppError::Config(format!(
                "need 0 <= free_thresh ({}) < occupied_thresh ({}) <= 1",
                self.free_thresh, self.occupied_thresh
            )));
        }
        Ok(())
    }
}

/// A decoded 8-bit grayscale image, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Parses a binary (P5) PGM with maxval <= 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm, AppError> {
    let err = |m: &str| AppError::MapParse(format!("pgm: {m}"));
    let mut pos = 0;
    let mut token = || -> Result<String, AppError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(err("expected P5 magic"));
    }
    let mut num = || -> Result<usize, AppError> { token()?.parse::<usize>().map_err(|_| err("bad header number")) };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if width == 0 || height == 0 {
        return Err(err("zero image size"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(err("only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("missing raster"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos < n {
        return Err(err("raster shorter than width * height"));
    }
    let pixels = bytes[pos..pos + n]
        .iter()
        .map(|&v| if maxval == 255 { v } else { ((v as usize * 255 + maxval / 2) / maxval) as u8 })
        .collect();
    Ok(Pgm { width, height, pixels })
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", pgm.width, pgm.height).into_bytes();
    out.extend_from_slice(&pgm.pixels);
    out
}

/// Classifies one pixel by its occupancy probability `(255 - v) / 255`.
pub fn classify_pixel(value: u8, meta: &MapMeta) -> Occupancy {
    let v = if meta.negate != 0 { 255 - value } else { value };
    let p = (255.0 - v as f64) / 255.0;
    if p >= meta.occupied_thresh {
        Occupancy::Occupied
    } else if p <= meta.free_thresh {
        Occupancy::Free
    } else {
        Occupancy::Unknown
    }
}

pub fn grid_from_pgm(pgm: &Pgm, meta: &MapMeta) -> Result<OccupancyGrid, AppError> {
    meta.validate()?;
    let gm = GridMeta::new(meta.resolution, meta.origin[0], meta.origin[1], pgm.width, pgm.height)
        .map_err(|e| AppError::Config(e.to_string()))?;
    let mut cells = vec![Occupancy::Unknown; pgm.width * pgm.height];
    for row in 0..pgm.height {
        let cy = pgm.height - 1 - row;
        for cx in 0..pgm.width {
            cells[cy * pgm.width + cx] = classify_pixel(pgm.pixels[row * pgm.width + cx], meta);
        }
    }
    OccupancyGrid::from_cells(gm, cells).map_err(|e| AppError::Config(e.to_string()))
}

pub fn load_map(pgm_path: &Path, meta_path: &Path) -> Result<OccupancyGrid, AppError> {
    let bytes = std::fs::read(pgm_path).map_err(|e| AppError::Io(format!("{}: {e}", pgm_path.display())))?;
    let text = std::fs::read_to_string(meta_path).map_err(|e| AppError::Io(format!("{}: {e}", meta_path.display())))?;
    let meta = MapMeta::parse(&text)?;
    grid_from_pgm(&parse_pgm(&bytes)?, &meta)
}

/// Renders a grid as an image: occupied black, free white, unknown gray.
pub fn grid_to_pgm(grid: &OccupancyGrid) -> Pgm {
    let (w, h) = (grid.meta.width, grid.meta.height);
    let mut pixels = vec![0u8; w * h];
    for cy in 0..h {
        for cx in 0..w {
            pixels[(h - 1 - cy) * w + cx] = match grid.cells[cy * w + cx] {
                Occupancy::Occupied => 0,
                Occupancy::Free => 254,
                Occupancy::Unknown => 205,
            };
        }
    }
    Pgm { width: w, height: h, pixels }
}

pub fn save_map(grid: &OccupancyGrid, pgm_path: &Path, yaml_path: &Path) -> Result<(), AppError> {
    let io = |e: std::io::Error| AppError::Io(e.to_string());
    std::fs::write(pgm_path, encode_pgm(&grid_to_pgm(grid))).map_err(io)?;
    let meta = MapMeta {
        image: pgm_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        resolution: grid.meta.resolution,
        origin: [grid.meta.origin.x, grid.meta.origin.y, 0.0],
        occupied_thresh: default_occ(),
        free_thresh: default_free(),
        negate: 0,
    };
    let yaml = serde_yaml::to_string(&meta).map_err(|e| AppError::Io(e.to_string()))?;
    std::fs::File::create(yaml_path).and_then(|mut f| f.write_all(yaml.as_bytes())).map_err(io)
}

/// Writes a cost grid as an image with pixel `255 - cost`, so free space is
/// white and lethal/unknown cells are dark.
pub fn save_costmap_pgm(grid: &CostGrid, path: &Path) -> Result<(), AppError> {
    let (w, h) = (grid.meta.width, grid.meta.height);
    let mut pixels = vec![0u8; w * h];
    for cy in 0..h {
        for cx in 0..w {
            pixels[(h - 1 - cy) * w + cx] = 255 - grid.data[cy * w + cx];
        }
    }
    std::fs::write(path, encode_pgm(&Pgm { width: w, height: h, pixels })).map_err(|e| AppError::Io(e.to_string()))
}
