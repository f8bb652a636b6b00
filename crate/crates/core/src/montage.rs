//! Electrode geometry: the 32-channel 10/20 montage, azimuthal projection
//! to the plane, and the affine placement of projected electrodes on the
//! interpolation grid.
//!
//! Coordinate conventions. 3-D positions are unit vectors with +x through
//! the right ear, +y through the nasion and +z through the vertex. The
//! projection preserves great-circle distance from the vertex as planar
//! radius. Grid coordinates are (row, col) with row 0 at the front of the
//! head and col 0 at the left ear; electrodes land inside [1, 30] on both
//! axes of the 32x32 grid, leaving a one-pixel border.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Embedded coordinate table, format `name x y z` per row.
const MONTAGE_10_20_32: &str = include_str!("../assets/montage_10_20_32.txt");

pub const GRID_SIZE: usize = 32;
/// Margin of the affine grid mapping: electrode bounding box spans
/// [BORDER, GRID_SIZE - 1 - BORDER] on both axes.
const BORDER: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct MontageGeometry {
    pub electrode_names: Vec<String>,
    /// Unit-sphere coordinates, shape [n, 3].
    pub positions_3d: Array2<f64>,
    /// Grid coordinates (row, col), shape [n, 2].
    pub positions_2d: Array2<f64>,
    pub grid_size: (usize, usize),
}

/// Azimuthal equidistant projection of unit vectors with the pole at +z.
/// A point with polar angle theta and azimuth phi maps to the plane point
/// (theta cos phi, theta sin phi); the vertex maps to the origin.
pub fn project_electrodes_azimuthal(positions_3d: &Array2<f64>) -> Result<Array2<f64>> {
    let n = positions_3d.nrows();
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let (x, y, z) = (
            positions_3d[[i, 0]],
            positions_3d[[i, 1]],
            positions_3d[[i, 2]],
        );
        let theta = z.clamp(-1.0, 1.0).acos();
        if (theta - std::f64::consts::PI).abs() < 1e-9 {
            return Err(Error::input(format!(
                "electrode {i} is antipodal to the vertex; projection undefined there"
            )));
        }
        let phi = y.atan2(x);
        out[[i, 0]] = theta * phi.cos();
        out[[i, 1]] = theta * phi.sin();
    }
    Ok(out)
}

impl MontageGeometry {
    /// The embedded 32-channel table.
    pub fn standard_32() -> Result<Self> {
        Self::from_table(MONTAGE_10_20_32)
    }

    /// Parses a `name x y z` table, projects, and maps to grid coordinates.
    pub fn from_table(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::input(format!(
                    "montage line {}: expected `name x y z`, got {line:?}",
                    lineno + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::input(format!("montage line {}: bad number {s:?}", lineno + 1)))
            };
            names.push(fields[0].to_string());
            coords.push([parse(fields[1])?, parse(fields[2])?, parse(fields[3])?]);
        }
        if names.is_empty() {
            return Err(Error::input("montage table is empty"));
        }
        for i in 0..names.len() {
            if names[i + 1..].contains(&names[i]) {
                return Err(Error::input(format!("duplicate electrode name {}", names[i])));
            }
        }
        let n = names.len();
        let mut positions_3d = Array2::zeros((n, 3));
        for (i, c) in coords.iter().enumerate() {
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::input(format!(
                    "electrode {} is not on the unit sphere (|r| = {norm})",
                    names[i]
                )));
            }
            for k in 0..3 {
                positions_3d[[i, k]] = c[k] / norm;
            }
        }
        let plane = project_electrodes_azimuthal(&positions_3d)?;
        let positions_2d = plane_to_grid(&plane)?;
        Ok(MontageGeometry {
            electrode_names: names,
            positions_3d,
            positions_2d,
            grid_size: (GRID_SIZE, GRID_SIZE),
        })
    }

    pub fn n_electrodes(&self) -> usize {
        self.electrode_names.len()
    }
}

/// Maps plane coordinates so the electrode bounding box spans the central
/// square of the grid. Front of the head (+y in the plane) becomes row 0;
/// left ear (-x) becomes col 0.
fn plane_to_grid(plane: &Array2<f64>) -> Result<Array2<f64>> {
    let n = plane.nrows();
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        min_x = min_x.min(plane[[i, 0]]);
        max_x = max_x.max(plane[[i, 0]]);
        min_y = min_y.min(plane[[i, 1]]);
        max_y = max_y.max(plane[[i, 1]]);
    }
    let span_x = max_x - min_x;
    let span_y = max_y - min_y;
    if span_x <= 0.0 || span_y <= 0.0 {
        return Err(Error::config(
            "degenerate montage: electrodes span zero area after projection",
        ));
    }
    let lo = BORDER;
    let hi = GRID_SIZE as f64 - 1.0 - BORDER;
    let mut grid = Array2::zeros((n, 2));
    for i in 0..n {
        let col = lo + (plane[[i, 0]] - min_x) / span_x * (hi - lo);
        let row = lo + (max_y - plane[[i, 1]]) / span_y * (hi - lo);
        grid[[i, 0]] = row;
        grid[[i, 1]] = col;
    }
    Ok(grid)
}
