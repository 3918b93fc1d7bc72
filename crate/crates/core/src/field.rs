//! Inverse-permeability fields: per-fine-cell positive values of kinv,
//! generated from shape specs, built-in presets, or plain-text files.
//!
//! A field is constant on each fine square (hence on both of its triangles),
//! which keeps every assembled integral exact under the degree-4 rule. The
//! scalar kappa used by the spectral problems is the reciprocal, available
//! per cell on demand.

use crate::error::{CoreError, Result};
use crate::mesh::NestedMesh;
use std::fmt::Write as _;
use std::path::Path;

/// Per-fine-cell inverse permeability, row-major with the bottom row first.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    min: f64,
    max: f64,
}

impl PermeabilityField {
    /// Wraps raw per-cell values (row-major, bottom row first).
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(CoreError::InvalidField(format!(
                "expected {nx} x {ny} = {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (k, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::InvalidField(format!(
                    "value {v} at cell ({}, {}) is not a positive finite number",
                    k % nx,
                    k / nx
                )));
            }
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self { nx, ny, values, min, max })
    }

    /// Wraps values that must match the fine grid of a mesh.
    pub fn from_values(mesh: &NestedMesh, values: Vec<f64>) -> Result<Self> {
        Self::new(mesh.n_fine, mesh.n_fine, values)
    }

    pub fn uniform(mesh: &NestedMesh, value: f64) -> Result<Self> {
        Self::from_values(mesh, vec![value; mesh.n_fine * mesh.n_fine])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// kinv on fine cell (i, j).
    #[inline]
    pub fn cell_value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// kappa = 1/kinv on fine cell (i, j).
    #[inline]
    pub fn kappa(&self, i: usize, j: usize) -> f64 {
        1.0 / self.cell_value(i, j)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// max/min ratio over cells.
    pub fn contrast(&self) -> f64 {
        self.max / self.min
    }

    /// The norm-weighting constant `M = max(max kinv, 1)`.
    pub fn m_const(&self) -> f64 {
        self.max.max(1.0)
    }

    /// Errors unless the field resolution matches the mesh's fine grid.
    pub fn check_matches(&self, mesh: &NestedMesh) -> Result<()> {
        if self.nx != mesh.n_fine || self.ny != mesh.n_fine {
            return Err(CoreError::InvalidField(format!(
                "field is {} x {} but the mesh has {} x {} fine cells",
                self.nx, self.ny, mesh.n_fine, mesh.n_fine
            )));
        }
        Ok(())
    }

    /// Serializes as "n_x n_y" then n_y rows (bottom first) of 17-significant-
    /// digit values; the round trip is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.nx, self.ny);
        for j in 0..self.ny {
            let mut first = true;
            for i in 0..self.nx {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{:.16e}", self.cell_value(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| CoreError::FieldParse { line: 1, msg: "empty file".to_string() })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(CoreError::FieldParse {
                line: 1,
                msg: format!("expected header 'n_x n_y', got {header:?}"),
            });
        }
        let parse_dim = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| CoreError::FieldParse {
                line: 1,
                msg: format!("bad dimension {s:?}"),
            })
        };
        let nx = parse_dim(dims[0])?;
        let ny = parse_dim(dims[1])?;
        if nx == 0 || ny == 0 {
            return Err(CoreError::FieldParse { line: 1, msg: "zero dimension".to_string() });
        }
        let mut values = Vec::with_capacity(nx * ny);
        let mut rows = 0usize;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != nx {
                return Err(CoreError::FieldParse {
                    line: idx + 1,
                    msg: format!("expected {nx} values in row, got {}", row.len()),
                });
            }
            for (col, tok) in row.iter().enumerate() {
                let v: f64 = tok.parse().map_err(|_| CoreError::FieldParse {
                    line: idx + 1,
                    msg: format!("non-numeric entry {tok:?} in column {}", col + 1),
                })?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(CoreError::FieldParse {
                        line: idx + 1,
                        msg: format!("non-positive entry {v} in column {}", col + 1),
                    });
                }
                values.push(v);
            }
            rows += 1;
        }
        if rows != ny {
            return Err(CoreError::FieldParse {
                line: rows + 1,
                msg: format!("expected {ny} rows, got {rows}"),
            });
        }
        Self::new(nx, ny, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }
}

/// Axis-aligned feature shapes in unit-square coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Full-width horizontal band.
    HChannel { y0: f64, y1: f64 },
    /// Full-height vertical band.
    VChannel { x0: f64, x1: f64 },
}

impl Shape {
    /// Half-open containment test on cell centers.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x0 <= x && x < x1 && y0 <= y && y < y1,
            Shape::HChannel { y0, y1 } => y0 <= y && y < y1,
            Shape::VChannel { x0, x1 } => x0 <= x && x < x1,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Rect { x0, y0, x1, y1 } => {
                (0.0..=1.0).contains(&x0)
                    && (0.0..=1.0).contains(&x1)
                    && (0.0..=1.0).contains(&y0)
                    && (0.0..=1.0).contains(&y1)
                    && x0 < x1
                    && y0 < y1
            }
            Shape::HChannel { y0, y1 } => {
                (0.0..=1.0).contains(&y0) && (0.0..=1.0).contains(&y1) && y0 < y1
            }
            Shape::VChannel { x0, x1 } => {
                (0.0..=1.0).contains(&x0) && (0.0..=1.0).contains(&x1) && x0 < x1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidField(format!("feature extent out of range: {self:?}")))
        }
    }
}

/// One feature: a shape painted with a value (later features win).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub shape: Shape,
    pub value: f64,
}

/// Declarative field description: background value plus painted features.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub background: f64,
    pub features: Vec<Feature>,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.background.is_finite() && self.background > 0.0) {
            return Err(CoreError::InvalidField(format!(
                "background value {} must be positive",
                self.background
            )));
        }
        for f in &self.features {
            f.shape.validate()?;
            if !(f.value.is_finite() && f.value > 0.0) {
                return Err(CoreError::InvalidField(format!(
                    "feature value {} must be positive",
                    f.value
                )));
            }
        }
        Ok(())
    }

    /// Rasterizes onto the fine grid by cell-center sampling; the last
    /// feature covering a center wins. Pure in its inputs.
    pub fn generate(&self, mesh: &NestedMesh) -> Result<PermeabilityField> {
        self.validate()?;
        let n = mesh.n_fine;
        let h = mesh.h();
        let mut values = vec![self.background; n * n];
        for j in 0..n {
            let y = (j as f64 + 0.5) * h;
            for i in 0..n {
                let x = (i as f64 + 0.5) * h;
                for f in &self.features {
                    if f.shape.contains(x, y) {
                        values[j * n + i] = f.value;
                    }
                }
            }
        }
        PermeabilityField::from_values(mesh, values)
    }
}

/// Parses a geometry listing: one shape per line
/// (`rect x0 y0 x1 y1`, `hchannel y0 y1`, `vchannel x0 x1`), `#` comments.
pub fn parse_geometry(text: &str) -> Result<Vec<Shape>> {
    let mut shapes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let num = |k: usize| -> Result<f64> {
            toks.get(k)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| CoreError::FieldParse {
                    line: idx + 1,
                    msg: format!("bad coordinate in {line:?}"),
                })
        };
        let shape = match toks[0] {
            "rect" if toks.len() == 5 => {
                Shape::Rect { x0: num(1)?, y0: num(2)?, x1: num(3)?, y1: num(4)? }
            }
            "hchannel" if toks.len() == 3 => Shape::HChannel { y0: num(1)?, y1: num(2)? },
            "vchannel" if toks.len() == 3 => Shape::VChannel { x0: num(1)?, x1: num(2)? },
            _ => {
                return Err(CoreError::FieldParse {
                    line: idx + 1,
                    msg: format!("unrecognized shape line {line:?}"),
                })
            }
        };
        shape.validate().map_err(|e| CoreError::FieldParse { line: idx + 1, msg: e.to_string() })?;
        shapes.push(shape);
    }
    Ok(shapes)
}

/// Built-in heterogeneity patterns, each pairing a shipped geometry with a
/// rule mapping the requested contrast to (background, feature) kinv values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig2a, Preset::Fig2b, Preset::Fig2c, Preset::Fig2d];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig2a" => Some(Preset::Fig2a),
            "fig2b" => Some(Preset::Fig2b),
            "fig2c" => Some(Preset::Fig2c),
            "fig2d" => Some(Preset::Fig2d),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig2c => "fig2c",
            Preset::Fig2d => "fig2d",
        }
    }

    /// Shipped geometry listing for the preset.
    pub fn geometry_text(&self) -> &'static str {
        match self {
            Preset::Fig2a => include_str!("../presets/fig2a.txt"),
            Preset::Fig2b => include_str!("../presets/fig2b.txt"),
            Preset::Fig2c => include_str!("../presets/fig2c.txt"),
            Preset::Fig2d => include_str!("../presets/fig2d.txt"),
        }
    }

    /// (background, feature) kinv values realizing the requested contrast.
    ///
    /// The slow-background patterns put the large kinv in the background
    /// (fast features); the slow-feature patterns invert that. The anchor
    /// magnitudes are configuration: they set where each pattern's drag
    /// sits relative to the unit viscosity, which in turn places the local
    /// eigenvalue families the coarse-space thresholds discriminate on.
    /// The mixed patterns hold the larger value at 1e2 so the norm
    /// constant M stays fixed across the sweep.
    pub fn values_for_contrast(&self, contrast: f64) -> (f64, f64) {
        match self {
            Preset::Fig2a => (contrast * 0.03, 0.03),
            Preset::Fig2b => (0.05, contrast * 0.05),
            Preset::Fig2c => (1e2, 1e2 / contrast),
            Preset::Fig2d => (1e2 / contrast, 1e2),
        }
    }

    pub fn field_spec(&self, contrast: f64) -> Result<FieldSpec> {
        if !(contrast.is_finite() && contrast >= 1.0) {
            return Err(CoreError::InvalidField(format!(
                "contrast {contrast} must be a finite value >= 1"
            )));
        }
        let (background, feature) = self.values_for_contrast(contrast);
        let features = parse_geometry(self.geometry_text())?
            .into_iter()
            .map(|shape| Feature { shape, value: feature })
            .collect();
        Ok(FieldSpec { background, features })
    }
}
