//! Uniform complex-plane grids.
//!
//! A [`GridField`] samples a real scalar field on the square box
//! `[-L, L]^2` with `n` nodes per side, spacing `h = 2L/(n-1)`.
//! Node `(i, j)` sits at `z = (-L + i h) + (-L + j h) i`, i.e. `i` walks
//! the real axis and `j` the imaginary axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{FockError, Result};

/// What a sampled field represents; carried through serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Meaning {
    Weight,
    Density,
    Rho,
    Regularized,
    Gadget,
}

/// Real scalar field on a uniform grid over `[-L, L]^2`.
#[derive(Debug, Clone)]
pub struct GridField {
    pub box_halfwidth: f64,
    pub n: usize,
    pub values: Vec<f64>,
    pub meaning: Meaning,
}

impl GridField {
    pub fn from_fn(box_halfwidth: f64, n: usize, meaning: Meaning, f: impl Fn(Complex64) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        let h = 2.0 * box_halfwidth / (n - 1) as f64;
        for j in 0..n {
            let y = -box_halfwidth + j as f64 * h;
            for i in 0..n {
                let x = -box_halfwidth + i as f64 * h;
                values[j * n + i] = f(Complex64::new(x, y));
            }
        }
        GridField { box_halfwidth, n, values, meaning }
    }

    pub fn constant(box_halfwidth: f64, n: usize, meaning: Meaning, c: f64) -> Self {
        GridField { box_halfwidth, n, values: vec![c; n * n], meaning }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.box_halfwidth / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        let h = self.h();
        Complex64::new(-self.box_halfwidth + i as f64 * h, -self.box_halfwidth + j as f64 * h)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.n + i] = v;
    }

    /// Nearest grid node to `z` (clamped into the box).
    pub fn nearest_node(&self, z: Complex64) -> (usize, usize) {
        let h = self.h();
        let clamp = |t: f64| {
            let k = ((t + self.box_halfwidth) / h).round();
            (k.max(0.0) as usize).min(self.n - 1)
        };
        (clamp(z.re), clamp(z.im))
    }

    /// Bilinear interpolation; clamps to the box.
    pub fn interp(&self, z: Complex64) -> f64 {
        let h = self.h();
        let fx = ((z.re + self.box_halfwidth) / h).clamp(0.0, (self.n - 1) as f64);
        let fy = ((z.im + self.box_halfwidth) / h).clamp(0.0, (self.n - 1) as f64);
        let i0 = (fx.floor() as usize).min(self.n - 2);
        let j0 = (fy.floor() as usize).min(self.n - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        (1.0 - tx) * (1.0 - ty) * self.at(i0, j0)
            + tx * (1.0 - ty) * self.at(i0 + 1, j0)
            + (1.0 - tx) * ty * self.at(i0, j0 + 1)
            + tx * ty * self.at(i0 + 1, j0 + 1)
    }

    /// 5-point stencil Laplacian on interior nodes; the boundary ring is
    /// copied from the nearest interior value.
    pub fn stencil_laplacian(&self, meaning: Meaning) -> GridField {
        let n = self.n;
        let h2 = self.h() * self.h();
        let mut out = GridField::constant(self.box_halfwidth, n, meaning, 0.0);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let lap = (self.at(i + 1, j) + self.at(i - 1, j) + self.at(i, j + 1)
                    + self.at(i, j - 1)
                    - 4.0 * self.at(i, j))
                    / h2;
                out.set(i, j, lap);
            }
        }
        for i in 0..n {
            let v = out.at(i.clamp(1, n - 2), 1);
            out.set(i, 0, v);
            let v = out.at(i.clamp(1, n - 2), n - 2);
            out.set(i, n - 1, v);
        }
        for j in 0..n {
            let v = out.at(1, j.clamp(1, n - 2));
            out.set(0, j, v);
            let v = out.at(n - 2, j.clamp(1, n - 2));
            out.set(n - 1, j, v);
        }
        out
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.n == other.n && (self.box_halfwidth - other.box_halfwidth).abs() < 1e-12
    }

    pub fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(FockError::GridMismatch {
                expected: self.n,
                expected_l: self.box_halfwidth,
                got: other.n,
                got_l: other.box_halfwidth,
            })
        }
    }

    /// Maximum over nodes at least `margin` away from the box edge.
    pub fn interior_max(&self, margin: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.n {
            for i in 0..self.n {
                let z = self.node(i, j);
                if z.re.abs() <= self.box_halfwidth - margin && z.im.abs() <= self.box_halfwidth - margin {
                    best = best.max(f(self.at(i, j)));
                }
            }
        }
        best
    }

    /// Flat CSV `re,im,value` plus a JSON sidecar `{L, n, meaning}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "re,im,value")?;
        for j in 0..self.n {
            for i in 0..self.n {
                let z = self.node(i, j);
                writeln!(w, "{},{},{}", z.re, z.im, self.at(i, j))?;
            }
        }
        let sidecar = path.with_extension("json");
        let meta = serde_json::json!({
            "L": self.box_halfwidth,
            "n": self.n,
            "meaning": self.meaning,
        });
        std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<GridField> {
        let sidecar = path.with_extension("json");
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?;
        let l = meta["L"].as_f64().ok_or_else(|| FockError::Config("sidecar missing L".into()))?;
        let n = meta["n"].as_u64().ok_or_else(|| FockError::Config("sidecar missing n".into()))? as usize;
        let meaning: Meaning = serde_json::from_value(meta["meaning"].clone())?;
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::with_capacity(n * n);
        for line in text.lines().skip(1) {
            let v = line
                .rsplit(',')
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| FockError::Config(format!("bad CSV line: {line}")))?;
            values.push(v);
        }
        if values.len() != n * n {
            return Err(FockError::Config(format!(
                "CSV has {} values, sidecar says {}x{}",
                values.len(),
                n,
                n
            )));
        }
        Ok(GridField { box_halfwidth: l, n, values, meaning })
    }
}

/// Complex scalar field on the same grid layout as [`GridField`].
#[derive(Debug, Clone)]
pub struct ComplexGrid {
    pub box_halfwidth: f64,
    pub n: usize,
    pub values: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn from_fn(box_halfwidth: f64, n: usize, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        let h = 2.0 * box_halfwidth / (n - 1) as f64;
        for j in 0..n {
            let y = -box_halfwidth + j as f64 * h;
            for i in 0..n {
                let x = -box_halfwidth + i as f64 * h;
                values[j * n + i] = f(Complex64::new(x, y));
            }
        }
        ComplexGrid { box_halfwidth, n, values }
    }

    pub fn zeros(box_halfwidth: f64, n: usize) -> Self {
        ComplexGrid { box_halfwidth, n, values: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.box_halfwidth / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        let h = self.h();
        Complex64::new(-self.box_halfwidth + i as f64 * h, -self.box_halfwidth + j as f64 * h)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[j * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.values[j * self.n + i] = v;
    }

    pub fn nearest_node(&self, z: Complex64) -> (usize, usize) {
        let h = self.h();
        let clamp = |t: f64| {
            let k = ((t + self.box_halfwidth) / h).round();
            (k.max(0.0) as usize).min(self.n - 1)
        };
        (clamp(z.re), clamp(z.im))
    }

    pub fn same_grid_as(&self, other: &ComplexGrid) -> bool {
        self.n == other.n && (self.box_halfwidth - other.box_halfwidth).abs() < 1e-12
    }

    /// Discrete d-bar by central differences: (u_x + i u_y) / 2.
    pub fn dbar(&self) -> ComplexGrid {
        let n = self.n;
        let h = self.h();
        let mut out = ComplexGrid::zeros(self.box_halfwidth, n);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let ux = (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * h);
                let uy = (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * h);
                out.set(i, j, 0.5 * (ux + Complex64::i() * uy));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_nodes() {
        let g = GridField::from_fn(6.0, 256, Meaning::Weight, |z| z.norm_sqr());
        assert!((g.h() - 12.0 / 255.0).abs() < 1e-15);
        assert_eq!(g.node(0, 0), Complex64::new(-6.0, -6.0));
        assert_eq!(g.node(255, 255), Complex64::new(6.0, 6.0));
    }

    #[test]
    fn stencil_laplacian_of_quadratic() {
        let g = GridField::from_fn(2.0, 65, Meaning::Weight, |z| z.norm_sqr());
        let lap = g.stencil_laplacian(Meaning::Density);
        // Delta |z|^2 = 4 exactly; the 5-point stencil is exact on quadratics.
        for j in 1..64 {
            for i in 1..64 {
                assert!((lap.at(i, j) - 4.0).abs() < 1e-9, "lap={}", lap.at(i, j));
            }
        }
    }

    #[test]
    fn dbar_of_conjugate() {
        let g = ComplexGrid::from_fn(2.0, 65, |z| z.conj());
        let d = g.dbar();
        for j in 1..64 {
            for i in 1..64 {
                assert!((d.at(i, j) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let g = GridField::from_fn(1.0, 16, Meaning::Rho, |z| z.re + 2.0 * z.im);
        g.write_csv(&path).unwrap();
        let back = GridField::read_csv(&path).unwrap();
        assert_eq!(back.n, 16);
        assert_eq!(back.meaning, Meaning::Rho);
        for k in 0..g.values.len() {
            assert!((g.values[k] - back.values[k]).abs() < 1e-12);
        }
    }
}
