//! Linear stability of explicit tableaux.

use num_complex::Complex64;
use rayon::prelude::*;
use std::io::Write;
use std::str::FromStr;

use crate::dec_ode::SchemePlan;
use crate::error::{DecError, Result};
use crate::rk_export::{trace_tableau, ButcherTableau};

/// Coefficients below this are dropped from the tail.
pub const TRUNCATION: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPolynomial {
    /// `coefficients[r]` multiplies `z^r`.
    pub coefficients: Vec<f64>,
}

impl StabilityPolynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Left end of the real stability interval: the first `x < 0` (scanning
    /// from 0 with step `h`) where `|R(x)|` exceeds one, refined by bisection.
    /// `None` if no crossing is found above `lower`.
    pub fn real_axis_boundary(&self, lower: f64, h: f64) -> Option<f64> {
        let unstable = |x: f64| self.eval_real(x).abs() > 1.0;
        let mut right = 0.0;
        let mut x = -h;
        while x >= lower {
            if unstable(x) {
                let mut lo = x;
                let mut hi = right;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if unstable(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            right = x;
            x -= h;
        }
        None
    }
}

/// `R(z) = 1 + sum_r z^{r+1} b^T A^r 1`, exact for explicit tableaux since
/// `A` is nilpotent.
pub fn stability_polynomial(tab: &ButcherTableau) -> Result<StabilityPolynomial> {
    let s = tab.stages();
    if !tab.a.is_strictly_lower() {
        return Err(DecError::InvalidParameters(
            "stability polynomial requires an explicit (strictly lower) tableau".into(),
        ));
    }
    let mut coefficients = Vec::with_capacity(s + 1);
    coefficients.push(1.0);
    let mut v = vec![1.0; s];
    for _ in 0..s {
        coefficients.push(tab.b.iter().zip(&v).map(|(b, x)| b * x).sum());
        v = tab.a.matvec(&v);
    }
    while coefficients.len() > 1 && coefficients.last().unwrap().abs() < TRUNCATION {
        coefficients.pop();
    }
    Ok(StabilityPolynomial { coefficients })
}

/// Stability polynomial of any plan, including ones without an exportable
/// reduced tableau.
pub fn scheme_polynomial(plan: &SchemePlan) -> Result<StabilityPolynomial> {
    stability_polynomial(&trace_tableau(plan)?)
}

/// Rectangle and resolution of a region scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            re: (-12.0, 2.0),
            im: (-12.0, 12.0),
            nx: 600,
            ny: 600,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a < b;
        if !ok(self.re) || !ok(self.im) {
            return Err(DecError::InvalidParameters(format!(
                "grid intervals must be finite and nonempty: {:?} x {:?}",
                self.re, self.im
            )));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(DecError::InvalidParameters(format!(
                "grid resolution must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// Parses `re0,re1,im0,im1,nx,ny`.
impl FromStr for GridSpec {
    type Err = DecError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(DecError::Parse(format!(
                "grid needs 6 comma-separated fields, got {}",
                parts.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            parts[i]
                .parse::<f64>()
                .map_err(|e| DecError::Parse(format!("grid field {}: {e}", i + 1)))
        };
        let count = |i: usize| -> Result<usize> {
            parts[i]
                .parse::<usize>()
                .map_err(|e| DecError::Parse(format!("grid field {}: {e}", i + 1)))
        };
        let spec = GridSpec {
            re: (num(0)?, num(1)?),
            im: (num(2)?, num(3)?),
            nx: count(4)?,
            ny: count(5)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid {
    pub spec: GridSpec,
    /// `magnitudes[i][j] = |R(re_i + i im_j)|`.
    pub magnitudes: Vec<Vec<f64>>,
}

fn axis(range: (f64, f64), n: usize, i: usize) -> f64 {
    range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
}

pub fn region_grid(poly: &StabilityPolynomial, spec: GridSpec) -> Result<StabilityGrid> {
    spec.validate()?;
    let magnitudes = (0..spec.nx)
        .into_par_iter()
        .map(|i| {
            let x = axis(spec.re, spec.nx, i);
            (0..spec.ny)
                .map(|j| poly.eval(Complex64::new(x, axis(spec.im, spec.ny, j))).norm())
                .collect()
        })
        .collect();
    Ok(StabilityGrid { spec, magnitudes })
}

impl StabilityGrid {
    pub fn re(&self, i: usize) -> f64 {
        axis(self.spec.re, self.spec.nx, i)
    }

    pub fn im(&self, j: usize) -> f64 {
        axis(self.spec.im, self.spec.ny, j)
    }

    /// `|R(z)| < 1`.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.magnitudes
            .iter()
            .map(|col| col.iter().map(|m| *m < 1.0).collect())
            .collect()
    }

    /// Fraction of grid points inside the region times the rectangle area.
    pub fn stable_area(&self) -> f64 {
        let inside = self.mask().iter().flatten().filter(|b| **b).count();
        let area = (self.spec.re.1 - self.spec.re.0) * (self.spec.im.1 - self.spec.im.0);
        area * inside as f64 / (self.spec.nx * self.spec.ny) as f64
    }

    /// CSV with columns `re,im,abs_r`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["re", "im", "abs_r"])
            .map_err(|e| DecError::Io(e.to_string()))?;
        for i in 0..self.spec.nx {
            for j in 0..self.spec.ny {
                out.write_record(&[
                    self.re(i).to_string(),
                    self.im(j).to_string(),
                    self.magnitudes[i][j].to_string(),
                ])
                .map_err(|e| DecError::Io(e.to_string()))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Binary 8-bit PGM, white inside the region, top row at the largest
    /// imaginary part.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        write!(w, "P5\n{nx} {ny}\n255\n")?;
        let mut pixels = Vec::with_capacity(nx * ny);
        for j in (0..ny).rev() {
            for i in 0..nx {
                pixels.push(if self.magnitudes[i][j] < 1.0 { 255u8 } else { 0 });
            }
        }
        w.write_all(&pixels)?;
        Ok(())
    }
}
