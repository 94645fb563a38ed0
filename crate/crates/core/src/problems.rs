//! ODE test problems with closed-form solutions.

use num_complex::Complex64;

use crate::dec_ode::OdeSystem;
use crate::error::{DecError, Result};

type Exact = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

pub struct TestProblem {
    pub name: String,
    pub system: Box<dyn OdeSystem + Send>,
    pub exact: Exact,
    pub t0: f64,
    pub t_end: f64,
    pub u0: Vec<f64>,
}

impl std::fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestProblem")
            .field("name", &self.name)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("u0", &self.u0)
            .finish()
    }
}

impl TestProblem {
    pub fn exact_at(&self, t: f64) -> Vec<f64> {
        (self.exact)(t)
    }

    /// Largest mismatch between a centered difference of the exact solution
    /// and the right-hand side evaluated on it, over `samples` points of
    /// `[t0, t_end]`.
    pub fn consistency_defect(&self, samples: usize, h: f64) -> f64 {
        let dim = self.system.dimension();
        let mut du = vec![0.0; dim];
        let mut worst: f64 = 0.0;
        for i in 0..samples {
            let t = self.t0 + (self.t_end - self.t0) * i as f64 / (samples - 1).max(1) as f64;
            let plus = self.exact_at(t + h);
            let minus = self.exact_at(t - h);
            self.system.rhs(t, &self.exact_at(t), &mut du);
            for q in 0..dim {
                worst = worst.max(((plus[q] - minus[q]) / (2.0 * h) - du[q]).abs());
            }
        }
        worst
    }
}

/// Parameters of `m y'' + r y' + k y = F cos(Omega t + phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VibratingParams {
    pub m: f64,
    pub r: f64,
    pub k: f64,
    pub f: f64,
    pub omega: f64,
    pub phi: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for VibratingParams {
    fn default() -> Self {
        VibratingParams {
            m: 5.0,
            r: 2.0,
            k: 5.0,
            f: 1.0,
            omega: 2.0,
            phi: 0.1,
            a: 0.5,
            b: 0.25,
        }
    }
}

struct Linear;

impl OdeSystem for Linear {
    fn dimension(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        du[0] = -5.0 * u[0] + u[1];
        du[1] = 5.0 * u[0] - u[1];
    }
}

/// `u' = -5u + v`, `v' = 5u - v` on `[0, 1]` from `(0.9, 0.1)`.
pub fn linear_system() -> TestProblem {
    let (u0, v0) = (0.9, 0.1);
    let s = u0 + v0;
    TestProblem {
        name: "linear".into(),
        system: Box::new(Linear),
        exact: Box::new(move |t| {
            let u = s / 6.0 + (u0 - s / 6.0) * (-6.0 * t).exp();
            vec![u, s - u]
        }),
        t0: 0.0,
        t_end: 1.0,
        u0: vec![u0, v0],
    }
}

struct Vibrating(VibratingParams);

impl OdeSystem for Vibrating {
    fn dimension(&self) -> usize {
        2
    }
    fn rhs(&self, t: f64, u: &[f64], du: &mut [f64]) {
        let p = &self.0;
        du[0] = u[1];
        du[1] = (p.f * (p.omega * t + p.phi).cos() - p.r * u[1] - p.k * u[0]) / p.m;
    }
}

/// Damping regime of the homogeneous part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    Over,
    Critical,
    Under,
}

impl VibratingParams {
    pub fn damping(&self) -> Damping {
        let critical = 2.0 * (self.k * self.m).sqrt();
        if (self.r - critical).abs() <= 1e-12 * critical {
            Damping::Critical
        } else if self.r > critical {
            Damping::Over
        } else {
            Damping::Under
        }
    }

    /// Amplitude and phase of the steady forced response.
    pub fn particular(&self) -> (f64, f64) {
        let re = self.k - self.m * self.omega * self.omega;
        let im = self.omega * self.r;
        if self.f == 0.0 {
            return (0.0, self.phi);
        }
        (self.f / re.hypot(im), self.phi - im.atan2(re))
    }

    /// `(y, y')` at time `t`.
    pub fn exact(&self, t: f64) -> [f64; 2] {
        let p = self;
        let (amp, psi) = p.particular();
        let yp = |t: f64| amp * (p.omega * t + psi).cos();
        let dyp = |t: f64| -p.omega * amp * (p.omega * t + psi).sin();
        let a = p.a - yp(0.0);
        let b = p.b - dyp(0.0);
        let (yh, dyh) = match p.damping() {
            Damping::Under => {
                let decay = p.r / (2.0 * p.m);
                let w = (4.0 * p.k * p.m - p.r * p.r).sqrt() / (2.0 * p.m);
                let c1 = a;
                let c2 = (b + decay * a) / w;
                let e = (-decay * t).exp();
                let (s, c) = (w * t).sin_cos();
                let y = e * (c1 * c + c2 * s);
                let dy = -decay * y + e * w * (-c1 * s + c2 * c);
                (y, dy)
            }
            Damping::Critical => {
                let l = -p.r / (2.0 * p.m);
                let c1 = a;
                let c2 = b - l * a;
                let e = (l * t).exp();
                (e * (c1 + c2 * t), e * (l * (c1 + c2 * t) + c2))
            }
            Damping::Over => {
                let disc = (p.r * p.r - 4.0 * p.k * p.m).sqrt();
                let l1 = (-p.r + disc) / (2.0 * p.m);
                let l2 = (-p.r - disc) / (2.0 * p.m);
                let c1 = (b - l2 * a) / (l1 - l2);
                let c2 = a - c1;
                let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
                (c1 * e1 + c2 * e2, l1 * c1 * e1 + l2 * c2 * e2)
            }
        };
        [yh + yp(t), dyh + dyp(t)]
    }
}

/// Forced damped oscillator as a first-order system in `(y, y')`.
pub fn vibrating_system(params: VibratingParams, t_end: f64) -> Result<TestProblem> {
    let p = params;
    let positive = [p.m, p.k, p.omega].iter().all(|x| *x > 0.0 && x.is_finite());
    let nonneg = [p.r, p.f].iter().all(|x| *x >= 0.0 && x.is_finite());
    let resonant = p.r == 0.0 && p.f != 0.0 && p.k == p.m * p.omega * p.omega;
    if !positive || !nonneg || resonant {
        return Err(DecError::InvalidParameters(format!(
            "vibrating system needs m, k, Omega > 0, r, F >= 0 and no undamped resonance: {p:?}"
        )));
    }
    Ok(TestProblem {
        name: "vibrating".into(),
        system: Box::new(Vibrating(p)),
        exact: Box::new(move |t| p.exact(t).to_vec()),
        t0: 0.0,
        t_end,
        u0: vec![p.a, p.b],
    })
}

/// The default forced, underdamped configuration on `[0, 4]`.
pub fn vibrating_default() -> TestProblem {
    vibrating_system(VibratingParams::default(), 4.0).expect("default parameters are valid")
}

struct Dahlquist(Complex64);

impl OdeSystem for Dahlquist {
    fn dimension(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let z = self.0 * Complex64::new(u[0], u[1]);
        du[0] = z.re;
        du[1] = z.im;
    }
}

/// `u' = lambda u` with complex `u` stored as `(re, im)`.
pub fn dahlquist(lambda: Complex64, u0: [f64; 2], t_end: f64) -> TestProblem {
    let start = Complex64::new(u0[0], u0[1]);
    TestProblem {
        name: "dahlquist".into(),
        system: Box::new(Dahlquist(lambda)),
        exact: Box::new(move |t| {
            let z = (lambda * t).exp() * start;
            vec![z.re, z.im]
        }),
        t0: 0.0,
        t_end,
        u0: u0.to_vec(),
    }
}

/// Looks a problem up by name with its default parameters.
pub fn by_name(name: &str) -> Result<TestProblem> {
    match name.trim().to_ascii_lowercase().as_str() {
        "linear" => Ok(linear_system()),
        "vibrating" => Ok(vibrating_default()),
        "dahlquist" => Ok(dahlquist(Complex64::new(-1.0, 0.0), [1.0, 0.0], 1.0)),
        other => Err(DecError::Parse(format!("unknown problem `{other}`"))),
    }
}
