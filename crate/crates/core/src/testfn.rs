//! Separable test functions for weak-form residuals.
//!
//! A scalar test function is `chi(t) a(x1) b(x2)`; a vector test function has
//! one such scalar per component. Bumps are the C1 polynomial `(1 - z^2)^2`.

use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, BoxGrid, SubBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Zero,
    One,
    /// `(1 - z^2)^2` with `z = (x - center) / radius`, zero outside.
    Bump {
        center: f64,
        radius: f64,
    },
    /// `sin(k pi (x - lo) / len)`.
    Sin {
        k: u32,
        lo: f64,
        len: f64,
    },
    /// `cos(k pi (x - lo) / len)`.
    Cos {
        k: u32,
        lo: f64,
        len: f64,
    },
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::One => 1.0,
            Profile::Bump { center, radius } => {
                let z = (x - center) / radius;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - z * z;
                    s * s
                }
            }
            Profile::Sin { k, lo, len } => (k as f64 * std::f64::consts::PI * (x - lo) / len).sin(),
            Profile::Cos { k, lo, len } => (k as f64 * std::f64::consts::PI * (x - lo) / len).cos(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero | Profile::One => 0.0,
            Profile::Bump { center, radius } => {
                let z = (x - center) / radius;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    -4.0 * z * (1.0 - z * z) / radius
                }
            }
            Profile::Sin { k, lo, len } => {
                let w = k as f64 * std::f64::consts::PI / len;
                w * (w * (x - lo)).cos()
            }
            Profile::Cos { k, lo, len } => {
                let w = k as f64 * std::f64::consts::PI / len;
                -w * (w * (x - lo)).sin()
            }
        }
    }

    /// Exact `int_a^b` of the profile.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::One => b - a,
            Profile::Bump { center, radius } => {
                let prim = |x: f64| {
                    let z = ((x - center) / radius).clamp(-1.0, 1.0);
                    radius * (z - 2.0 * z.powi(3) / 3.0 + z.powi(5) / 5.0)
                };
                prim(b) - prim(a)
            }
            Profile::Sin { k, lo, len } if k > 0 => {
                let w = k as f64 * std::f64::consts::PI / len;
                ((w * (a - lo)).cos() - (w * (b - lo)).cos()) / w
            }
            Profile::Sin { .. } => 0.0,
            Profile::Cos { k, lo, len } if k > 0 => {
                let w = k as f64 * std::f64::consts::PI / len;
                ((w * (b - lo)).sin() - (w * (a - lo)).sin()) / w
            }
            Profile::Cos { .. } => b - a,
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Profile::Bump { center, radius } => Some((center - radius, center + radius)),
            _ => None,
        }
    }

    fn is_nonnegative(&self) -> bool {
        matches!(self, Profile::Zero | Profile::One | Profile::Bump { .. })
    }
}

/// Time factor of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeProfile {
    Constant,
    /// `(1 - t/T)^2` on `[0, T]`, zero afterwards; C1 with compact support in `[0, T]`.
    Taper {
        horizon: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Taper { horizon } => {
                let s = (1.0 - t / horizon).max(0.0);
                s * s
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Taper { horizon } => {
                let s = (1.0 - t / horizon).max(0.0);
                -2.0 * s / horizon
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub x: Profile,
    pub y: Profile,
}

impl Scalar {
    pub fn one() -> Self {
        Self { x: Profile::One, y: Profile::One }
    }

    pub fn zero() -> Self {
        Self { x: Profile::Zero, y: Profile::Zero }
    }

    pub fn is_zero(&self) -> bool {
        self.x == Profile::Zero || self.y == Profile::Zero
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.x.value(p[0]) * self.y.value(p[1])
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        [self.x.derivative(p[0]) * self.y.value(p[1]), self.x.value(p[0]) * self.y.derivative(p[1])]
    }

    /// Midpoint-rule errors of `phi`, `d1 phi`, `d2 phi` on the cell `[x0, x1] x [y0, y1]`,
    /// with the exact cell integrals of the same three quantities.
    fn cell_defects(&self, x: [f64; 2], y: [f64; 2]) -> ([f64; 3], [f64; 3]) {
        let (c, area) = ([0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])], (x[1] - x[0]) * (y[1] - y[0]));
        let (ix, iy) = (self.x.integral(x[0], x[1]), self.y.integral(y[0], y[1]));
        let exact =
            [ix * iy, (self.x.value(x[1]) - self.x.value(x[0])) * iy, ix * (self.y.value(y[1]) - self.y.value(y[0]))];
        let g = self.gradient(c);
        let mid = [self.value(c) * area, g[0] * area, g[1] * area];
        ([0, 1, 2].map(|k| (mid[k] - exact[k]).abs()), exact.map(f64::abs))
    }

    fn profile(&self, axis: usize) -> &Profile {
        if axis == 0 {
            &self.x
        } else {
            &self.y
        }
    }
}

/// Declared support and trace class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Class {
    /// Compactly supported inside subdomain `i`.
    Interior(usize),
    /// Defined on the whole box; vector fields additionally satisfy `phi . n = 0` on walls.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Scalar(Scalar),
    Vector([Scalar; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub name: String,
    pub shape: Shape,
    pub time: TimeProfile,
    pub class: Class,
}

impl TestFunction {
    pub fn scalar(name: impl Into<String>, s: Scalar, class: Class) -> Self {
        Self { name: name.into(), shape: Shape::Scalar(s), time: TimeProfile::Constant, class }
    }

    pub fn vector(name: impl Into<String>, v: [Scalar; 2], class: Class) -> Self {
        Self { name: name.into(), shape: Shape::Vector(v), time: TimeProfile::Constant, class }
    }

    pub fn with_time(mut self, time: TimeProfile) -> Self {
        self.time = time;
        self
    }

    pub fn as_scalar(&self) -> Option<&Scalar> {
        match &self.shape {
            Shape::Scalar(s) => Some(s),
            Shape::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[Scalar; 2]> {
        match &self.shape {
            Shape::Vector(v) => Some(v),
            Shape::Scalar(_) => None,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match &self.shape {
            Shape::Scalar(s) => s.x.is_nonnegative() && s.y.is_nonnegative(),
            Shape::Vector(_) => false,
        }
    }

    /// Cell-center quadrature error of `phi` and of its gradient on `grid`,
    /// relative to their absolute integrals; the larger of the two.
    pub fn quadrature_defect(&self, grid: &BoxGrid) -> f64 {
        let parts: Vec<&Scalar> = match &self.shape {
            Shape::Scalar(s) => vec![s],
            Shape::Vector(v) => vec![&v[0], &v[1]],
        };
        let (h, o) = ([grid.h(0), grid.h(1)], grid.origin);
        let (mut err, mut size) = ([0.0; 2], [0.0; 2]);
        for s in parts.iter().filter(|s| !s.is_zero()) {
            for j in 0..grid.cells[1] {
                let y = [o[1] + j as f64 * h[1], o[1] + (j + 1) as f64 * h[1]];
                for i in 0..grid.cells[0] {
                    let x = [o[0] + i as f64 * h[0], o[0] + (i + 1) as f64 * h[0]];
                    let (e, a) = s.cell_defects(x, y);
                    err[0] += e[0];
                    size[0] += a[0];
                    err[1] += e[1] + e[2];
                    size[1] += a[1] + a[2];
                }
            }
        }
        let rel = |k: usize| if size[k] > 0.0 { err[k] / size[k] } else { 0.0 };
        rel(0).max(rel(1))
    }

    /// Check the declared class on `grid`, whose subdomains are `boxes`.
    pub fn validate(&self, grid: &BoxGrid, boxes: &[SubBox]) -> Result<()> {
        let parts: Vec<&Scalar> = match &self.shape {
            Shape::Scalar(s) => vec![s],
            Shape::Vector(v) => vec![&v[0], &v[1]],
        };
        let fail = |why: &str| Err(Error::TestClass(format!("{}: {why}", self.name)));
        match self.class {
            Class::Interior(i) => {
                let Some(b) = boxes.get(i) else { return fail("unknown subdomain") };
                for s in parts.iter().filter(|s| !s.is_zero()) {
                    for d in 0..2 {
                        match s.profile(d).support() {
                            Some((lo, hi)) if lo >= b.lo[d] - 1e-12 && hi <= b.hi[d] + 1e-12 => {}
                            _ => return fail("support leaves its subdomain"),
                        }
                    }
                }
            }
            Class::Global => {
                for d in 0..2 {
                    let (lo, hi) = (grid.origin[d], grid.origin[d] + grid.lengths[d]);
                    for s in &parts {
                        let p = s.profile(d);
                        if grid.boundary[d] == Boundary::Periodic {
                            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
                            if !close(p.value(lo), p.value(hi)) || !close(p.derivative(lo), p.derivative(hi)) {
                                return fail("not periodic along a periodic axis");
                            }
                        }
                    }
                    if let Shape::Vector(v) = &self.shape {
                        if grid.boundary[d] == Boundary::Wall {
                            let p = v[d].profile(d);
                            if p.value(lo).abs() > 1e-12 || p.value(hi).abs() > 1e-12 {
                                return fail("normal component does not vanish on a wall");
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn profile_integrals_match_fine_sums() {
        let profiles = [
            Profile::One,
            Profile::Bump { center: 0.4, radius: 0.3 },
            Profile::Sin { k: 3, lo: 0.1, len: 0.9 },
            Profile::Cos { k: 2, lo: 0.0, len: 1.0 },
        ];
        for p in profiles {
            let (a, b, n) = (0.05, 0.83, 200_000);
            let h = (b - a) / n as f64;
            let sum: f64 = (0..n).map(|i| p.value(a + (i as f64 + 0.5) * h) * h).sum();
            assert!((p.integral(a, b) - sum).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn quadrature_defect_is_second_order_for_an_off_grid_bump() {
        let bump = Profile::Bump { center: 37.0 / 96.0, radius: 25.0 / 96.0 };
        let tf = TestFunction::scalar("b", Scalar { x: bump, y: Profile::One }, Class::Global);
        let q: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| tf.quadrature_defect(&BoxGrid::unit_square(n, [Boundary::Periodic; 2]).unwrap()))
            .collect();
        assert!(q[0] > 0.0 && q[0] < 0.1);
        for w in q.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..2.2).contains(&order), "{q:?}");
        }
        let one = TestFunction::scalar("one", Scalar::one(), Class::Global);
        assert!(one.quadrature_defect(&BoxGrid::unit_square(8, [Boundary::Periodic; 2]).unwrap()) < 1e-15);
    }

    #[test]
    fn bump_is_c1_at_the_edge() {
        let b = Profile::Bump { center: 0.5, radius: 0.25 };
        assert_eq!(b.value(0.25), 0.0);
        assert_eq!(b.derivative(0.25), 0.0);
        assert_eq!(b.value(0.5), 1.0);
    }

    #[test]
    fn taper_vanishes_with_slope() {
        let t = TimeProfile::Taper { horizon: 2.0 };
        assert_eq!(t.value(0.0), 1.0);
        assert_eq!(t.value(2.0), 0.0);
        assert_eq!(t.derivative(2.0), 0.0);
        assert_eq!(t.value(3.0), 0.0);
    }

    #[test]
    fn validation_catches_bad_classes() {
        let g = BoxGrid::unit_square(8, [Boundary::Wall, Boundary::Wall]).unwrap();
        let boxes = vec![SubBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }];
        let c = Profile::Cos { k: 1, lo: 0.0, len: 1.0 };
        let s = Profile::Sin { k: 1, lo: 0.0, len: 1.0 };
        let good = TestFunction::vector("t", [Scalar { x: s, y: c }, Scalar { x: c, y: s }], Class::Global);
        assert!(good.validate(&g, &boxes).is_ok());
        let bad = TestFunction::vector("t", [Scalar { x: c, y: c }, Scalar { x: c, y: s }], Class::Global);
        assert!(bad.validate(&g, &boxes).is_err());
        let wide = Profile::Bump { center: 0.5, radius: 0.6 };
        let leak = TestFunction::scalar("b", Scalar { x: wide, y: wide }, Class::Interior(0));
        assert!(leak.validate(&g, &boxes).is_err());
        let per = BoxGrid::unit_square(8, [Boundary::Periodic, Boundary::Wall]).unwrap();
        let odd = TestFunction::scalar("o", Scalar { x: s, y: Profile::One }, Class::Global);
        assert!(odd.validate(&per, &boxes).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_match_differences(x in 0.01f64..0.99, k in 1u32..4) {
            let ps = [
                Profile::Bump { center: 0.5, radius: 0.4 },
                Profile::Sin { k, lo: 0.0, len: 1.0 },
                Profile::Cos { k, lo: 0.0, len: 1.0 },
            ];
            let h = 1e-6;
            for p in ps {
                let fd = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
                prop_assert!((fd - p.derivative(x)).abs() < 1e-5 * (1.0 + p.derivative(x).abs()));
            }
        }

        #[test]
        fn bumps_are_nonnegative(x in -1.0f64..2.0, c in 0.2f64..0.8, r in 0.05f64..0.2) {
            let b = Profile::Bump { center: c, radius: r };
            prop_assert!(b.value(x) >= 0.0);
        }
    }
}
