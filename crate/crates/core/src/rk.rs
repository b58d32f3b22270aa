//! Fixed-step explicit Runge–Kutta schemes on fixed-size state arrays.

use serde::{Deserialize, Serialize};

/// Explicit one-step scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order scheme.
    Rk4,
    /// Butcher's seven-stage sixth-order scheme.
    #[default]
    Rk6,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Rk4 => 4,
            Method::Rk6 => 6,
        }
    }

    fn tableau(self) -> &'static Tableau {
        match self {
            Method::Rk4 => &RK4,
            Method::Rk6 => &RK6,
        }
    }
}

struct Tableau {
    a: &'static [&'static [f64]],
    b: &'static [f64],
    c: &'static [f64],
}

static RK4: Tableau = Tableau {
    a: &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]],
    b: &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    c: &[0.0, 0.5, 0.5, 1.0],
};

static RK6: Tableau = Tableau {
    a: &[
        &[],
        &[1.0 / 3.0],
        &[0.0, 2.0 / 3.0],
        &[1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0],
        &[-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0],
        &[0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 1.0 / 2.0],
        &[9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0],
    ],
    b: &[
        11.0 / 120.0,
        0.0,
        27.0 / 40.0,
        27.0 / 40.0,
        -4.0 / 15.0,
        -4.0 / 15.0,
        11.0 / 120.0,
    ],
    c: &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 2.0, 1.0 / 2.0, 1.0],
};

/// An autonomous-or-not ODE `y' = f(t, y)` on `R^N`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

/// One step of size `h` from `(t, y)`.
pub fn step<const N: usize, S: OdeSystem<N> + ?Sized>(sys: &S, method: Method, t: f64, y: &[f64; N], h: f64) -> [f64; N] {
    let tab = method.tableau();
    let stages = tab.b.len();
    let mut k = [[0.0; N]; 7];
    for s in 0..stages {
        let mut ys = *y;
        for (j, &a) in tab.a[s].iter().enumerate() {
            if a != 0.0 {
                for (yi, kj) in ys.iter_mut().zip(k[j].iter()) {
                    *yi += h * a * kj;
                }
            }
        }
        k[s] = sys.rhs(t + tab.c[s] * h, &ys);
    }
    let mut out = *y;
    for (s, &b) in tab.b.iter().enumerate() {
        if b != 0.0 {
            for (o, ks) in out.iter_mut().zip(k[s].iter()) {
                *o += h * b * ks;
            }
        }
    }
    out
}
