//! Oscillatory time integrals `∫ F(s) trig(φ(s)/ε) ds` with `φ' = β ≥ b_- > 0`
//! and the integration-by-parts (non-stationary phase) bounds on them.
//!
//! `F` and `β` are sampled on a grid that resolves the fast phase. On every
//! grid interval both are replaced by the local cubic through four
//! neighbouring samples; the phase is the exact antiderivative of the `β`
//! cubic and the oscillating product is integrated by 8-point Gauss–Legendre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples per fast period `2π ε / max β`.
pub const MIN_POINTS_PER_PERIOD: usize = 16;

/// Slack allowed on the bound check for quadrature round-off.
pub const NSP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    fn eval(self, x: f64) -> f64 {
        match self {
            Trig::Cos => x.cos(),
            Trig::Sin => x.sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillandSample {
    pub times: Vec<f64>,
    pub f_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub b_min: f64,
    /// `sup |∂_s (F/β)|` over the sample.
    pub dfbeta_sup: f64,
}

impl OscillandSample {
    /// Builds a sample; `dfbeta_sup = None` estimates the derivative bound by
    /// differentiating the local cubics at every node.
    pub fn new(
        times: Vec<f64>,
        f_values: Vec<f64>,
        beta_values: Vec<f64>,
        b_min: f64,
        dfbeta_sup: Option<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n < 4 || f_values.len() != n || beta_values.len() != n {
            return Err(Error::Config(format!(
                "oscillatory sample needs >= 4 aligned points (times {n}, F {}, beta {})",
                f_values.len(),
                beta_values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sample times must be strictly increasing".into()));
        }
        if !(b_min > 0.0) || beta_values.iter().any(|&b| !(b >= b_min)) {
            return Err(Error::Config(format!("beta must stay above b_min = {b_min} > 0")));
        }
        let dfbeta_sup = match dfbeta_sup {
            Some(v) => v,
            None => {
                let ratio: Vec<f64> = f_values.iter().zip(&beta_values).map(|(f, b)| f / b).collect();
                (0..n)
                    .map(|i| {
                        let s = i.saturating_sub(1).min(n - 4);
                        let c = Cubic::through(&times[s..s + 4], &ratio[s..s + 4], times[i]);
                        c.derivative(0.0).abs()
                    })
                    .fold(0.0, f64::max)
            }
        };
        Ok(OscillandSample {
            times,
            f_values,
            beta_values,
            b_min,
            dfbeta_sup,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.times[self.len() - 1] - self.times[0]
    }

    fn check_resolution(&self, epsilon: f64) -> Result<()> {
        let beta_max = self.beta_values.iter().copied().fold(0.0, f64::max);
        let h_max = self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let ppp = 2.0 * std::f64::consts::PI * epsilon / (beta_max * h_max);
        if ppp < MIN_POINTS_PER_PERIOD as f64 {
            return Err(Error::UnderResolved {
                points_per_period: ppp,
                required: MIN_POINTS_PER_PERIOD,
            });
        }
        Ok(())
    }
}

/// Cubic in the local variable `z = τ - origin`, monomial coefficients.
#[derive(Clone, Copy, Debug)]
struct Cubic([f64; 4]);

impl Cubic {
    /// Interpolant through `(nodes[k], values[k])`, expanded around `origin`.
    fn through(nodes: &[f64], values: &[f64], origin: f64) -> Cubic {
        let z: [f64; 4] = std::array::from_fn(|k| nodes[k] - origin);
        // Newton divided differences
        let mut d: [f64; 4] = std::array::from_fn(|k| values[k]);
        for level in 1..4 {
            for k in (level..4).rev() {
                d[k] = (d[k] - d[k - 1]) / (z[k] - z[k - level]);
            }
        }
        // Horner expansion of the Newton form into monomials
        let mut c = [d[3], 0.0, 0.0, 0.0];
        for k in (0..3).rev() {
            // c <- c * (z - z[k]) + d[k]
            let mut next = [0.0; 4];
            for p in 0..3 {
                next[p + 1] += c[p];
                next[p] -= c[p] * z[k];
            }
            next[0] += d[k];
            c = next;
        }
        Cubic(c)
    }

    fn eval(&self, z: f64) -> f64 {
        let c = &self.0;
        ((c[3] * z + c[2]) * z + c[1]) * z + c[0]
    }

    fn derivative(&self, z: f64) -> f64 {
        let c = &self.0;
        (3.0 * c[3] * z + 2.0 * c[2]) * z + c[1]
    }

    fn antiderivative(&self, z: f64) -> f64 {
        let c = &self.0;
        (((c[3] / 4.0 * z + c[2] / 3.0) * z + c[1] / 2.0) * z + c[0]) * z
    }
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Running values `∫_{t_0}^{t_i} F trig(φ/ε)` at every sample time.
pub fn osc_integral_cumulative(sample: &OscillandSample, epsilon: f64, kind: Trig) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    sample.check_resolution(epsilon)?;
    let n = sample.len();
    let t = &sample.times;
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    let mut phi = 0.0;
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let s = i.saturating_sub(1).min(n - 4);
        let f = Cubic::through(&t[s..s + 4], &sample.f_values[s..s + 4], t[i]);
        let beta = Cubic::through(&t[s..s + 4], &sample.beta_values[s..s + 4], t[i]);
        let h = t[i + 1] - t[i];
        let mut part = 0.0;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            let z = 0.5 * h * (1.0 + x);
            part += w * f.eval(z) * kind.eval((phi + beta.antiderivative(z)) / epsilon);
        }
        acc += 0.5 * h * part;
        phi += beta.antiderivative(h);
        out.push(acc);
    }
    Ok(out)
}

/// `∫_{t_0}^{t_end} F(s) trig(φ(s)/ε) ds`.
pub fn osc_integral(sample: &OscillandSample, epsilon: f64, kind: Trig) -> Result<f64> {
    Ok(*osc_integral_cumulative(sample, epsilon, kind)?.last().unwrap())
}

/// Integration-by-parts bound
/// `ε (boundary / b_- + t sup|∂_s(F/β)|)`, where the boundary term is
/// `|F(t)|` for cos and `|F(t)| + |F(0)|` for sin.
pub fn nsp_bound(sample: &OscillandSample, epsilon: f64, kind: Trig) -> f64 {
    let f_end = sample.f_values[sample.len() - 1].abs();
    let boundary = match kind {
        Trig::Cos => f_end,
        Trig::Sin => f_end + sample.f_values[0].abs(),
    };
    epsilon * (boundary / sample.b_min + sample.duration() * sample.dfbeta_sup)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NspMargins {
    pub integral_cos: f64,
    pub integral_sin: f64,
    pub bound_cos: f64,
    pub bound_sin: f64,
    /// `bound - |integral|`.
    pub margin_cos: f64,
    pub margin_sin: f64,
}

impl NspMargins {
    pub fn passes(&self) -> bool {
        self.margin_cos >= -NSP_TOLERANCE && self.margin_sin >= -NSP_TOLERANCE
    }

    pub fn min_margin(&self) -> f64 {
        self.margin_cos.min(self.margin_sin)
    }
}

pub fn verify_nsp(sample: &OscillandSample, epsilon: f64) -> Result<NspMargins> {
    let integral_cos = osc_integral(sample, epsilon, Trig::Cos)?;
    let integral_sin = osc_integral(sample, epsilon, Trig::Sin)?;
    let bound_cos = nsp_bound(sample, epsilon, Trig::Cos);
    let bound_sin = nsp_bound(sample, epsilon, Trig::Sin);
    Ok(NspMargins {
        integral_cos,
        integral_sin,
        bound_cos,
        bound_sin,
        margin_cos: bound_cos - integral_cos.abs(),
        margin_sin: bound_sin - integral_sin.abs(),
    })
}

/// Uniform grid on `[0, t]` with at least `ppp` points per fast period.
pub fn resolving_grid(t: f64, epsilon: f64, beta_max: f64, ppp: usize) -> Vec<f64> {
    let period = 2.0 * std::f64::consts::PI * epsilon / beta_max;
    let n = ((t / period) * ppp as f64).ceil().max(3.0) as usize;
    (0..=n).map(|i| t * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_sample(b0: f64, t: f64, eps: f64) -> OscillandSample {
        let times = resolving_grid(t, eps, b0, 32);
        let n = times.len();
        OscillandSample::new(times, vec![1.0; n], vec![b0; n], b0, Some(0.0)).unwrap()
    }

    #[test]
    fn constant_integrand_closed_forms() {
        let (b0, t, eps) = (2.0, 1.0, 0.01);
        let s = constant_sample(b0, t, eps);
        let c = osc_integral(&s, eps, Trig::Cos).unwrap();
        let si = osc_integral(&s, eps, Trig::Sin).unwrap();
        assert!((c - eps / b0 * (b0 * t / eps).sin()).abs() < 1e-13);
        assert!((si - eps / b0 * (1.0 - (b0 * t / eps).cos())).abs() < 1e-13);
    }

    #[test]
    fn linear_integrand_closed_form() {
        let (t, eps) = (1.0, 0.01);
        let times = resolving_grid(t, eps, 1.0, 32);
        let n = times.len();
        let f = times.clone();
        let s = OscillandSample::new(times, f, vec![1.0; n], 1.0, None).unwrap();
        let got = osc_integral(&s, eps, Trig::Cos).unwrap();
        let exact = eps * t * (t / eps).sin() + eps * eps * ((t / eps).cos() - 1.0);
        assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn bounds_for_constant_integrand() {
        let (b0, eps) = (2.0, 0.05);
        let s = constant_sample(b0, 1.0, eps);
        assert!((nsp_bound(&s, eps, Trig::Cos) - eps / b0).abs() < 1e-15);
        assert!((nsp_bound(&s, eps, Trig::Sin) - 2.0 * eps / b0).abs() < 1e-15);
        let m = verify_nsp(&s, eps).unwrap();
        let expect = eps / b0 - eps / b0 * (b0 / eps).sin().abs();
        assert!((m.margin_cos - expect).abs() < 1e-12);
        assert!(m.passes());
    }

    #[test]
    fn zero_integrand_has_zero_bound() {
        let times = resolving_grid(1.0, 0.1, 2.0, 32);
        let n = times.len();
        let s = OscillandSample::new(times, vec![0.0; n], vec![2.0; n], 2.0, None).unwrap();
        assert_eq!(nsp_bound(&s, 0.1, Trig::Cos), 0.0);
        assert_eq!(nsp_bound(&s, 0.1, Trig::Sin), 0.0);
    }

    #[test]
    fn under_resolved_grid_is_rejected() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let s = OscillandSample::new(times, vec![1.0; 11], vec![2.0; 11], 2.0, None).unwrap();
        assert!(matches!(osc_integral(&s, 0.01, Trig::Cos), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn estimated_derivative_bound() {
        // F/β = s on a uniform grid: derivative exactly 1
        let times: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let f: Vec<f64> = times.iter().map(|s| 2.0 * s).collect();
        let s = OscillandSample::new(times, f, vec![2.0; 51], 2.0, None).unwrap();
        assert!((s.dfbeta_sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_reproduces_polynomials() {
        let nodes = [0.1, 0.35, 0.5, 0.9];
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 3.0 * x * x * x;
        let vals: Vec<f64> = nodes.iter().map(|&x| p(x)).collect();
        let c = Cubic::through(&nodes, &vals, 0.35);
        for x in [0.0, 0.2, 0.7, 1.3] {
            assert!((c.eval(x - 0.35) - p(x)).abs() < 1e-12);
        }
    }
}
