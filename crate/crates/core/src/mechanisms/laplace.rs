use crate::envelope::OutputRange;
use crate::error::{positive, Error, Result};

use super::{Mechanism, UniformSource};

/// Inverse CDF of the exponential law with rate `eps / delta` truncated to
/// `[0, delta]`, evaluated at `u`.
pub fn sample_trunc_expo(delta: f64, eps: f64, u: f64) -> Result<f64> {
    positive("delta", delta)?;
    positive("eps", eps)?;
    Ok(trunc_expo_quantile(delta, eps, u))
}

/// `-(delta/eps) * ln(1 - u (1 - e^{-eps}))`, computed with `ln_1p`/`exp_m1`.
pub(crate) fn trunc_expo_quantile(delta: f64, eps: f64, u: f64) -> f64 {
    let z = -(delta / eps) * (u * (-eps).exp_m1()).ln_1p();
    z.clamp(0.0, delta)
}

/// Share of a truncated exponential's mass on `[0, t * delta]`.
pub(crate) fn trunc_expo_cdf(eps: f64, t: f64) -> f64 {
    ((-t * eps).exp_m1() / (-eps).exp_m1()).clamp(0.0, 1.0)
}

/// Laplace noise with scale `2 delta / eps` around `center`, restricted to the
/// output range: the exponential mechanism with score `-|y - center| / delta`.
#[derive(Debug, Clone)]
pub struct TruncatedLaplace {
    center: f64,
    delta: f64,
    eps: f64,
    range: OutputRange,
    scale: f64,
    mass_left: f64,
    mass_right: f64,
}

impl TruncatedLaplace {
    pub fn new(center: f64, delta: f64, eps: f64, range: OutputRange) -> Result<Self> {
        positive("delta", delta)?;
        positive("eps", eps)?;
        if !range.contains(center) {
            return Err(Error::OutOfRange {
                value: center,
                lo: range.lo(),
                hi: range.hi(),
            });
        }
        let scale = 2.0 * delta / eps;
        let mass = |d: f64| -scale * (-d / scale).exp_m1();
        Ok(Self {
            center,
            delta,
            eps,
            range,
            scale,
            mass_left: mass(center - range.lo()),
            mass_right: mass(range.hi() - center),
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn total(&self) -> f64 {
        self.mass_left + self.mass_right
    }

    /// Unnormalized mass between the center and distance `d` on one side.
    fn side_mass(&self, d: f64) -> f64 {
        -self.scale * (-d / self.scale).exp_m1()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let t = u * self.total();
        let y = if t < self.mass_left {
            let rest = self.mass_left - t;
            self.center + self.scale * (-rest / self.scale).ln_1p()
        } else {
            let t = t - self.mass_left;
            self.center - self.scale * (-t / self.scale).ln_1p()
        };
        y.clamp(self.range.lo(), self.range.hi())
    }
}

impl Mechanism for TruncatedLaplace {
    fn name(&self) -> &'static str {
        "truncated_laplace"
    }

    fn epsilon(&self) -> f64 {
        self.eps
    }

    fn center(&self) -> f64 {
        self.center
    }

    fn support(&self) -> (f64, f64) {
        (self.range.lo(), self.range.hi())
    }

    fn log_density(&self, y: f64) -> f64 {
        if !self.range.contains(y) {
            return f64::NEG_INFINITY;
        }
        -(y - self.center).abs() / self.scale - self.total().ln()
    }

    fn cdf(&self, y: f64) -> f64 {
        if y <= self.range.lo() {
            return 0.0;
        }
        if y >= self.range.hi() {
            return 1.0;
        }
        let below = if y < self.center {
            self.mass_left - self.side_mass(self.center - y)
        } else {
            self.mass_left + self.side_mass(y - self.center)
        };
        (below / self.total()).clamp(0.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.range.lo(), self.center, self.range.hi()]
    }

    fn sample(&self, src: &mut dyn UniformSource) -> f64 {
        self.quantile(src.next_uniform())
    }
}

/// One draw of truncated Laplace noise around `center`.
pub fn sample_trunc_laplace(
    center: f64,
    delta: f64,
    eps: f64,
    range: OutputRange,
    stream: &mut dyn UniformSource,
) -> Result<f64> {
    Ok(TruncatedLaplace::new(center, delta, eps, range)?.sample(stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::ScriptedUniforms;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trunc_expo_examples() {
        assert_abs_diff_eq!(sample_trunc_expo(1.0, 1.0, 0.5).unwrap(), 0.379885, epsilon = 1e-6);
        assert_eq!(sample_trunc_expo(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sample_trunc_expo(2.0, 1.0, 0.5).unwrap(), 0.759770, epsilon = 1e-6);
        assert!(sample_trunc_expo(0.0, 1.0, 0.5).is_err());
        assert!(sample_trunc_expo(1.0, -1.0, 0.5).is_err());
        // u -> 1 approaches but stays inside the interval
        let z = sample_trunc_expo(1.0, 1.0, 1.0 - f64::EPSILON).unwrap();
        assert!(z < 1.0 && z > 0.999);
    }

    #[test]
    fn trunc_expo_cdf_inverts_quantile() {
        for eps in [0.1, 1.0, 5.0] {
            for u in [0.0, 0.1, 0.37, 0.9] {
                let z = trunc_expo_quantile(3.0, eps, u);
                assert_abs_diff_eq!(trunc_expo_cdf(eps, z / 3.0), u, epsilon = 1e-12);
            }
        }
    }

    /// Bisection on the numerically integrated CDF; shares no code with the
    /// closed-form quantile.
    fn quadrature_quantile(c: f64, b: f64, lo: f64, hi: f64, u: f64) -> f64 {
        let dens = |y: f64| (-(y - c).abs() / b).exp();
        let integrate = |a: f64, z: f64| {
            // composite Simpson with the kink at c as a node
            let simpson = |a: f64, z: f64| {
                let n = 2000;
                let h = (z - a) / n as f64;
                let mut s = dens(a) + dens(z);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += w * dens(a + i as f64 * h);
                }
                s * h / 3.0
            };
            if a < c && c < z {
                simpson(a, c) + simpson(c, z)
            } else {
                simpson(a, z)
            }
        };
        let total = integrate(lo, hi);
        let (mut a, mut z) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + z);
            if integrate(lo, m) / total < u {
                a = m;
            } else {
                z = m;
            }
        }
        0.5 * (a + z)
    }

    #[test]
    fn trunc_laplace_quantiles() {
        let range = OutputRange::new(0.0, 10.0).unwrap();
        let t = TruncatedLaplace::new(5.0, 1.0, 2.0, range).unwrap();
        assert_abs_diff_eq!(t.quantile(0.5), 5.0, epsilon = 1e-12);
        let oracle = quadrature_quantile(5.0, 1.0, 0.0, 10.0, 0.75);
        assert_abs_diff_eq!(oracle, 5.686431832, epsilon = 1e-9);
        assert_abs_diff_eq!(t.quantile(0.75), oracle, epsilon = 1e-9);

        let asym = TruncatedLaplace::new(2.0, 1.0, 1.0, range).unwrap();
        for u in [0.05, 0.3, 0.8] {
            let oracle = quadrature_quantile(2.0, 2.0, 0.0, 10.0, u);
            assert_abs_diff_eq!(asym.quantile(u), oracle, epsilon = 1e-9);
            assert_abs_diff_eq!(asym.cdf(asym.quantile(u)), u, epsilon = 1e-12);
        }

        let mut s = ScriptedUniforms::new(vec![0.5]);
        let y = sample_trunc_laplace(5.0, 1.0, 2.0, range, &mut s).unwrap();
        assert_abs_diff_eq!(y, 5.0, epsilon = 1e-12);
        assert!(TruncatedLaplace::new(11.0, 1.0, 2.0, range).is_err());
    }
}
