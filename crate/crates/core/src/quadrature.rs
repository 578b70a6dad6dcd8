//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.
//!
//! All components share the same subdivision: the interval with the largest
//! error estimate (maximum over components) is bisected until the summed
//! error estimate drops below tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIntegral {
    pub values: Vec<f64>,
    /// Summed per-interval error estimate (max over components).
    pub abs_error: f64,
    pub intervals: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    values: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            // deterministic order among equal errors: leftmost first
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(center, buf);
    for k in 0..dim {
        kronrod[k] = WGK[7] * buf[k];
        gauss[k] = WG[3] * buf[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for x in [center - dx, center + dx] {
            f(x, buf);
            for k in 0..dim {
                kronrod[k] += WGK[j] * buf[k];
                if j % 2 == 1 {
                    gauss[k] += WG[j / 2] * buf[k];
                }
            }
        }
    }
    let mut error: f64 = 0.0;
    for k in 0..dim {
        kronrod[k] *= half;
        gauss[k] *= half;
        error = error.max((kronrod[k] - gauss[k]).abs());
    }
    Panel {
        a,
        b,
        values: kronrod,
        error,
    }
}

/// Integrate the `dim`-component integrand `f(x, out)` over
/// `[breakpoints[0], breakpoints[last]]`, starting from the partition given
/// by the (sorted) breakpoints.
pub fn integrate_vector<F>(
    mut f: F,
    breakpoints: &[f64],
    dim: usize,
    settings: &QuadratureSettings,
) -> VectorIntegral
where
    F: FnMut(f64, &mut [f64]),
{
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1], dim, &mut buf));
        }
    }

    let totals = |heap: &BinaryHeap<Panel>| {
        let mut values = vec![0.0; dim];
        let mut err = 0.0;
        for p in heap.iter() {
            for (v, pv) in values.iter_mut().zip(&p.values) {
                *v += pv;
            }
            err += p.error;
        }
        (values, err)
    };

    loop {
        let (values, err) = totals(&heap);
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = settings.abs_tol.max(settings.rel_tol * scale);
        if err <= tol {
            return VectorIntegral {
                values,
                abs_error: err,
                intervals: heap.len(),
                converged: true,
            };
        }
        let worst = match heap.peek() {
            Some(p) => p,
            None => {
                return VectorIntegral {
                    values,
                    abs_error: err,
                    intervals: 0,
                    converged: true,
                }
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        if heap.len() >= settings.max_intervals || mid <= worst.a || mid >= worst.b {
            return VectorIntegral {
                values,
                abs_error: err,
                intervals: heap.len(),
                converged: false,
            };
        }
        let worst = heap.pop().expect("peeked");
        heap.push(gk15(&mut f, worst.a, mid, dim, &mut buf));
        heap.push(gk15(&mut f, mid, worst.b, dim, &mut buf));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact_on_one_panel() {
        // GK15 integrates degree <= 22 polynomials exactly
        let r = integrate_vector(
            |x, out| {
                out[0] = x.powi(10);
                out[1] = 1.0;
            },
            &[0.0, 2.0],
            2,
            &QuadratureSettings::default(),
        );
        assert!(r.converged);
        assert!((r.values[0] - 2f64.powi(11) / 11.0).abs() < 1e-10);
        assert!((r.values[1] - 2.0).abs() < 1e-14);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn narrow_peak_needs_refinement() {
        let s = 1e-3;
        let r = integrate_vector(
            |x, out| out[0] = (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp(),
            &[0.0, 1.0],
            1,
            &QuadratureSettings::default(),
        );
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!(r.converged);
        assert!((r.values[0] - exact).abs() < 1e-10, "{:?}", r);
        assert!(r.intervals > 1);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate_vector(
            |x, out| out[0] = if x < 0.123456789 { 0.0 } else { 1.0 },
            &[0.0, 1.0],
            1,
            &QuadratureSettings {
                abs_tol: 1e-14,
                rel_tol: 0.0,
                max_intervals: 8,
            },
        );
        assert!(!r.converged);
    }
}
