//! Dormand–Prince 5(4) with step-size control and 4th-order dense output.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub s0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    /// Interpolated state at independent variable `s` (within the step).
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let th = (s - self.s0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

/// Outcome of a step attempt sequence.
pub enum StepResult {
    Accepted,
    Underflow,
}

/// Adaptive DP5 stepper for `y' = f(s, y)`.
pub struct Dopri5<F: FnMut(f64, &[f64], &mut [f64])> {
    f: F,
    pub s: f64,
    pub y: Vec<f64>,
    k1: Vec<f64>,
    pub h: f64,
    rtol: f64,
    atol: f64,
    pub last_dense: Option<DenseStep>,
    pub n_eval: usize,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Dopri5<F> {
    pub fn new(mut f: F, s0: f64, y0: Vec<f64>, direction: f64, rtol: f64, atol: f64) -> Self {
        let n = y0.len();
        let mut k1 = vec![0.0; n];
        f(s0, &y0, &mut k1);
        let mut me = Self {
            f,
            s: s0,
            y: y0,
            k1,
            h: 0.0,
            rtol,
            atol,
            last_dense: None,
            n_eval: 1,
        };
        me.h = direction.signum() * me.initial_step();
        me
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.y.len();
        let d0 = (self.y.iter().map(|v| (v / self.scale(*v, *v)).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (self
            .k1
            .iter()
            .zip(&self.y)
            .map(|(k, v)| (k / self.scale(*v, *v)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<f64> = self.y.iter().zip(&self.k1).map(|(y, k)| y + h0 * k).collect();
        let mut k2 = vec![0.0; n];
        (self.f)(self.s + h0, &y1, &mut k2);
        self.n_eval += 1;
        let d2 = (k2
            .iter()
            .zip(&self.k1)
            .zip(&self.y)
            .map(|((a, b), v)| ((a - b) / self.scale(*v, *v)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Takes one accepted step, never stepping beyond `s_stop` (if given).
    pub fn step(&mut self, s_stop: Option<f64>) -> StepResult {
        let n = self.y.len();
        let dir = self.h.signum();
        let mut facmax = 5.0;
        let mut ytmp = vec![0.0; n];
        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        loop {
            let mut h = self.h;
            let mut clipped = false;
            if let Some(stop) = s_stop {
                if (self.s + h - stop) * dir > 0.0 {
                    h = stop - self.s;
                    clipped = true;
                }
            }
            if h.abs() <= 1e-15 * self.s.abs().max(1.0) {
                if clipped {
                    // already at the stop point
                    return StepResult::Accepted;
                }
                return StepResult::Underflow;
            }
            let s = self.s;
            let y = &self.y;
            let k1 = &self.k1;
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            (self.f)(s + C2 * h, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            (self.f)(s + C3 * h, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            (self.f)(s + C4 * h, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            (self.f)(s + C5 * h, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            (self.f)(s + h, &ytmp, &mut k6);
            let mut ynew = vec![0.0; n];
            for i in 0..n {
                ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            (self.f)(s + h, &ynew, &mut k7);
            self.n_eval += 6;

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.scale(y[i], ynew[i]);
                err += (e / sc).powi(2);
                finite &= ynew[i].is_finite();
            }
            err = (err / n as f64).sqrt();
            if !finite || !err.is_finite() {
                self.h = 0.2 * h;
                facmax = 1.0;
                continue;
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, facmax);
            if err <= 1.0 {
                let r2: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
                let r3: Vec<f64> = (0..n).map(|i| h * k1[i] - r2[i]).collect();
                let r4: Vec<f64> = (0..n).map(|i| r2[i] - h * k7[i] - r3[i]).collect();
                let r5: Vec<f64> = (0..n)
                    .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                    .collect();
                self.last_dense = Some(DenseStep {
                    s0: s,
                    h,
                    rcont: [y.clone(), r2, r3, r4, r5],
                });
                self.s = if clipped { s_stop.unwrap() } else { s + h };
                self.y = ynew;
                std::mem::swap(&mut self.k1, &mut k7);
                // keep the unclipped step proposal after landing on a stop point
                if !clipped {
                    self.h = h * fac;
                } else {
                    self.h = self.h.abs().max(h.abs() * fac) * dir;
                }
                return StepResult::Accepted;
            }
            self.h = h * fac.min(1.0);
            facmax = 1.0;
        }
    }
}
