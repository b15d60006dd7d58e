//! Box-constrained limited-memory BFGS with Armijo backtracking.
//!
//! Only the decrease of the objective is guaranteed: every accepted step
//! lowers it, so the result is never worse than the starting point.

pub(crate) struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }
}

pub(crate) struct Options {
    pub max_iters: usize,
    pub gtol: f64,
    pub ftol: f64,
    pub memory: usize,
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns `None` where the objective is undefined
/// (treated as +inf). Returns `None` if the start point itself is undefined.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &Options) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let initial_value = fx;
    let mut mem_s: Vec<Vec<f64>> = Vec::new();
    let mut mem_y: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;

    // Variables pinned at a bound with the gradient pushing outward.
    let pinned = |x: &[f64], g: &[f64]| -> Vec<bool> {
        (0..n)
            .map(|i| (x[i] <= bounds.lo[i] && g[i] > 0.0) || (x[i] >= bounds.hi[i] && g[i] < 0.0))
            .collect()
    };

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let fixed = pinned(&x, &g);
        let pg: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { g[i] }).collect();
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.gtol {
            break;
        }

        // Two-loop recursion on the free variables.
        let mut q = pg.clone();
        let k = mem_s.len();
        let mut alphas = vec![0.0; k];
        for j in (0..k).rev() {
            let rho = 1.0 / dot(&mem_y[j], &mem_s[j]);
            alphas[j] = rho * dot(&mem_s[j], &q);
            for (qi, yi) in q.iter_mut().zip(&mem_y[j]) {
                *qi -= alphas[j] * yi;
            }
        }
        if k > 0 {
            let gamma = dot(&mem_s[k - 1], &mem_y[k - 1]) / dot(&mem_y[k - 1], &mem_y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for j in 0..k {
            let rho = 1.0 / dot(&mem_y[j], &mem_s[j]);
            let beta = rho * dot(&mem_y[j], &q);
            for (qi, si) in q.iter_mut().zip(&mem_s[j]) {
                *qi += (alphas[j] - beta) * si;
            }
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -q[i] }).collect();
        if dot(&dir, &pg) >= 0.0 {
            mem_s.clear();
            mem_y.clear();
            dir = pg.iter().map(|v| -v).collect();
        }

        let mut step = if mem_s.is_empty() {
            let dmax = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / dmax.max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            bounds.clamp(&mut xn);
            let delta: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &delta);
            if decrease < 0.0 {
                if let Some((fn_, gn)) = f(&xn) {
                    if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                        accepted = Some((xn, fn_, gn, delta));
                        break;
                    }
                }
            } else {
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else { break };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            mem_s.push(s);
            mem_y.push(y);
            if mem_s.len() > opts.memory {
                mem_s.remove(0);
                mem_y.remove(0);
            }
        }
        let rel_change = (fx - fn_) / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel_change < opts.ftol {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        initial_value,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> Options {
        Options { max_iters: 500, gtol: 1e-9, ftol: 0.0, memory: 8 }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let bounds = Bounds { lo: vec![-5.0; 2], hi: vec![5.0; 2] };
        let m = minimize(f, &[-1.2, 1.0], &bounds, &opts()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
        assert!(m.value <= m.initial_value);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let bounds = Bounds { lo: vec![-1.0, 0.0], hi: vec![1.0, 2.0] };
        let m = minimize(f, &[0.0, 1.0], &bounds, &opts()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-12 && m.x[1].abs() < 1e-12);
    }

    #[test]
    fn undefined_regions_are_avoided() {
        // Objective undefined for x < 0.5; minimum of the defined part at 0.5+.
        let f = |x: &[f64]| if x[0] < 0.5 { None } else { Some((x[0] * x[0], vec![2.0 * x[0]])) };
        let bounds = Bounds { lo: vec![-10.0], hi: vec![10.0] };
        let m = minimize(f, &[4.0], &bounds, &opts()).unwrap();
        assert!(m.x[0] >= 0.5 && m.value < 16.0);
        assert!(minimize(f, &[0.0], &bounds, &opts()).is_none());
    }
}
