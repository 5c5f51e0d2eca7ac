//! One-dimensional numerical helpers: bisection and bracketed maximization.

/// Root of a sign-changing `f` on `[lo, hi]` by bisection.
///
/// Returns the midpoint of the final bracket. If `f(lo)` and `f(hi)` share a
/// sign the endpoint with the smaller `|f|` is returned.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return lo;
    }
    if f_hi == 0.0 {
        return hi;
    }
    if f_lo.signum() == f_hi.signum() {
        return if f_lo.abs() < f_hi.abs() { lo } else { hi };
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Number of coarse grid points over the search interval.
    pub grid_points: usize,
    /// Golden-section iterations stop once the bracket is this narrow relative
    /// to the interval length.
    pub relative_x_tol: f64,
    pub max_golden_iters: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_points: 4096,
            relative_x_tol: 1e-15,
            max_golden_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Coarse grid nodes on `[lo, hi]`: half uniformly spaced, half geometrically
/// spaced toward `lo`, so optima far below `hi` are still bracketed.
pub fn search_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(3);
    let width = hi - lo;
    if width <= 0.0 {
        return vec![lo];
    }
    let uniform = points.div_ceil(2);
    let geometric = points - uniform;
    let mut nodes = Vec::with_capacity(points);
    for k in 0..uniform {
        nodes.push(lo + width * k as f64 / (uniform - 1) as f64);
    }
    // offsets width * 10^(-12 .. 0)
    for k in 0..geometric {
        let e = -12.0 + 12.0 * k as f64 / geometric.max(2) as f64;
        nodes.push(lo + width * 10f64.powf(e));
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

/// Maximizes `f` over `[lo, hi]`: global bracketing on a coarse grid, then
/// golden-section refinement inside the cell pair around the best node.
pub fn maximize_on_interval(f: impl Fn(f64) -> f64, lo: f64, hi: f64, opts: &SearchOptions) -> Maximum {
    let nodes = search_grid(lo, hi, opts.grid_points);
    let mut evaluations = 0;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, &x) in nodes.iter().enumerate() {
        let v = f(x);
        evaluations += 1;
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut best_x = nodes[best_k];
    if nodes.len() < 2 {
        return Maximum {
            x: best_x,
            value: best,
            evaluations,
        };
    }
    let mut a = nodes[best_k.saturating_sub(1)];
    let mut b = nodes[(best_k + 1).min(nodes.len() - 1)];

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let x_tol = opts.relative_x_tol * (hi - lo).abs().max(f64::MIN_POSITIVE);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    evaluations += 2;
    for _ in 0..opts.max_golden_iters {
        if (b - a) <= x_tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best {
            best = v;
            best_x = x;
        }
    }
    Maximum {
        x: best_x,
        value: best,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn grid_contains_endpoints_and_is_sorted() {
        let g = search_grid(0.0, 5.0, 64);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 5.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g[1] < 1e-10);
    }

    #[test]
    fn maximizes_concave_quadratic() {
        let m = maximize_on_interval(|x| -(x - 0.3).powi(2) + 2.0, 0.0, 1.0, &SearchOptions::default());
        assert!((m.x - 0.3).abs() < 1e-7);
        assert!((m.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn finds_global_peak_of_bimodal_function() {
        let f = |x: f64| (-(x - 0.1).powi(2) * 400.0).exp() + 1.2 * (-(x - 0.8).powi(2) * 2000.0).exp();
        let m = maximize_on_interval(f, 0.0, 1.0, &SearchOptions::default());
        assert!((m.x - 0.8).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn tiny_optimum_far_below_upper_end() {
        // optimum at 1e-6 on an interval of length 1e4
        let f = |x: f64| -(x - 1e-6).powi(2);
        let m = maximize_on_interval(f, 0.0, 1e4, &SearchOptions::default());
        assert!((m.x - 1e-6).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn monotone_objective_hits_endpoint() {
        let m = maximize_on_interval(|x| x, 0.0, 3.0, &SearchOptions::default());
        assert!((m.x - 3.0).abs() < 1e-12);
    }
}
