//! Small Nelder-Mead simplex minimizer for the sphere-criterion search.

/// Options controlling the simplex search.
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in both x and f drops below this.
    pub tol: f64,
    /// Initial simplex step per coordinate.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_evals: 120,
            tol: 1e-4,
            step: 0.35,
        }
    }
}

/// Minimizes `f` from `x0`, returning the best point and value seen.
/// Non-finite objective values are treated as +inf, so the search backs away
/// from them; the best finite evaluation is always returned.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: NmOptions) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if d == 0 {
        let v = eval(x0, &mut evals);
        return (x0.to_vec(), v);
    }

    // Initial simplex: x0 plus a step along each axis.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for k in 0..d {
        let mut x = x0.to_vec();
        x[k] += opts.step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread_f = simplex[d].1 - simplex[0].1;
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread_f.abs() < opts.tol && spread_x < opts.tol {
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c += xi;
            }
        }
        for c in &mut centroid {
            *c /= d as f64;
        }
        let worst = simplex[d].clone();
        let point = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let reflected = point(alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let expanded = point(gamma);
            let fe = eval(&expanded, &mut evals);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { point(rho) } else { point(-rho) };
            let fc = eval(&contracted, &mut evals);
            if fc < worst.1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (x, &b) in entry.0.iter_mut().zip(&best) {
                        *x = b + sigma * (*x - b);
                    }
                    entry.1 = eval(&entry.0.clone(), &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_shifted_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.5) * (x[0] - 1.5) + 2.0 * (x[1] + 0.5) * (x[1] + 0.5);
        let (x, v) = minimize(f, &[0.0, 0.0], NmOptions { max_evals: 300, tol: 1e-8, step: 0.5 });
        assert!((x[0] - 1.5).abs() < 1e-3, "{x:?}");
        assert!((x[1] + 0.5).abs() < 1e-3, "{x:?}");
        assert!(v < 1e-5);
    }

    #[test]
    fn survives_non_finite_regions() {
        // NaN away from the basin; the search must still improve.
        let f = |x: &[f64]| {
            if x[0].abs() > 2.0 {
                f64::NAN
            } else {
                x[0] * x[0]
            }
        };
        let (x, v) = minimize(f, &[1.4], NmOptions::default());
        assert!(v.is_finite());
        assert!(x[0].abs() < 0.1);
    }
}
