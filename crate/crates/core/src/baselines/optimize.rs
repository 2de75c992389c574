use alloc::vec::Vec;

/// Result of a derivative-free minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search with the standard coefficients
/// (reflection 1, expansion 2, contraction ½, shrink ½).
///
/// Stops when every vertex lies within `x_tol` (max-norm) of the best one,
/// or after `max_iter` iterations with `converged = false`.
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, start: &[f64], step: f64, x_tol: f64, max_iter: usize) -> Minimum {
    let n = start.len();
    let eval = |f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            let mut v = start.to_vec();
            if i > 0 {
                v[i - 1] += step;
            }
            v
        })
        .collect();
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(f, x)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();

        let spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| libm::fabs(a - b)))
            .fold(0.0, f64::max);
        if spread < x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64).collect();
        let towards = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + t * (w - c)).collect()
        };
        let worst = simplex[n].clone();
        let reflected = towards(-1.0, &worst);
        let fr = eval(f, &reflected);
        if fr < fv[0] {
            let expanded = towards(-2.0, &worst);
            let fe = eval(f, &expanded);
            if fe < fr {
                simplex[n] = expanded;
                fv[n] = fe;
            } else {
                simplex[n] = reflected;
                fv[n] = fr;
            }
            continue;
        }
        if fr < fv[n - 1] {
            simplex[n] = reflected;
            fv[n] = fr;
            continue;
        }
        let (candidate, fc) = if fr < fv[n] {
            let c = towards(-0.5, &worst);
            let v = eval(f, &c);
            (c, v)
        } else {
            let c = towards(0.5, &worst);
            let v = eval(f, &c);
            (c, v)
        };
        if fc < fv[n].min(fr) {
            simplex[n] = candidate;
            fv[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = simplex[i].iter().zip(&best).map(|(x, b)| b + 0.5 * (x - b)).collect();
            fv[i] = eval(f, &simplex[i]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), value: fv[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(&mut f, &[-1.2, 1.0], 0.1, 1e-8, 5000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_bowl_5d() {
        let mut f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(2)).sum();
        let m = nelder_mead(&mut f, &[0.0; 5], 0.1, 1e-7, 2000);
        assert!(m.x.iter().all(|v| (v - 0.3).abs() < 1e-5));
    }
}
