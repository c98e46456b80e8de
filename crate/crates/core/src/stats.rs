//! Small regression helpers.

use serde::{Deserialize, Serialize};

/// Least-squares line `y ≈ slope·x + intercept` with its coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Ranks with ties given their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
            m += 1;
        }
        let rank = 0.5 * (k + m) as f64 + 1.0;
        for &j in &idx[k..=m] {
            out[j] = rank;
        }
        k = m + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Exponential envelope `|g| ≈ amplitude·e^{−rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub rate: f64,
    pub amplitude: f64,
    /// Distances `t` covered by the fit.
    pub window: (f64, f64),
    /// `max |envelope/fit − 1|` over the fitted block maxima.
    pub fit_residual: f64,
}

/// Fits block maxima of `mags` against the distances `ts` (ascending) on
/// `[t_max/2, t_max]`, where `t_max` is the last distance above the round-off
/// floor, capped at `reach`.
pub fn fit_envelope(ts: &[f64], mags: &[f64], floor: f64, reach: f64) -> Option<EnvelopeFit> {
    let hi = ts
        .iter()
        .zip(mags)
        .filter(|(t, m)| **t <= reach && **m > floor)
        .map(|(t, _)| *t)
        .fold(f64::NAN, f64::max);
    if !hi.is_finite() {
        return None;
    }
    let lo = 0.5 * hi;
    let inside: Vec<(f64, f64)> = ts
        .iter()
        .zip(mags)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, m)| (*t, *m))
        .collect();
    if inside.len() < 16 {
        return None;
    }
    let blocks = 8;
    let width = (hi - lo) / blocks as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in 0..blocks {
        let (a, z) = (lo + width * b as f64, lo + width * (b + 1) as f64);
        let best = inside
            .iter()
            .filter(|(t, _)| *t >= a && (*t < z || b == blocks - 1))
            .fold(None::<(f64, f64)>, |acc, &(t, m)| match acc {
                Some((_, bm)) if bm >= m => acc,
                _ => Some((t, m)),
            });
        if let Some((t, m)) = best {
            if m > floor {
                xs.push(t);
                ys.push(m.ln());
            }
        }
    }
    if xs.len() < 3 {
        return None;
    }
    let fit = linear_fit(&xs, &ys);
    let fit_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| ((y - (fit.slope * x + fit.intercept)).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Some(EnvelopeFit {
        rate: -fit.slope,
        amplitude: fit.intercept.exp(),
        window: (lo, hi),
        fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = linear_fit(&x, &y);
        assert!((fit.slope - 2.5).abs() < 1e-14 && (fit.intercept + 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spearman_of_monotone_maps() {
        let a = [0.1, 0.5, 0.3, 0.9, 0.7];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.powi(3) + 2.0).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-14);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-14);
        assert!((spearman(&[1.0, 1.0, 2.0], &[3.0, 3.0, 4.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn envelope_of_damped_oscillation() {
        let ts: Vec<f64> = (1..4000).map(|k| k as f64 * 0.01).collect();
        let pure: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let fit = fit_envelope(&ts, &pure, 1e-14, 32.0).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-10 && (fit.amplitude - 2.0).abs() < 1e-8);
        assert!(fit.fit_residual < 1e-8);
        let mags: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp() * (3.0 * t).cos().abs()).collect();
        let fit = fit_envelope(&ts, &mags, 1e-14, 32.0).unwrap();
        assert!((fit.rate - 0.7).abs() < 0.05 * 0.7, "{fit:?}");
        assert!(fit_envelope(&ts, &vec![0.0; ts.len()], 1e-14, 32.0).is_none());
    }
}
