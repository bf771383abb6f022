//! Crossover and threshold detection on sampled curves.

/// Consecutive positive samples required before a sign change counts.
pub const MIN_POSITIVE_RUN: usize = 10;

fn interpolate_root(t0: f64, t1: f64, y0: f64, y1: f64) -> f64 {
    if y0 == y1 {
        t1
    } else {
        t0 + (t1 - t0) * y0 / (y0 - y1)
    }
}

/// First time where `diff` turns non-positive after at least `MIN_POSITIVE_RUN`
/// consecutive positive samples, linearly interpolated.
pub fn crossover_time(times: &[f64], diff: &[f64]) -> Option<f64> {
    crossover_time_with(times, diff, MIN_POSITIVE_RUN)
}

pub fn crossover_time_with(times: &[f64], diff: &[f64], min_run: usize) -> Option<f64> {
    let mut run = 0;
    for i in 0..times.len().min(diff.len()) {
        if diff[i] > 0.0 {
            run += 1;
        } else {
            if run >= min_run && i > 0 {
                return Some(interpolate_root(times[i - 1], times[i], diff[i - 1], diff[i]));
            }
            run = 0;
        }
    }
    None
}

/// Start of the first positive run of `diff` with at least `MIN_POSITIVE_RUN`
/// samples, and the crossover that ends it (None while it lasts to the end).
pub fn first_positive_window(times: &[f64], diff: &[f64]) -> Option<(f64, Option<f64>)> {
    let n = times.len().min(diff.len());
    let mut start = None;
    let mut run = 0;
    for i in 0..n {
        if diff[i] > 0.0 {
            if run == 0 {
                start = Some(i);
            }
            run += 1;
        } else {
            if run >= MIN_POSITIVE_RUN {
                let s = start.expect("run has a start");
                return Some((times[s], Some(interpolate_root(times[i - 1], times[i], diff[i - 1], diff[i]))));
            }
            run = 0;
        }
    }
    (run >= MIN_POSITIVE_RUN).then(|| (times[start.expect("run has a start")], None))
}

/// First time `series` drops below `threshold`, linearly interpolated.
pub fn first_time_below(times: &[f64], series: &[f64], threshold: f64) -> Option<f64> {
    let n = times.len().min(series.len());
    if n == 0 {
        return None;
    }
    if series[0] < threshold {
        return Some(times[0]);
    }
    (1..n).find(|&i| series[i] < threshold).map(|i| {
        interpolate_root(times[i - 1], times[i], series[i - 1] - threshold, series[i] - threshold)
    })
}

/// Pointwise `a - max(b, c)`.
pub fn margin_over(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((a, b), c)| a - b.max(*c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn finds_interpolated_crossover() {
        let t = grid(101, 0.1);
        let d: Vec<f64> = t.iter().map(|&x| 3.05 - x).collect();
        let tau = crossover_time(&t, &d).unwrap();
        assert!((tau - 3.05).abs() < 1e-12);
    }

    #[test]
    fn short_positive_runs_are_ignored() {
        let t = grid(40, 0.1);
        let mut d = vec![-1.0; 40];
        for v in d.iter_mut().take(8).skip(2) {
            *v = 1.0;
        }
        assert_eq!(crossover_time(&t, &d), None);
        for v in d.iter_mut().take(35).skip(20) {
            *v = 1.0;
        }
        let tau = crossover_time(&t, &d).unwrap();
        assert!((tau - 3.45).abs() < 1e-12);
    }

    #[test]
    fn zero_start_then_positive_window() {
        let t = grid(50, 0.1);
        let d: Vec<f64> = t.iter().map(|&x| x * (2.0 - x)).collect();
        let (start, end) = first_positive_window(&t, &d).unwrap();
        assert!((start - 0.1).abs() < 1e-12);
        assert!((end.unwrap() - 2.0).abs() < 1e-9);
        assert!(first_positive_window(&t, &vec![1.0; 50]).unwrap().1.is_none());
    }

    #[test]
    fn threshold_crossing() {
        let t = grid(11, 1.0);
        let s: Vec<f64> = t.iter().map(|&x| 2.0 - 0.25 * x).collect();
        assert!((first_time_below(&t, &s, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(first_time_below(&t, &s, -5.0), None);
        assert_eq!(margin_over(&[1.0], &[0.5], &[0.75]), vec![0.25]);
    }
}
