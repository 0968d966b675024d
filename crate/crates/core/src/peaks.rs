//! Peak picking on sampled curves.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Indices wrap around (azimuth).
    Circular,
    /// Open ends; the first and last sample are never peaks (ITD).
    Linear,
}

/// Up to `max` peak locations, highest first, ties broken towards the
/// smaller index.
///
/// A peak is a maximal run of equal samples whose neighbours on both sides
/// are strictly smaller; the run is reported by its left edge. A curve that
/// is constant everywhere has no peaks.
pub fn find_peaks(curve: &[f64], max: usize, domain: Domain) -> Vec<usize> {
    let n = curve.len();
    let mut peaks: Vec<usize> = Vec::new();
    if n < 2 || max == 0 {
        return peaks;
    }
    match domain {
        Domain::Linear => {
            let mut s = 0;
            while s < n {
                let mut e = s;
                while e + 1 < n && curve[e + 1] == curve[s] {
                    e += 1;
                }
                if s > 0 && e + 1 < n && curve[s - 1] < curve[s] && curve[e + 1] < curve[s] {
                    peaks.push(s);
                }
                s = e + 1;
            }
        }
        Domain::Circular => {
            // Start scanning at a run boundary so no run is split.
            let Some(first) = (0..n).find(|&i| curve[i] != curve[(i + n - 1) % n]) else {
                return peaks;
            };
            let mut off = 0;
            while off < n {
                let s = (first + off) % n;
                let mut len = 1;
                while len < n && curve[(s + len) % n] == curve[s] {
                    len += 1;
                }
                let before = curve[(s + n - 1) % n];
                let after = curve[(s + len) % n];
                if before < curve[s] && after < curve[s] {
                    peaks.push(s);
                }
                off += len;
            }
        }
    }
    peaks.sort_by(|&a, &b| curve[b].total_cmp(&curve[a]).then(a.cmp(&b)));
    peaks.truncate(max);
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_ranked_by_height() {
        assert_eq!(find_peaks(&[0.0, 1.0, 0.0, 2.0, 0.0], 2, Domain::Linear), vec![3, 1]);
    }

    #[test]
    fn circular_wraps() {
        assert_eq!(find_peaks(&[2.0, 0.0, 0.0, 0.0, 1.0], 2, Domain::Circular), vec![0]);
        assert_eq!(find_peaks(&[2.0, 0.0, 0.0, 0.0, 1.0], 2, Domain::Linear), Vec::<usize>::new());
    }

    #[test]
    fn ramp_and_flat_have_no_peaks() {
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(find_peaks(&ramp, 3, Domain::Linear).is_empty());
        assert!(find_peaks(&[1.0; 8], 1, Domain::Circular).is_empty());
        assert!(find_peaks(&[1.0; 8], 1, Domain::Linear).is_empty());
    }

    #[test]
    fn plateau_reports_left_edge() {
        assert_eq!(find_peaks(&[0.0, 3.0, 3.0, 3.0, 1.0], 1, Domain::Linear), vec![1]);
        // plateau wrapping past the end starts at index 4
        assert_eq!(find_peaks(&[3.0, 1.0, 0.0, 1.0, 3.0], 1, Domain::Circular), vec![4]);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        assert_eq!(find_peaks(&[0.0, 1.0, 0.0, 1.0, 0.0], 2, Domain::Circular), vec![1, 3]);
    }

    #[test]
    fn degenerate_lengths() {
        assert!(find_peaks(&[], 2, Domain::Circular).is_empty());
        assert!(find_peaks(&[5.0], 2, Domain::Circular).is_empty());
        assert_eq!(find_peaks(&[2.0, 1.0], 2, Domain::Circular), vec![0]);
    }

    proptest! {
        #[test]
        fn circular_peaks_are_local_maxima(curve in prop::collection::vec(0u8..6, 2..40)) {
            let c: Vec<f64> = curve.iter().map(|&v| f64::from(v)).collect();
            let n = c.len();
            let peaks = find_peaks(&c, n, Domain::Circular);
            for &p in &peaks {
                prop_assert!(c[(p + n - 1) % n] < c[p]);
            }
            prop_assert!(peaks.windows(2).all(|w| c[w[0]] >= c[w[1]]));
            // the global maximum is always found unless the curve is flat
            let max = c.iter().copied().fold(f64::MIN, f64::max);
            if c.iter().any(|&v| v != max) {
                prop_assert_eq!(c[peaks[0]], max);
            }
        }
    }
}
