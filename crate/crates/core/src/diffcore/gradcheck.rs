//! Central finite-difference checks.

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients
/// from producing huge ratios out of rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// `(f(x + h) − f(x − h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `analytic[i]` with the central difference of `f` along
/// coordinate `i` of `x`, for every `i` in `coords`.
pub fn check_coords(
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradCheck {
    let mut probe = x.to_vec();
    let mut out = GradCheck {
        probes: 0,
        max_rel_error: 0.0,
        worst: 0,
    };
    for &i in coords {
        let base = probe[i];
        let n = central_difference(
            |v| {
                probe[i] = v;
                f(&probe)
            },
            base,
            h,
        );
        probe[i] = base;
        let e = relative_error(analytic[i], n);
        if out.probes == 0 || e > out.max_rel_error {
            out.max_rel_error = e;
            out.worst = i;
        }
        out.probes += 1;
    }
    out
}
