//! Curvature-dependent coefficients of the inequalities.
//!
//! Nearly every coefficient has the shape `(e^{cK·u} − …)/K^j`, which is a
//! removable singularity at K = 0. Each is evaluated through one of a few
//! primitives that switch to a three-term expansion when the exponent
//! argument has magnitude below [`TAYLOR_SWITCH`]; above the switch the
//! primitives avoid cancellation with `expm1` or an exactly summed series.
//! [`inventory`] lists every coefficient so continuity at K = 0 can be audited
//! in one place.

/// Exponent-argument magnitude below which the expansions are used.
pub const TAYLOR_SWITCH: f64 = 1e-8;

/// `(e^{2Kt} − 1)/K`, which tends to `2t`.
pub fn e_plus(k: f64, t: f64) -> f64 {
    let x = 2.0 * k * t;
    if x.abs() < TAYLOR_SWITCH {
        return 2.0 * t * (1.0 + k * t + 2.0 / 3.0 * k * k * t * t);
    }
    x.exp_m1() / k
}

/// `(1 − e^{−2Kt})/K`, which tends to `2t`.
pub fn e_minus(k: f64, t: f64) -> f64 {
    let x = 2.0 * k * t;
    if x.abs() < TAYLOR_SWITCH {
        return 2.0 * t * (1.0 - k * t + 2.0 / 3.0 * k * k * t * t);
    }
    -(-x).exp_m1() / k
}

/// `e^x − 1 − x` without cancellation.
fn exp_m1_m_x(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ_{j≥2} x^j / j!, summed to round-off.
        let mut term = 0.5 * x * x;
        let mut sum = term;
        let mut j = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            j += 1.0;
            term *= x / j;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// `(e^{2Kt} − 1 − 2Kt)/K²`, which tends to `2t²`.
pub fn g_plus(k: f64, t: f64) -> f64 {
    let x = 2.0 * k * t;
    if x.abs() < TAYLOR_SWITCH {
        return 2.0 * t * t * (1.0 + 2.0 / 3.0 * k * t + k * k * t * t / 3.0);
    }
    exp_m1_m_x(x) / (k * k)
}

/// `(e^{−2Kt} − 1 + 2Kt)/K²`, which tends to `2t²`.
pub fn g_minus(k: f64, t: f64) -> f64 {
    let x = 2.0 * k * t;
    if x.abs() < TAYLOR_SWITCH {
        return 2.0 * t * t * (1.0 - 2.0 / 3.0 * k * t + k * k * t * t / 3.0);
    }
    exp_m1_m_x(-x) / (k * k)
}

/// `K/(1 − e^{−2Ku})`, which tends to `1/(2u)`.
pub fn q2(k: f64, u: f64) -> f64 {
    let x = 2.0 * k * u;
    if x.abs() < TAYLOR_SWITCH {
        return (1.0 + k * u + k * k * u * u / 3.0) / (2.0 * u);
    }
    -k / (-x).exp_m1()
}

/// `K/(1 − e^{−Ku})`, which tends to `1/u`.
pub fn q1(k: f64, u: f64) -> f64 {
    let x = k * u;
    if x.abs() < TAYLOR_SWITCH {
        return (1.0 + 0.5 * x + x * x / 12.0) / u;
    }
    -k / (-x).exp_m1()
}

/// `1/n`, with `n = ∞` mapping to zero.
fn inv(n: f64) -> f64 {
    if n.is_infinite() {
        0.0
    } else {
        1.0 / n
    }
}

/// Closed gradient bound: `(e^{2Kt} − 1)/(Kn)`.
pub fn gradient_closed(k: f64, t: f64, n: f64) -> f64 {
    e_plus(k, t) * inv(n)
}

/// Variance upper bound: `((e^{2Kt} − 1)/K, (e^{2Kt} − 1 − 2Kt)/(K²n))`.
pub fn variance_upper(k: f64, t: f64, n: f64) -> (f64, f64) {
    (e_plus(k, t), g_plus(k, t) * inv(n))
}

/// Variance lower bound: `((1 − e^{−2Kt})/K, (e^{−2Kt} − 1 + 2Kt)/(K²n))`.
pub fn variance_lower(k: f64, t: f64, n: f64) -> (f64, f64) {
    (e_minus(k, t), g_minus(k, t) * inv(n))
}

/// Local log-Sobolev coefficient `2(e^{2Kt} − 1)/K` (tends to `4t`).
pub fn local_logsob(k: f64, t: f64) -> f64 {
    2.0 * e_plus(k, t)
}

/// (H1) constants: `(ρ² coefficient, additive term)`, i.e.
/// `K(t+2s)/(2t(1 − e^{−2K(t+s)}))` and `nKs²/(2t(1 − e^{−Kt}))`.
pub fn h1(k: f64, t: f64, s: f64, n: f64) -> (f64, f64) {
    let a = (t + 2.0 * s) / (2.0 * t) * q2(k, t + s);
    let b = if s == 0.0 { 0.0 } else { n * s * s / (2.0 * t) * q1(k, t) };
    (a, b)
}

/// (H2) constants: `K/(2(1 − e^{−2Kt}) + 4Kse^{−2Kt})` and
/// `Kns/(4(1 − e^{−2Kt}))`.
pub fn h2(k: f64, t: f64, s: f64, n: f64) -> (f64, f64) {
    let a = 1.0 / (2.0 * e_minus(k, t) + 4.0 * s * (-2.0 * k * t).exp());
    let b = if s == 0.0 { 0.0 } else { n * s / 4.0 * q2(k, t) };
    (a, b)
}

/// Exponent of the heat-kernel lower bound, `−Kρ²/(2(1 − e^{−Kt}))`.
pub fn heat_exponent(k: f64, t: f64, rho: f64) -> f64 {
    -0.5 * rho * rho * q1(k, t)
}

/// Integrand factor of the log-Harnack correction term,
/// `K/(1 − e^{−2Kφ})` (tends to `1/(2φ)`).
pub fn log_harnack_factor(k: f64, phi: f64) -> f64 {
    q2(k, phi)
}

/// Contraction rate for the plain modified-distance bound, `e^{Kt}`.
pub fn rate_ctpp(k: f64, t: f64) -> f64 {
    (k * t).exp()
}

/// Dimension-improved contraction rate `e^{nKt/(n−1)}`.
pub fn rate_ctp(k: f64, t: f64, n: f64) -> f64 {
    let ratio = if n.is_infinite() { 1.0 } else { n / (n - 1.0) };
    (ratio * k * t).exp()
}

/// One entry of the coefficient inventory.
pub struct InventoryEntry {
    pub name: &'static str,
    pub eval: Box<dyn Fn(f64) -> f64>,
}

/// Every curvature-dependent coefficient as a function of K, at fixed
/// `(t, s, n, ρ)`.
pub fn inventory(t: f64, s: f64, n: f64, rho: f64) -> Vec<InventoryEntry> {
    let e = |name: &'static str, f: Box<dyn Fn(f64) -> f64>| InventoryEntry { name, eval: f };
    vec![
        e("gradient_closed", Box::new(move |k| gradient_closed(k, t, n))),
        e("variance_upper_gradient", Box::new(move |k| variance_upper(k, t, n).0)),
        e("variance_upper_laplacian", Box::new(move |k| variance_upper(k, t, n).1)),
        e("variance_lower_gradient", Box::new(move |k| variance_lower(k, t, n).0)),
        e("variance_lower_laplacian", Box::new(move |k| variance_lower(k, t, n).1)),
        e("local_logsob", Box::new(move |k| local_logsob(k, t))),
        e("h1_distance", Box::new(move |k| h1(k, t, s, n).0)),
        e("h1_additive", Box::new(move |k| h1(k, t, s, n).1)),
        e("h2_distance", Box::new(move |k| h2(k, t, s, n).0)),
        e("h2_additive", Box::new(move |k| h2(k, t, s, n).1)),
        e("heat_exponent", Box::new(move |k| heat_exponent(k, t, rho))),
        e("log_harnack_factor", Box::new(move |k| log_harnack_factor(k, t))),
        e("rate_ctpp", Box::new(move |k| rate_ctpp(k, t))),
        e("rate_ctp", Box::new(move |k| rate_ctp(k, t, n))),
        e(
            "rho_tilde",
            Box::new(move |k| crate::transport::rho_tilde(k, n, rho).unwrap_or(f64::NAN)),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansions_meet_direct_formulas_at_the_switch() {
        for t in [0.3, 1.0, 2.0] {
            let k_edge = TAYLOR_SWITCH / (2.0 * t);
            for k in [k_edge * 0.999, k_edge * 1.001, -k_edge * 0.999, -k_edge * 1.001] {
                let naive_plus = ((2.0 * k * t).exp() - 1.0) / k;
                assert!((e_plus(k, t) - naive_plus).abs() < 1e-6 * e_plus(k, t));
                let direct_g = exp_m1_m_x(2.0 * k * t) / (k * k);
                assert!((g_plus(k, t) - direct_g).abs() < 1e-12 * direct_g);
            }
        }
    }

    #[test]
    fn series_for_g_matches_expm1_where_both_are_accurate() {
        for x in [0.4, -0.4, 0.49] {
            assert!((exp_m1_m_x(x) - (x.exp_m1() - x)).abs() < 1e-15);
        }
    }
}
