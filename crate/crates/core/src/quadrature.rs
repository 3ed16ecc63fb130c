//! Gauss–Legendre and Gauss–Hermite rules, plus the normalized Hermite
//! function recurrence they share with the fiber basis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

const RESCALE: f64 = 1e150;

/// Fills `out[n] = h_n(y)` for `n < out.len()`, where `h_n` are the
/// L²-normalized Hermite functions `H_n(y) e^{-y²/2} / sqrt(2^n n! sqrt(pi))`.
///
/// The three-term recurrence is run on the polynomial part with a running
/// log-scale, so neither the Gaussian nor the polynomial over/underflows for
/// large `|y|` or large `n`.
pub fn hermite_functions(y: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let gauss = -0.5 * y * y;
    let mut log_scale = 0.0f64;
    let emit = |p: f64, log_scale: f64| -> f64 {
        if p == 0.0 {
            0.0
        } else {
            p.signum() * (p.abs().ln() + log_scale + gauss).exp()
        }
    };

    let mut prev = 0.0f64;
    let mut cur = PI.powf(-0.25);
    out[0] = emit(cur, log_scale);
    for n in 0..out.len() - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * y * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out[n + 1] = emit(cur, log_scale);
    }
}

/// Single normalized Hermite function `h_n(y)` (0-based index).
pub fn hermite_function(n: usize, y: f64) -> f64 {
    let mut buf = vec![0.0; n + 1];
    hermite_functions(y, &mut buf);
    buf[n]
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| half * t).collect(),
    )
}

/// Gauss–Hermite rule for the weight `e^{-y²}`.
///
/// Weights are stored pre-multiplied by `e^{y²}` so that integrals of
/// products of Hermite *functions* (which carry their own Gaussian) are
/// `Σ scaled_weights[i] f(nodes[i])` with no underflow in the tails.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(q: usize) -> Self {
        assert!(q >= 2, "Gauss-Hermite order must be at least 2");
        let mut nodes = vec![0.0; q];
        let mut scaled_weights = vec![0.0; q];
        let m = q.div_ceil(2);
        let qf = q as f64;
        let mut buf = vec![0.0; q + 1];
        let mut z = 0.0f64;
        // Roots from the largest downwards; asymptotic initial guesses.
        let mut found: Vec<f64> = Vec::with_capacity(m);
        for i in 0..m {
            z = match i {
                0 => (2.0 * qf + 1.0).sqrt() - 1.85575 * (2.0 * qf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * qf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * found[0],
                3 => 1.91 * z - 0.91 * found[1],
                _ => 2.0 * z - found[i - 2],
            };
            for _ in 0..100 {
                hermite_functions(z, &mut buf);
                let (pq, pq1) = (buf[q], buf[q - 1]);
                // h_q' = sqrt(2q) h_{q-1} - y h_q
                let dz = pq / ((2.0 * qf).sqrt() * pq1 - z * pq);
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            hermite_functions(z, &mut buf);
            found.push(z);
            let w = 1.0 / (qf * buf[q - 1] * buf[q - 1]);
            nodes[i] = -z;
            nodes[q - 1 - i] = z;
            scaled_weights[i] = w;
            scaled_weights[q - 1 - i] = w;
        }
        if q % 2 == 1 {
            nodes[m - 1] = 0.0;
        }
        Self { nodes, scaled_weights }
    }

    /// Shared, memoized rule of order `q`.
    pub fn cached(q: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&q) {
            return rule.clone();
        }
        let rule = Arc::new(GaussHermite::new(q));
        cache.lock().unwrap().insert(q, rule.clone());
        rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
