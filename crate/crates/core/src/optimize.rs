//! Tag-power optimization.
//!
//! For a fixed message constellation the tag design is the convex program
//!
//! ```text
//! minimize    (1/2L) Σ F(k_i)
//! subject to  (1/2L) Σ A_i (e^{k_i} − 1) ≤ E_tot − E_m
//!             (1/L) Σ_{i<L} W(k_i)      ≤ δ
//!             0 < k_i < ln R
//! ```
//!
//! with `F(k) = 1 + G(N u(k)) − G(N (u(k) + k))` and
//! `W(k) = 1 − G(N u(k − ln R)) + G(N (u(k − ln R) + k − ln R))`, where
//! `u(x) = x / (e^x − 1)`. Every term is separable, so the barrier Hessian
//! is a diagonal plus two rank-one terms and each Newton step costs O(L).

use serde::{Deserialize, Serialize};

use crate::constellation::{design_constellation, solve_ratio, MessageConstellation, SystemConfig};
use crate::error::{ensure_finite, PlaError, Result};
use crate::numerics::ChiSquaredCdf;

/// `(u, u′, u″)` for `u(x) = x / (e^x − 1)`, the Bernoulli generating
/// function. Series near the origin, closed form elsewhere.
pub fn log_ratio_fn(x: f64) -> [f64; 3] {
    if x.abs() < 0.2 {
        let x2 = x * x;
        let u = 1.0 - x / 2.0
            + x2 * (1.0 / 12.0
                + x2 * (-1.0 / 720.0
                    + x2 * (1.0 / 30240.0 + x2 * (-1.0 / 1_209_600.0 + x2 / 47_900_160.0))));
        let du = -0.5
            + x * (1.0 / 6.0
                + x2 * (-1.0 / 180.0
                    + x2 * (1.0 / 5040.0 + x2 * (-1.0 / 151_200.0 + x2 / 4_790_016.0))));
        let d2u = 1.0 / 6.0
            + x2 * (-1.0 / 60.0 + x2 * (1.0 / 1008.0 + x2 * (-1.0 / 21_600.0 + x2 / 532_224.0)));
        return [u, du, d2u];
    }
    let d = x.exp_m1();
    let e = d + 1.0;
    let u = x / d;
    let du = (d - x * e) / (d * d);
    let d2u = (-2.0 * e * d - x * e * d + 2.0 * x * e * e) / (d * d * d);
    [u, du, d2u]
}

/// `d/dk` and `d²/dk²` of `G(N φ(k))` given `φ, φ′, φ″`.
fn chained_cdf(chi: &ChiSquaredCdf, phi: [f64; 3]) -> [f64; 3] {
    let n = chi.dof() as f64;
    let z = n * phi[0];
    let f = chi.pdf(z);
    let df = chi.pdf_derivative(z);
    [chi.cdf(z), f * n * phi[1], df * n * n * phi[1] * phi[1] + f * n * phi[2]]
}

/// Same as [`chained_cdf`] but for the survival function `1 − G(N φ(k))`.
fn chained_sf(chi: &ChiSquaredCdf, phi: [f64; 3]) -> [f64; 3] {
    let [_, d1, d2] = chained_cdf(chi, phi);
    [chi.sf(chi.dof() as f64 * phi[0]), -d1, -d2]
}

/// `(F, F′, F″)`: per-symbol conditional tag error term,
/// `F(k) = 1 + G(N u(e^k)) − G(N v(e^k))`.
pub fn tag_error_term(chi: &ChiSquaredCdf, k: f64) -> [f64; 3] {
    let u = log_ratio_fn(k);
    let v = [u[0] + k, u[1] + 1.0, u[2]];
    let a = chained_cdf(chi, u);
    let b = chained_sf(chi, v);
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `(W, W′, W″)`: per-pair message-SER bound term,
/// `W(k) = 1 − G(N g(e^k)) + G(N h(e^k))`.
pub fn bound_term(chi: &ChiSquaredCdf, k: f64, ln_ratio: f64) -> [f64; 3] {
    let x = k - ln_ratio;
    let g = log_ratio_fn(x);
    let h = [g[0] + x, g[1] + 1.0, g[2]];
    let a = chained_sf(chi, g);
    let b = chained_cdf(chi, h);
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Closed form `W′(k) = N^N g^N e^{−N g} / (N−1)!` with
/// `g = R ln(R/r)/(R − r)`, `r = e^k`.
pub fn bound_term_slope_closed_form(antennas: u32, k: f64, ln_ratio: f64) -> f64 {
    let n = antennas as f64;
    let s = ln_ratio - k;
    let g = s / -(-s).exp_m1();
    let ln_fact: f64 = (2..antennas).map(|j| (j as f64).ln()).sum();
    (n * n.ln() + n * g.ln() - n * g - ln_fact).exp()
}

/// Tag design problem for a fixed message constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProblem {
    pub base: MessageConstellation,
    pub antennas: u32,
    /// E_tot − E_m
    pub power_budget: f64,
    pub delta: f64,
}

/// Value, gradient and (diagonal) Hessian of a separable function.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    /// `budget − (1/2L) Σ A_i (e^{k_i} − 1)`; nonnegative when satisfied.
    pub power_slack: f64,
    /// `δ − (1/L) Σ_{i<L} W(k_i)`; nonnegative when satisfied.
    pub ser_bound_slack: f64,
    /// Left-hand sides with derivatives.
    pub power: Separable,
    pub ser_bound: Separable,
}

impl EmbeddingProblem {
    pub fn new(
        base: MessageConstellation,
        antennas: u32,
        power_budget: f64,
        delta: f64,
    ) -> Result<Self> {
        ChiSquaredCdf::new(antennas)?;
        ensure_finite("power_budget", power_budget)?;
        if power_budget < 0.0 {
            return Err(PlaError::invalid("power_budget", "must be nonnegative"));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(PlaError::invalid("delta", "must lie in (0, 1]"));
        }
        Ok(Self {
            base,
            antennas,
            power_budget,
            delta,
        })
    }

    pub fn levels(&self) -> usize {
        self.base.levels()
    }

    pub fn ln_ratio(&self) -> f64 {
        self.base.ln_ratio()
    }

    fn chi(&self) -> ChiSquaredCdf {
        ChiSquaredCdf::new(self.antennas).expect("validated at construction")
    }

    fn check_interior(&self, k: &[f64]) -> Result<()> {
        if k.len() != self.levels() {
            return Err(PlaError::invalid("k", format!("expected {} entries", self.levels())));
        }
        let upper = self.ln_ratio();
        for (index, &value) in k.iter().enumerate() {
            if !(value > 0.0 && value < upper) {
                return Err(PlaError::OutOfBox {
                    index,
                    value,
                    lower: 0.0,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Tag SER objective `(1/2L) Σ F(k_i)` with derivatives.
    pub fn objective_and_derivatives(&self, k: &[f64]) -> Result<Separable> {
        self.check_interior(k)?;
        Ok(self.objective_unchecked(k))
    }

    fn objective_unchecked(&self, k: &[f64]) -> Separable {
        let chi = self.chi();
        let scale = 1.0 / (2 * self.levels()) as f64;
        let mut out = Separable {
            value: 0.0,
            gradient: Vec::with_capacity(k.len()),
            hessian_diag: Vec::with_capacity(k.len()),
        };
        for &ki in k {
            let [f, df, d2f] = tag_error_term(&chi, ki);
            out.value += scale * f;
            out.gradient.push(scale * df);
            out.hessian_diag.push(scale * d2f);
        }
        out
    }

    pub fn constraint_functions(&self, k: &[f64]) -> Result<ConstraintEval> {
        self.check_interior(k)?;
        Ok(self.constraints_unchecked(k))
    }

    fn constraints_unchecked(&self, k: &[f64]) -> ConstraintEval {
        let chi = self.chi();
        let levels = self.levels();
        let ln_r = self.ln_ratio();
        let half = 1.0 / (2 * levels) as f64;
        let mut power = Separable {
            value: 0.0,
            gradient: Vec::with_capacity(levels),
            hessian_diag: Vec::with_capacity(levels),
        };
        for (&a, &ki) in self.base.variances.iter().zip(k) {
            let e = ki.exp();
            power.value += half * a * ki.exp_m1();
            power.gradient.push(half * a * e);
            power.hessian_diag.push(half * a * e);
        }
        let inv = 1.0 / levels as f64;
        let mut bound = Separable {
            value: 0.0,
            gradient: vec![0.0; levels],
            hessian_diag: vec![0.0; levels],
        };
        for i in 0..levels - 1 {
            let [w, dw, d2w] = bound_term(&chi, k[i], ln_r);
            bound.value += inv * w;
            bound.gradient[i] = inv * dw;
            bound.hessian_diag[i] = inv * d2w;
        }
        ConstraintEval {
            power_slack: self.power_budget - power.value,
            ser_bound_slack: self.delta - bound.value,
            power,
            ser_bound: bound,
        }
    }

    /// Message-SER bound as every `k_i → 0⁺`: the tag-free pairwise bound.
    pub fn tag_free_bound(&self) -> f64 {
        tag_free_bound(&self.chi(), self.levels(), self.ln_ratio())
    }
}

fn tag_free_bound(chi: &ChiSquaredCdf, levels: usize, ln_ratio: f64) -> f64 {
    (levels - 1) as f64 / levels as f64 * bound_term(chi, 0.0, ln_ratio)[0]
}

/// Barrier path parameters, recorded in every solve for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub initial_t: f64,
    pub mu: f64,
    /// Stop when `m / t` falls below this.
    pub gap_tolerance: f64,
    /// Newton-decrement threshold `λ²/2` for each centering step.
    pub centering_tolerance: f64,
    pub max_newton_steps: usize,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            mu: 10.0,
            gap_tolerance: 1e-8,
            centering_tolerance: 1e-8,
            max_newton_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub k_opt: Vec<f64>,
    /// Tag SER at `k_opt`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub duality_gap: f64,
    pub power_slack: f64,
    pub ser_bound_slack: f64,
    pub params: BarrierParams,
}

impl SolveResult {
    fn infeasible(problem: &EmbeddingProblem, params: BarrierParams) -> Self {
        Self {
            k_opt: vec![0.0; problem.levels()],
            objective: 0.5,
            kkt_residual: f64::INFINITY,
            iterations: 0,
            status: SolveStatus::Infeasible,
            duality_gap: f64::INFINITY,
            power_slack: problem.power_budget,
            ser_bound_slack: problem.delta - problem.tag_free_bound(),
            params,
        }
    }
}

/// Strictly feasible start: the largest `k = s·(ln R/2)·1` with both
/// constraints slack, halving `s` from 1. Both constraints increase in
/// every coordinate, so this ray finds a Slater point whenever one exists.
fn slater_point(problem: &EmbeddingProblem) -> Option<Vec<f64>> {
    if problem.power_budget <= 0.0 || problem.tag_free_bound() >= problem.delta {
        return None;
    }
    let mid = 0.5 * problem.ln_ratio();
    let mut s = 1.0;
    for _ in 0..1100 {
        let k = vec![s * mid; problem.levels()];
        if k[0] <= 0.0 {
            break;
        }
        let c = problem.constraints_unchecked(&k);
        if c.power_slack > 0.0 && c.ser_bound_slack > 0.0 {
            return Some(k);
        }
        s *= 0.5;
    }
    None
}

struct BarrierEval {
    value: f64,
    gradient: Vec<f64>,
    diag: Vec<f64>,
    /// ∇g_p / s_p and ∇g_b / s_b, the two dyads of the Hessian.
    p: Vec<f64>,
    q: Vec<f64>,
    objective: f64,
    power_slack: f64,
    bound_slack: f64,
}

fn barrier_eval(problem: &EmbeddingProblem, k: &[f64], t: f64) -> Option<BarrierEval> {
    let ln_r = problem.ln_ratio();
    if k.iter().any(|&x| !(x > 0.0 && x < ln_r)) {
        return None;
    }
    let c = problem.constraints_unchecked(k);
    if !(c.power_slack > 0.0 && c.ser_bound_slack > 0.0) {
        return None;
    }
    let f = problem.objective_unchecked(k);
    let (sp, sb) = (c.power_slack, c.ser_bound_slack);
    let mut value = t * f.value - sp.ln() - sb.ln();
    let levels = k.len();
    let mut gradient = Vec::with_capacity(levels);
    let mut diag = Vec::with_capacity(levels);
    let mut p = Vec::with_capacity(levels);
    let mut q = Vec::with_capacity(levels);
    for i in 0..levels {
        let lo = k[i];
        let hi = ln_r - k[i];
        value -= lo.ln() + hi.ln();
        let pi = c.power.gradient[i] / sp;
        let qi = c.ser_bound.gradient[i] / sb;
        gradient.push(t * f.gradient[i] + pi + qi - 1.0 / lo + 1.0 / hi);
        let d = t * f.hessian_diag[i]
            + c.power.hessian_diag[i] / sp
            + c.ser_bound.hessian_diag[i] / sb
            + 1.0 / (lo * lo)
            + 1.0 / (hi * hi);
        diag.push(d.max(1e-300));
        p.push(pi);
        q.push(qi);
    }
    Some(BarrierEval {
        value,
        gradient,
        diag,
        p,
        q,
        objective: f.value,
        power_slack: sp,
        bound_slack: sb,
    })
}

/// Solves `(D + p pᵀ + q qᵀ) x = −g` by Woodbury with a 2×2 capacitance
/// matrix.
fn newton_direction(e: &BarrierEval) -> Vec<f64> {
    let dinv = |v: &[f64]| -> Vec<f64> { v.iter().zip(&e.diag).map(|(a, d)| a / d).collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let neg_g: Vec<f64> = e.gradient.iter().map(|g| -g).collect();
    let y = dinv(&neg_g);
    let dp = dinv(&e.p);
    let dq = dinv(&e.q);
    // capacitance I + Uᵀ D⁻¹ U
    let m11 = 1.0 + dot(&e.p, &dp);
    let m12 = dot(&e.p, &dq);
    let m22 = 1.0 + dot(&e.q, &dq);
    let r1 = dot(&e.p, &y);
    let r2 = dot(&e.q, &y);
    let det = m11 * m22 - m12 * m12;
    let z1 = (m22 * r1 - m12 * r2) / det;
    let z2 = (m11 * r2 - m12 * r1) / det;
    (0..y.len()).map(|i| y[i] - dp[i] * z1 - dq[i] * z2).collect()
}

/// Takes the final full Newton step when it stays strictly feasible and
/// measures the KKT residual there, with multipliers read off the Newton
/// system: `λ_j = (1 + ∇g_jᵀΔ / s_j) / (t s_j)` for every inequality
/// `g_j ≤ b_j` with slack `s_j`.
///
/// The residual is the largest of the Lagrangian gradient, the
/// complementarity products `λ_j s_j` and any negative multiplier.
fn polish_with_dual_estimates(problem: &EmbeddingProblem, k: Vec<f64>, t: f64) -> (Vec<f64>, f64) {
    let e = barrier_eval(problem, &k, t).expect("iterate stays strictly feasible");
    let dir = newton_direction(&e);
    let levels = k.len();
    let ln_r = problem.ln_ratio();
    let c = problem.constraints_unchecked(&k);
    let gp_dir: f64 = c.power.gradient.iter().zip(&dir).map(|(g, d)| g * d).sum();
    let gb_dir: f64 = c.ser_bound.gradient.iter().zip(&dir).map(|(g, d)| g * d).sum();
    let lambda_p = (1.0 + gp_dir / e.power_slack) / (t * e.power_slack);
    let lambda_b = (1.0 + gb_dir / e.bound_slack) / (t * e.bound_slack);
    let mu_lo: Vec<f64> = (0..levels).map(|i| (1.0 - dir[i] / k[i]) / (t * k[i])).collect();
    let mu_hi: Vec<f64> = (0..levels)
        .map(|i| {
            let hi = ln_r - k[i];
            (1.0 + dir[i] / hi) / (t * hi)
        })
        .collect();

    let stepped: Vec<f64> = k.iter().zip(&dir).map(|(x, d)| x + d).collect();
    let k = if barrier_eval(problem, &stepped, t).is_some() {
        stepped
    } else {
        k
    };
    let f = problem.objective_unchecked(&k);
    let c = problem.constraints_unchecked(&k);
    let mut residual: f64 = 0.0;
    for i in 0..levels {
        let r = f.gradient[i] + lambda_p * c.power.gradient[i] + lambda_b * c.ser_bound.gradient[i]
            - mu_lo[i]
            + mu_hi[i];
        residual = residual.max(r.abs());
        residual = residual.max((mu_lo[i] * k[i]).abs()).max((mu_hi[i] * (ln_r - k[i])).abs());
        residual = residual.max(-mu_lo[i]).max(-mu_hi[i]);
    }
    residual = residual
        .max((lambda_p * c.power_slack).abs())
        .max((lambda_b * c.ser_bound_slack).abs())
        .max(-lambda_p)
        .max(-lambda_b);
    (k, residual)
}

/// Log-barrier interior-point solve of the tag design problem.
pub fn solve_embedding(problem: &EmbeddingProblem) -> SolveResult {
    solve_embedding_with(problem, BarrierParams::default())
}

pub fn solve_embedding_with(problem: &EmbeddingProblem, params: BarrierParams) -> SolveResult {
    let Some(mut k) = slater_point(problem) else {
        return SolveResult::infeasible(problem, params);
    };
    let levels = problem.levels();
    let inequality_count = (2 + 2 * levels) as f64;
    let mut t = params.initial_t;
    let mut iterations = 0;
    let mut exhausted = false;

    loop {
        // centering
        loop {
            let e = barrier_eval(problem, &k, t).expect("iterate stays strictly feasible");
            let dir = newton_direction(&e);
            let decrement: f64 = -e.gradient.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>();
            if decrement / 2.0 <= params.centering_tolerance {
                break;
            }
            if iterations >= params.max_newton_steps {
                exhausted = true;
                break;
            }
            iterations += 1;
            let slope = -decrement;
            let mut step = 1.0;
            let slack = 1e-13 * e.value.abs().max(1.0);
            let mut moved = false;
            while step > 1e-14 {
                let trial: Vec<f64> = k.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
                if let Some(te) = barrier_eval(problem, &trial, t) {
                    if te.value <= e.value + 0.25 * step * slope + slack {
                        k = trial;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                // stalled at floating-point resolution of the barrier value
                break;
            }
        }
        if exhausted || inequality_count / t < params.gap_tolerance {
            break;
        }
        t *= params.mu;
    }

    let (k, kkt_residual) = polish_with_dual_estimates(problem, k, t);
    let e = barrier_eval(problem, &k, t).expect("iterate stays strictly feasible");
    let status = if !exhausted && kkt_residual < 1e-6 {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    SolveResult {
        k_opt: k,
        objective: e.objective,
        kkt_residual,
        iterations,
        status,
        duality_gap: inequality_count / t,
        power_slack: e.power_slack,
        ser_bound_slack: e.bound_slack,
        params,
    }
}

/// Minimized tag SER as a function of the power allocation factor
/// `α = E_m / E_tot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSample {
    pub alpha: f64,
    pub tag_ser: f64,
    pub message_ser_upper: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub alpha0: f64,
    pub samples: Vec<AllocationSample>,
    pub alpha_star: f64,
    pub h_star: f64,
    /// Solve at `α*`, `None` when `α* = 1` (no tag budget).
    pub solve: Option<SolveResult>,
    /// The sampled curve decreases then increases.
    pub unimodal: bool,
    /// `α₀` is so close to 1 that no tag power remains.
    pub tag_budget_exhausted: bool,
}

impl AllocationResult {
    pub fn alpha_grid(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.alpha).collect()
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tag_ser).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationParams {
    pub grid_points: usize,
    /// Absolute α tolerance for the α₀ bisection and golden-section
    /// refinement.
    pub alpha_tolerance: f64,
    pub barrier: BarrierParams,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self {
            grid_points: 64,
            alpha_tolerance: 1e-6,
            barrier: BarrierParams::default(),
        }
    }
}

fn check_allocation_config(cfg: &SystemConfig) -> Result<ChiSquaredCdf> {
    let chi = ChiSquaredCdf::new(cfg.antennas)?;
    ensure_finite("noise_variance", cfg.noise_variance)?;
    if cfg.noise_variance <= 0.0 {
        return Err(PlaError::invalid("noise_variance", "must be positive"));
    }
    if cfg.message_levels < 2 {
        return Err(PlaError::invalid("message_levels", "must be at least 2"));
    }
    ensure_finite("total_power", cfg.total_power)?;
    if cfg.total_power <= 0.0 {
        return Err(PlaError::invalid("total_power", "must be positive"));
    }
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0) {
        return Err(PlaError::invalid("delta", "must lie in (0, 1]"));
    }
    Ok(chi)
}

/// Tag-free bound for `E_m = α E_tot`.
fn tag_free_bound_at(chi: &ChiSquaredCdf, cfg: &SystemConfig, alpha: f64) -> Result<f64> {
    let ratio = solve_ratio(cfg.message_levels, alpha * cfg.total_power / cfg.noise_variance)?;
    Ok(tag_free_bound(chi, cfg.message_levels, ratio.ln()))
}

/// Smallest α whose tag-free design meets the bound, by bisection.
pub fn smallest_feasible_alpha(cfg: &SystemConfig, tolerance: f64) -> Result<f64> {
    let chi = check_allocation_config(cfg)?;
    let at_one = tag_free_bound_at(&chi, cfg, 1.0)?;
    if at_one >= cfg.delta {
        return Err(PlaError::DeltaUnreachable {
            delta: cfg.delta,
            min_bound: at_one,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if tag_free_bound_at(&chi, cfg, mid)? < cfg.delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `H(α)`: the optimal tag SER with `E_m = α E_tot` and tag budget
/// `(1 − α) E_tot`.
pub fn evaluate_allocation(
    cfg: &SystemConfig,
    alpha: f64,
    barrier: BarrierParams,
) -> Result<(AllocationSample, Option<SolveResult>)> {
    let message_power = alpha * cfg.total_power;
    let budget = ((1.0 - alpha) * cfg.total_power).max(0.0);
    let base = design_constellation(&SystemConfig {
        message_power,
        ..cfg.clone()
    })?;
    let problem = EmbeddingProblem::new(base, cfg.antennas, budget, cfg.delta)?;
    if budget <= 0.0 {
        let bound = problem.tag_free_bound();
        return Ok((
            AllocationSample {
                alpha,
                tag_ser: 0.5,
                message_ser_upper: bound,
                feasible: bound <= cfg.delta,
            },
            None,
        ));
    }
    let solve = solve_embedding_with(&problem, barrier);
    let sample = match solve.status {
        SolveStatus::Infeasible => AllocationSample {
            alpha,
            tag_ser: 0.5,
            message_ser_upper: problem.tag_free_bound(),
            feasible: false,
        },
        _ => AllocationSample {
            alpha,
            tag_ser: solve.objective,
            message_ser_upper: cfg.delta - solve.ser_bound_slack,
            feasible: true,
        },
    };
    Ok((sample, Some(solve)))
}

fn is_unimodal(values: &[f64]) -> bool {
    let tol = 1e-12;
    let mut rising = false;
    for w in values.windows(2) {
        if w[1] > w[0] + tol {
            rising = true;
        } else if rising && w[1] < w[0] - tol {
            return false;
        }
    }
    true
}

pub fn allocate_power(cfg: &SystemConfig) -> Result<AllocationResult> {
    allocate_power_with(cfg, AllocationParams::default())
}

/// One-dimensional search for the α minimizing `H(α)` on `[α₀, 1]`: a
/// uniform grid, then golden-section refinement between the neighbours of
/// the best grid point.
pub fn allocate_power_with(cfg: &SystemConfig, params: AllocationParams) -> Result<AllocationResult> {
    let alpha0 = smallest_feasible_alpha(cfg, params.alpha_tolerance)?;
    let points = params.grid_points.max(3);
    let mut samples = Vec::with_capacity(points);
    for j in 0..points {
        let alpha = if j + 1 == points {
            1.0
        } else {
            alpha0 + (1.0 - alpha0) * j as f64 / (points - 1) as f64
        };
        samples.push(evaluate_allocation(cfg, alpha, params.barrier)?.0);
    }
    let unimodal = is_unimodal(&samples.iter().map(|s| s.tag_ser).collect::<Vec<_>>());
    let best = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.tag_ser.total_cmp(&b.1.tag_ser))
        .map(|(j, _)| j)
        .unwrap_or(0);

    let tag_budget_exhausted = 1.0 - alpha0 <= params.alpha_tolerance;
    let mut alpha_star = samples[best].alpha;
    let mut h_star = samples[best].tag_ser;
    if !tag_budget_exhausted {
        let lo = samples[best.saturating_sub(1)].alpha;
        let hi = samples[(best + 1).min(points - 1)].alpha;
        let h = |alpha: f64| -> Result<f64> {
            Ok(evaluate_allocation(cfg, alpha, params.barrier)?.0.tag_ser)
        };
        let (a, fa) = golden_section(h, lo, hi, params.alpha_tolerance)?;
        if fa < h_star {
            alpha_star = a;
            h_star = fa;
        }
    }
    let solve = evaluate_allocation(cfg, alpha_star, params.barrier)?.1;
    Ok(AllocationResult {
        alpha0,
        samples,
        alpha_star,
        h_star,
        solve,
        unimodal,
        tag_budget_exhausted,
    })
}

/// Golden-section minimization on `[lo, hi]`; returns the best point seen.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tolerance: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub delta: f64,
    pub min_tag_ser: Option<f64>,
    pub alpha_star: Option<f64>,
    /// Why this δ has no solution, when it has none.
    pub error: Option<String>,
}

/// Optimal tag SER per δ, sorted by δ ascending.
pub fn tradeoff_curve(cfg: &SystemConfig, deltas: &[f64]) -> Result<Vec<TradeoffPoint>> {
    tradeoff_curve_with(cfg, deltas, AllocationParams::default())
}

pub fn tradeoff_curve_with(
    cfg: &SystemConfig,
    deltas: &[f64],
    params: AllocationParams,
) -> Result<Vec<TradeoffPoint>> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted
        .into_iter()
        .map(|delta| {
            let per = SystemConfig { delta, ..cfg.clone() };
            match allocate_power_with(&per, params) {
                Ok(r) => Ok(TradeoffPoint {
                    delta,
                    min_tag_ser: Some(r.h_star),
                    alpha_star: Some(r.alpha_star),
                    error: None,
                }),
                Err(e @ PlaError::DeltaUnreachable { .. }) => Ok(TradeoffPoint {
                    delta,
                    min_tag_ser: None,
                    alpha_star: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_embedding, message_ser_upper, tag_ser_analytic};
    use crate::numerics::RngStream;
    use rand::Rng;

    fn base(levels: usize, em: f64) -> MessageConstellation {
        design_constellation(&SystemConfig {
            message_levels: levels,
            message_power: em,
            total_power: 10.0 * em,
            ..SystemConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn log_ratio_fn_branches_meet() {
        for &x in &[-0.2f64, 0.2] {
            let inside = log_ratio_fn(x * (1.0 - 1e-12));
            let outside = log_ratio_fn(x * (1.0 + 1e-12));
            for j in 0..3 {
                assert!((inside[j] - outside[j]).abs() < 1e-11, "x={x} j={j}");
            }
        }
        let [u, du, d2u] = log_ratio_fn(0.0);
        assert_eq!((u, du, d2u), (1.0, -0.5, 1.0 / 6.0));
    }

    #[test]
    fn log_ratio_fn_derivatives() {
        for &x in &[-5.0, -1.3, -0.15, -0.01, 0.03, 0.19, 0.7, 2.5] {
            let h = 1e-5;
            let [_, du, d2u] = log_ratio_fn(x);
            let fd1 = (log_ratio_fn(x + h)[0] - log_ratio_fn(x - h)[0]) / (2.0 * h);
            let fd2 = (log_ratio_fn(x + h)[1] - log_ratio_fn(x - h)[1]) / (2.0 * h);
            assert!((fd1 - du).abs() < 1e-8, "x={x}");
            assert!((fd2 - d2u).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn objective_matches_embedding_route() {
        let c = base(4, 10.0);
        let p = EmbeddingProblem::new(c.clone(), 128, 5.0, 1e-5).unwrap();
        let mut rng = RngStream::new(31, 0);
        for _ in 0..100 {
            let k: Vec<f64> = (0..4).map(|_| rng.gen_range(0.001..0.999) * c.ln_ratio()).collect();
            let emb = build_embedding(&c, &k).unwrap();
            let obj = p.objective_and_derivatives(&k).unwrap().value;
            assert!((obj - tag_ser_analytic(&emb, 128).unwrap()).abs() < 1e-12);
            let bound = p.constraint_functions(&k).unwrap().ser_bound.value;
            let via_thresholds = message_ser_upper(&emb, 128).unwrap();
            assert!(
                (bound - via_thresholds).abs() < 1e-12 + 1e-9 * via_thresholds,
                "{bound} {via_thresholds}"
            );
        }
    }

    #[test]
    fn objective_limit_at_zero() {
        let chi = ChiSquaredCdf::new(128).unwrap();
        assert!((tag_error_term(&chi, 1e-12)[0] - 1.0).abs() < 1e-6);
        let c = base(4, 10.0);
        let p = EmbeddingProblem::new(c, 128, 5.0, 1e-5).unwrap();
        let e = p.objective_and_derivatives(&[1e-12; 4]).unwrap();
        assert!((e.value - 0.5).abs() < 1e-6);
        let cons = p.constraint_functions(&[1e-15; 4]).unwrap();
        assert!((cons.power_slack - 5.0).abs() < 1e-12);
        assert!((cons.ser_bound.value - p.tag_free_bound()).abs() < 1e-12 * p.tag_free_bound() + 1e-20);
    }

    #[test]
    fn rejects_boundary_points() {
        let c = base(2, 10.0);
        let p = EmbeddingProblem::new(c.clone(), 16, 1.0, 1e-3).unwrap();
        assert!(p.objective_and_derivatives(&[0.0, 0.1]).is_err());
        assert!(p.constraint_functions(&[0.1, c.ln_ratio()]).is_err());
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = RngStream::new(32, 0);
        for &(levels, n) in &[(2usize, 16u32), (2, 128), (4, 16), (4, 128)] {
            let chi = ChiSquaredCdf::new(n).unwrap();
            let c = base(levels, 10.0);
            let ln_r = c.ln_ratio();
            let h = 1e-6 * ln_r;
            for _ in 0..250 {
                let k = rng.gen_range(0.01..0.99) * ln_r;
                let f = tag_error_term(&chi, k);
                let w = bound_term(&chi, k, ln_r);
                let fd = central_difference(|x| tag_error_term(&chi, x)[0], k, h);
                let fd2 = central_difference(|x| tag_error_term(&chi, x)[1], k, h);
                let wd = central_difference(|x| bound_term(&chi, x, ln_r)[0], k, h);
                let wd2 = central_difference(|x| bound_term(&chi, x, ln_r)[1], k, h);
                // skip terms that are at the floor of double precision
                if f[1].abs() > 1e-9 {
                    assert!(rel_close(fd, f[1], 1e-4), "F' N={n} k={k}: {fd} {}", f[1]);
                }
                if f[2].abs() > 1e-9 {
                    assert!(rel_close(fd2, f[2], 1e-4), "F'' N={n} k={k}: {fd2} {}", f[2]);
                }
                if w[1].abs() > 1e-9 {
                    assert!(rel_close(wd, w[1], 1e-4), "W' N={n} k={k}: {wd} {}", w[1]);
                }
                if w[2].abs() > 1e-9 {
                    assert!(rel_close(wd2, w[2], 1e-4), "W'' N={n} k={k}: {wd2} {}", w[2]);
                }
                let closed = bound_term_slope_closed_form(n, k, ln_r);
                assert!(rel_close(closed, w[1], 1e-9), "closed W' {closed} {}", w[1]);
            }
        }
    }

    #[test]
    fn curvature_nonnegative() {
        for &n in &[16u32, 128] {
            let chi = ChiSquaredCdf::new(n).unwrap();
            let c = base(4, 10.0);
            let ln_r = c.ln_ratio();
            for j in 1..1000 {
                let k = ln_r * j as f64 / 1000.0;
                assert!(tag_error_term(&chi, k)[2] >= -1e-9, "F'' N={n} k={k}");
                assert!(bound_term(&chi, k, ln_r)[2] >= -1e-9, "W'' N={n} k={k}");
            }
        }
    }

    #[test]
    fn infeasible_delta_detected() {
        let c = base(4, 10.0);
        let p = EmbeddingProblem::new(c, 128, 5.0, 1e-14).unwrap();
        let r = solve_embedding(&p);
        assert_eq!(r.status, SolveStatus::Infeasible);
        let c = base(4, 1.0);
        let p = EmbeddingProblem::new(c, 16, 5.0, 1e-5).unwrap();
        assert!(p.tag_free_bound() > 1e-5);
        assert_eq!(solve_embedding(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn solve_reaches_kkt() {
        for &(levels, budget, delta) in &[(2usize, 1.0, 1e-5), (4, 2.0, 1e-5), (4, 50.0, 1e-3), (8, 5.0, 1e-2)] {
            let c = base(levels, 10.0);
            let p = EmbeddingProblem::new(c, 128, budget, delta).unwrap();
            let r = solve_embedding(&p);
            assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
            assert!(r.kkt_residual < 1e-6);
            assert!(r.power_slack > -1e-9 && r.ser_bound_slack > -1e-9);
            let emb = build_embedding(&p.base, &r.k_opt).unwrap();
            assert!((tag_ser_analytic(&emb, 128).unwrap() - r.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn larger_budget_never_hurts() {
        let c = base(4, 10.0);
        let mut prev = 1.0;
        for &budget in &[0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0] {
            let p = EmbeddingProblem::new(c.clone(), 128, budget, 1e-5).unwrap();
            let r = solve_embedding(&p);
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!(r.objective <= prev + 1e-9, "{budget}: {} > {prev}", r.objective);
            prev = r.objective;
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| Ok((x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-9).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx < 1e-16);
    }

    #[test]
    fn zero_tag_budget_is_coin_flip() {
        let cfg = SystemConfig {
            total_power: 10.0,
            ..SystemConfig::default()
        };
        let (s, solve) = evaluate_allocation(&cfg, 1.0, BarrierParams::default()).unwrap();
        assert_eq!(s.tag_ser, 0.5);
        assert!(solve.is_none());
    }

    #[test]
    fn allocation_beats_endpoints() {
        let cfg = SystemConfig {
            total_power: 20.0,
            ..SystemConfig::default()
        };
        let r = allocate_power(&cfg).unwrap();
        assert!(r.samples.len() >= 64);
        assert!(r.alpha0 <= r.alpha_star && r.alpha_star <= 1.0);
        let first = r.samples.first().unwrap().tag_ser;
        let last = r.samples.last().unwrap().tag_ser;
        assert!(r.h_star < first && r.h_star < last, "{} {first} {last}", r.h_star);
        assert!(r.unimodal);
        let solve = r.solve.unwrap();
        assert!(solve.power_slack < 1e-6 * cfg.total_power, "{}", solve.power_slack);
    }

    #[test]
    fn unreachable_delta_reported() {
        let cfg = SystemConfig {
            total_power: 0.5,
            ..SystemConfig::default()
        };
        match allocate_power(&cfg) {
            Err(PlaError::DeltaUnreachable { min_bound, .. }) => assert!(min_bound > 1e-5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unimodality_check() {
        assert!(is_unimodal(&[0.5, 0.3, 0.2, 0.25, 0.5]));
        assert!(is_unimodal(&[0.5, 0.4, 0.3]));
        assert!(!is_unimodal(&[0.5, 0.3, 0.4, 0.2, 0.5]));
    }
}
