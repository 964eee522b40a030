//! Exponent calculus of the cyclic system.
//!
//! Component 1 is forced by `|u_k|^{p_1}` and component `l` by `|u_{l-1}|^{p_l}`.
//! Everything here is a pure function of [`SystemParams`]: the vector `gamma`
//! solving `(P - I) gamma = 1`, the supercritical/subcritical split against
//! `n / (2 sigma)`, the loss-of-decay sequence, the `alpha`/`beta` sequences of
//! the lifespan lower bound, predicted decay rates and the lifespan exponent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for calling `max gamma == n / (2 sigma)` critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

/// Default value of the small loss-of-decay constant.
pub const DEFAULT_EPS: f64 = 0.01;

/// Largest component count accepted by the dense solver.
pub const MAX_COMPONENTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Space dimension.
    pub n: usize,
    /// Fractional order, `sigma >= 1`.
    pub sigma: f64,
    /// Nonlinearity exponents `p_1..p_k`; `k = p.len()`.
    pub p: Vec<f64>,
}

impl SystemParams {
    pub fn new(n: usize, sigma: f64, p: Vec<f64>) -> Result<Self> {
        let params = SystemParams { n, sigma, p };
        params.validate()?;
        Ok(params)
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    /// `n / (2 sigma)`, the threshold `max gamma` is compared against.
    pub fn threshold(&self) -> f64 {
        self.n as f64 / (2.0 * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("dimension n must be >= 1".into()));
        }
        if !self.sigma.is_finite() || self.sigma < 1.0 {
            return Err(Error::InvalidParams(format!(
                "sigma must be a finite number >= 1, got {}",
                self.sigma
            )));
        }
        if self.p.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least k = 2 components, got {}",
                self.p.len()
            )));
        }
        if self.p.len() > MAX_COMPONENTS {
            return Err(Error::InvalidParams(format!(
                "at most {MAX_COMPONENTS} components supported, got {}",
                self.p.len()
            )));
        }
        for (l, &p) in self.p.iter().enumerate() {
            if !p.is_finite() || p <= 1.0 {
                return Err(Error::SingularSystem(format!(
                    "p_{} = {p} must be > 1 (det(P - I) = +-(p_1...p_k - 1) degenerates)",
                    l + 1
                )));
            }
        }
        Ok(())
    }

    /// Cyclic relabeling: component `j` of the result is component
    /// `(j + shift) mod k` of `self`. The coupling structure is preserved.
    pub fn rotated(&self, shift: usize) -> SystemParams {
        let k = self.k();
        SystemParams {
            n: self.n,
            sigma: self.sigma,
            p: (0..k).map(|j| self.p[(j + shift) % k]).collect(),
        }
    }

    /// Relabeling that moves the (first) maximal `gamma` component to the last
    /// slot; no relabeling when the last component already ties the maximum.
    pub fn canonical(&self) -> Result<(SystemParams, usize)> {
        let gamma = compute_gamma(self)?;
        let k = self.k();
        let max = gamma.max();
        let shift = if gamma.gamma[k - 1] >= max - CRITICAL_TOLERANCE * max.abs().max(1.0) {
            0
        } else {
            (gamma.argmax + 1) % k
        };
        Ok((self.rotated(shift), shift))
    }
}

/// Maps a vector indexed in a rotated labeling back to the original labels.
pub fn unrotate<T: Clone>(values: &[T], shift: usize) -> Vec<T> {
    let k = values.len();
    let mut out = values.to_vec();
    for (j, v) in values.iter().enumerate() {
        out[(j + shift) % k] = v.clone();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaVector {
    pub gamma: Vec<f64>,
    /// Zero-based index of the first maximal entry.
    pub argmax: usize,
    /// `||(P - I) gamma - 1||_inf / (||P - I||_inf ||gamma||_inf + 1)`.
    pub residual: f64,
}

impl GammaVector {
    pub fn max(&self) -> f64 {
        self.gamma[self.argmax]
    }
}

/// Dense `P - I`, row-major.
fn coupling_matrix(params: &SystemParams) -> Vec<f64> {
    let k = params.k();
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = -1.0;
    }
    m[k - 1] += params.p[0];
    for l in 1..k {
        m[l * k + (l - 1)] += params.p[l];
    }
    m
}

/// LU with partial pivoting, in place.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))
            .unwrap_or(col);
        if a[pivot * k + col].abs() < f64::MIN_POSITIVE {
            return Err(Error::SingularSystem("zero pivot in P - I".into()));
        }
        if pivot != col {
            for j in 0..k {
                a.swap(col * k + j, pivot * k + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * k + col];
        for i in col + 1..k {
            let f = a[i * k + col] / d;
            if f == 0.0 {
                continue;
            }
            a[i * k + col] = f;
            for j in col + 1..k {
                a[i * k + j] -= f * a[col * k + j];
            }
            b[i] -= f * b[col];
        }
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= a[i * k + j] * b[j];
        }
        b[i] = s / a[i * k + i];
    }
    Ok(b)
}

pub fn compute_gamma(params: &SystemParams) -> Result<GammaVector> {
    params.validate()?;
    let k = params.k();
    let m = coupling_matrix(params);
    let gamma = lu_solve(m.clone(), vec![1.0; k])?;

    let mut res: f64 = 0.0;
    let mut norm_m: f64 = 0.0;
    for i in 0..k {
        let row = &m[i * k..(i + 1) * k];
        let r: f64 = row.iter().zip(&gamma).map(|(a, g)| a * g).sum::<f64>() - 1.0;
        res = res.max(r.abs());
        norm_m = norm_m.max(row.iter().map(|a| a.abs()).sum());
    }
    let norm_g = gamma.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
    let residual = res / (norm_m * norm_g + 1.0);

    let mut argmax = 0;
    for (i, &g) in gamma.iter().enumerate() {
        if g > gamma[argmax] {
            argmax = i;
        }
    }
    Ok(GammaVector {
        gamma,
        argmax,
        residual,
    })
}

/// `(1 + p_k + p_{k-1} p_k + ... + p_2...p_k) / (p_1...p_k - 1)`: the last
/// component of `gamma`.
pub fn gamma_max_closed_form(params: &SystemParams) -> Result<f64> {
    params.validate()?;
    let k = params.k();
    let mut tail_product = 1.0;
    let mut numerator = 1.0;
    for l in (1..k).rev() {
        tail_product *= params.p[l];
        numerator += tail_product;
    }
    let full_product = tail_product * params.p[0];
    Ok(numerator / (full_product - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Supercritical,
    Critical,
    Subcritical,
}

pub fn classify(params: &SystemParams) -> Result<Classification> {
    classify_with_tolerance(params, CRITICAL_TOLERANCE)
}

pub fn classify_with_tolerance(params: &SystemParams, tolerance: f64) -> Result<Classification> {
    let gamma_max = compute_gamma(params)?.max();
    Ok(classify_value(gamma_max, params.threshold(), tolerance))
}

fn classify_value(gamma_max: f64, threshold: f64, tolerance: f64) -> Classification {
    let diff = gamma_max - threshold;
    if diff.abs() <= tolerance {
        Classification::Critical
    } else if diff < 0.0 {
        Classification::Supercritical
    } else {
        Classification::Subcritical
    }
}

/// Hypotheses of the global existence result and of the lifespan bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    /// `p_1 <= 1 + 2 sigma / n`.
    pub p1_bound: bool,
    /// `(p_1...p_l - 1) / (1 + p_l + ... + p_2...p_l) <= 2 sigma / n` for `l = 2..k-1`.
    pub intermediate_bounds: bool,
    /// `n <= 2 sigma`.
    pub low_dimension: bool,
    /// Every `p_l >= 2`.
    pub p_at_least_two: bool,
    /// `max gamma < n / (2 sigma)`.
    pub supercritical_gamma: bool,
    /// `max gamma > n / (2 sigma)`: blow-up condition.
    pub subcritical_gamma: bool,
    /// `2 <= p_l` with `n <= 2 sigma`: admissible range for the lifespan lower bound.
    pub lifespan_lower_bound: bool,
}

impl ConditionFlags {
    /// All hypotheses of the global existence result hold.
    pub fn global_existence(&self) -> bool {
        self.unmet_global().is_empty()
    }

    pub fn unmet_global(&self) -> Vec<String> {
        let checks = [
            (self.p1_bound, "p_1 <= 1 + 2 sigma / n"),
            (
                self.intermediate_bounds,
                "intermediate product bounds for l = 2..k-1",
            ),
            (self.low_dimension, "n <= 2 sigma"),
            (self.p_at_least_two, "p_l >= 2"),
            (self.supercritical_gamma, "max gamma < n / (2 sigma)"),
        ];
        checks
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, name)| name.to_string())
            .collect()
    }
}

/// `S_l = 1 + p_l + p_{l-1} p_l + ... + p_2...p_l` and `p_1...p_l`, for `l = 1..k`.
fn partial_sums(p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sums = Vec::with_capacity(p.len());
    let mut products = Vec::with_capacity(p.len());
    let mut s = 1.0;
    let mut prod = p[0];
    sums.push(s);
    products.push(prod);
    for &pl in &p[1..] {
        s = 1.0 + pl * s;
        prod *= pl;
        sums.push(s);
        products.push(prod);
    }
    (sums, products)
}

/// Evaluated in the canonical labeling (maximal `gamma` last).
pub fn check_global_conditions(params: &SystemParams) -> Result<ConditionFlags> {
    let (canon, _) = params.canonical()?;
    let gamma_max = compute_gamma(&canon)?.max();
    let n = canon.n as f64;
    let two_sigma = 2.0 * canon.sigma;
    let k = canon.k();
    let (sums, products) = partial_sums(&canon.p);

    let p1_bound = canon.p[0] <= 1.0 + two_sigma / n;
    let intermediate_bounds = (1..k - 1).all(|l| (products[l] - 1.0) / sums[l] <= two_sigma / n);
    let low_dimension = n <= two_sigma;
    let p_at_least_two = canon.p.iter().all(|&p| p >= 2.0);
    let threshold = canon.threshold();
    Ok(ConditionFlags {
        p1_bound,
        intermediate_bounds,
        low_dimension,
        p_at_least_two,
        supercritical_gamma: gamma_max < threshold,
        subcritical_gamma: gamma_max > threshold,
        lifespan_lower_bound: p_at_least_two && low_dimension,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossOfDecay {
    /// `eps_1..eps_k` from the recursion.
    pub recursive: Vec<f64>,
    /// Same values from the expanded product form.
    pub closed_form: Vec<f64>,
}

/// Loss-of-decay constants `eps_1..eps_k` for the labeling given (`eps_k = 0`).
pub fn loss_of_decay_sequence(params: &SystemParams, eps: f64) -> Result<LossOfDecay> {
    params.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParams(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let c = params.threshold();
    let k = params.k();
    let p = &params.p;

    let mut recursive = vec![0.0; k];
    if k > 1 {
        recursive[0] = 1.0 - c * (p[0] - 1.0) + eps;
        for l in 1..k - 1 {
            recursive[l] = 1.0 - c * (p[l] - 1.0) + p[l] * recursive[l - 1];
        }
    }

    let (sums, products) = partial_sums(p);
    let mut closed_form = vec![0.0; k];
    let mut eps_weight = 1.0;
    for l in 0..k - 1 {
        if l > 0 {
            eps_weight *= p[l];
        }
        closed_form[l] = sums[l] - c * (products[l] - 1.0) + eps_weight * eps;
        let scale = 1.0_f64
            .max(sums[l])
            .max(c * products[l])
            .max(eps_weight * eps);
        if (closed_form[l] - recursive[l]).abs() > 1e-12 * scale {
            return Err(Error::Internal(format!(
                "eps_{} recursion {} disagrees with closed form {}",
                l + 1,
                recursive[l],
                closed_form[l]
            )));
        }
    }
    Ok(LossOfDecay {
        recursive,
        closed_form,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    /// `alpha_1..alpha_{k-1}`.
    pub alpha: Vec<f64>,
    /// `beta_1..beta_k`.
    pub beta: Vec<f64>,
}

/// Weights of the lifespan lower-bound spaces, using `gamma_k` of the labeling given.
pub fn alpha_beta_sequences(params: &SystemParams) -> Result<AlphaBeta> {
    let gamma = compute_gamma(params)?;
    let k = params.k();
    let gk = gamma.gamma[k - 1];
    let c = params.threshold();
    let p = &params.p;

    let mut alpha = Vec::with_capacity(k - 1);
    alpha.push(1.0 - (p[0] - 1.0) * gk);
    for l in 1..k - 1 {
        let prev = alpha[l - 1];
        alpha.push(1.0 - (p[l] - 1.0) * gk + p[l] * prev);
    }

    let mut beta = Vec::with_capacity(k);
    beta.push(1.0 - c * (p[0] - 1.0) - alpha[0]);
    for &pl in &p[1..] {
        beta.push(-c * (pl - 1.0) + (pl - 1.0) * gk);
    }

    for (l, (&b, &pl)) in beta.iter().zip(p).enumerate() {
        let factored = (pl - 1.0) * (gk - c);
        let scale = 1.0_f64.max((pl - 1.0) * gk.abs().max(c));
        if (b - factored).abs() > 1e-12 * scale {
            return Err(Error::Internal(format!(
                "beta_{} = {b} differs from (p - 1)(gamma_k - n/2sigma) = {factored}",
                l + 1
            )));
        }
    }
    Ok(AlphaBeta { alpha, beta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedDecay {
    /// Exponent of `||u_l(t)||_{L^2}`, original labels.
    pub l2: Vec<f64>,
    /// Exponent of `|| |D|^sigma u_l(t) ||_{L^2}`, original labels.
    pub hsigma: Vec<f64>,
}

pub fn predicted_decay(params: &SystemParams, eps: f64) -> Result<PredictedDecay> {
    let flags = check_global_conditions(params)?;
    let unmet = flags.unmet_global();
    if !unmet.is_empty() {
        return Err(Error::ConditionsUnmet(unmet));
    }
    let (canon, shift) = params.canonical()?;
    let loss = unrotate(&loss_of_decay_sequence(&canon, eps)?.recursive, shift);
    let base = -params.threshold() / 2.0;
    Ok(PredictedDecay {
        l2: loss.iter().map(|e| base + e).collect(),
        hsigma: loss.iter().map(|e| base - 0.5 + e).collect(),
    })
}

/// Exponent `-1 / (max gamma - n / (2 sigma))` of the lifespan `T ~ eps^exponent`.
pub fn lifespan_exponent(params: &SystemParams) -> Result<f64> {
    let gamma_max = compute_gamma(params)?.max();
    let threshold = params.threshold();
    match classify_value(gamma_max, threshold, CRITICAL_TOLERANCE) {
        Classification::Subcritical => Ok(-1.0 / (gamma_max - threshold)),
        _ => Err(Error::NotSubcritical {
            gamma_max,
            threshold,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnTheta {
    pub theta: f64,
    /// `a / s <= theta <= 1`.
    pub valid: bool,
}

/// Interpolation exponent of the fractional Gagliardo-Nirenberg inequality
/// `||u||_{H^a_q} <= C ||u||_{L^q1}^(1 - theta) ||u||_{H^s_q2}^theta`.
pub fn gn_theta(q: f64, q1: f64, q2: f64, a: f64, s: f64, n: usize) -> Result<GnTheta> {
    for (name, v) in [("q", q), ("q1", q1), ("q2", q2)] {
        if !(v.is_finite() && v > 1.0) {
            return Err(Error::DomainError(format!(
                "{name} must lie in (1, inf), got {v}"
            )));
        }
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::DomainError(format!("s must be positive, got {s}")));
    }
    if !(a >= 0.0 && a < s) {
        return Err(Error::DomainError(format!(
            "a must lie in [0, s), got a = {a}, s = {s}"
        )));
    }
    if n == 0 {
        return Err(Error::DomainError("n must be >= 1".into()));
    }
    let n = n as f64;
    let numerator = 1.0 / q1 - 1.0 / q + a / n;
    let denominator = 1.0 / q1 - 1.0 / q2 + s / n;
    if denominator == 0.0 {
        return Err(Error::DomainError("theta denominator vanishes".into()));
    }
    let theta = numerator / denominator;
    Ok(GnTheta {
        theta,
        valid: a / s <= theta && theta <= 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExponentOptions {
    pub eps: f64,
    pub critical_tolerance: f64,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        ExponentOptions {
            eps: DEFAULT_EPS,
            critical_tolerance: CRITICAL_TOLERANCE,
        }
    }
}

/// Everything the exponent calculus says about one parameter set.
///
/// Sequences (`epsilon_seq`, `alpha_seq`, `beta_seq`, `canonical_p`) are in the
/// canonical labeling where the maximal `gamma` sits last; component
/// `j` there is original component `(j + canonical_shift) mod k`. The decay
/// exponents are reported in the original labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub params: SystemParams,
    pub eps: f64,
    pub gamma: GammaVector,
    pub gamma_max: f64,
    pub threshold: f64,
    pub classification: Classification,
    pub canonical_shift: usize,
    pub canonical_p: Vec<f64>,
    pub epsilon_seq: Vec<f64>,
    pub alpha_seq: Vec<f64>,
    pub beta_seq: Vec<f64>,
    pub decay_l2: Option<Vec<f64>>,
    pub decay_hsigma: Option<Vec<f64>>,
    pub lifespan_exponent: Option<f64>,
    pub conditions: ConditionFlags,
    pub notes: Vec<String>,
}

impl ExponentReport {
    pub fn build(params: &SystemParams, options: ExponentOptions) -> Result<Self> {
        let gamma = compute_gamma(params)?;
        let gamma_max = gamma.max();
        let threshold = params.threshold();
        let classification = classify_value(gamma_max, threshold, options.critical_tolerance);
        let (canon, shift) = params.canonical()?;
        let loss = loss_of_decay_sequence(&canon, options.eps)?;
        let ab = alpha_beta_sequences(&canon)?;
        let conditions = check_global_conditions(params)?;

        let mut notes = Vec::new();
        if shift != 0 {
            notes.push(format!(
                "maximal gamma attained by component {}; sequences use the cyclic relabeling with shift {shift}",
                gamma.argmax + 1
            ));
        }
        if classification == Classification::Critical {
            notes.push(
                "critical case max gamma = n/(2 sigma): neither global existence nor blow-up is established"
                    .into(),
            );
        }

        let (decay_l2, decay_hsigma) = if conditions.global_existence() {
            let decay = predicted_decay(params, options.eps)?;
            let k = canon.k();
            for (l, e) in loss.recursive[..k - 1].iter().enumerate() {
                if *e <= 0.0 {
                    notes.push(format!("eps_{} = {e} is not positive", l + 1));
                }
            }
            // -(n/2sigma)(p_k - 1) + p_k eps_{k-1} < -1 is what eps must not spoil.
            let pk = canon.p[k - 1];
            let margin = -threshold * (pk - 1.0) + pk * loss.recursive[k - 2];
            if margin >= -1.0 {
                notes.push(format!(
                    "eps = {} is too large: -(n/2sigma)(p_k - 1) + p_k eps_(k-1) = {margin} is not < -1",
                    options.eps
                ));
            }
            (Some(decay.l2), Some(decay.hsigma))
        } else {
            (None, None)
        };

        let lifespan_exponent = match classification {
            Classification::Subcritical => Some(-1.0 / (gamma_max - threshold)),
            _ => None,
        };

        Ok(ExponentReport {
            params: params.clone(),
            eps: options.eps,
            gamma,
            gamma_max,
            threshold,
            classification,
            canonical_shift: shift,
            canonical_p: canon.p.clone(),
            epsilon_seq: loss.recursive,
            alpha_seq: ab.alpha,
            beta_seq: ab.beta,
            decay_l2,
            decay_hsigma,
            lifespan_exponent,
            conditions,
            notes,
        })
    }

    /// Loss-of-decay constants in the original labels.
    pub fn epsilon_original(&self) -> Vec<f64> {
        unrotate(&self.epsilon_seq, self.canonical_shift)
    }
}
