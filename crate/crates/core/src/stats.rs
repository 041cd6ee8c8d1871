//! Statistical tests: Anderson-Darling normality, one-way ANOVA, Tukey HSD
//! (Tukey-Kramer for unequal groups) and Student / Welch t-tests.
//!
//! Distribution functions are computed in-crate: t and F through the
//! regularized incomplete beta function, the normal CDF through the
//! regularized incomplete gamma function, and the studentized range
//! through Gauss-Legendre quadrature.

use thiserror::Error;

use crate::scalar::{mean, Real};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("need at least 2 groups")]
    TooFewGroups,
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("alpha must be in (0, 1)")]
    BadAlpha,
    #[error("non-finite observation")]
    NonFinite,
}

const MAX_ITER: usize = 500;

fn eps<T: Real>() -> T {
    T::epsilon() * T::lit(4.0)
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma<T: Real>(x: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < T::lit(0.5) {
        // Reflection.
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::lit(COEF[0]);
    let t = x + T::lit(7.5);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a = a + T::lit(c) / (x + T::from_count(i));
    }
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (x + T::lit(0.5)) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = T::from_count(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() < eps() {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta<T: Real>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn inc_gamma<T: Real>(a: T, x: T) -> (T, T) {
    if x <= T::zero() {
        return (T::zero(), T::one());
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + T::one() {
        let mut ap = a;
        let mut del = T::one() / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap = ap + T::one();
            del = del * x / ap;
            sum = sum + del;
            if del.abs() < sum.abs() * eps() {
                break;
            }
        }
        let p = sum * ln_front.exp();
        (p, T::one() - p)
    } else {
        let tiny = T::min_positive_value() / T::epsilon();
        let mut b = x + T::one() - a;
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -T::from_count(i) * (T::from_count(i) - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = T::one() / d;
            let del = d * c;
            h = h * del;
            if (del - T::one()).abs() < eps() {
                break;
            }
        }
        let q = ln_front.exp() * h;
        (T::one() - q, q)
    }
}

pub fn normal_pdf<T: Real>(x: T) -> T {
    (-x * x / T::lit(2.0)).exp() / (T::lit(2.0) * T::PI()).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let (_, q) = inc_gamma(T::lit(0.5), x * x / T::lit(2.0));
    let tail = q / T::lit(2.0);
    if x >= T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

/// Standard normal quantile by safeguarded Newton iteration.
pub fn normal_quantile<T: Real>(p: T) -> T {
    if p <= T::zero() {
        return T::neg_infinity();
    }
    if p >= T::one() {
        return T::infinity();
    }
    let (mut lo, mut hi) = (T::lit(-40.0), T::lit(40.0));
    let mut x = T::zero();
    for _ in 0..200 {
        let f = normal_cdf(x) - p;
        if f > T::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let d = normal_pdf(x);
        let mut next = if d > T::zero() { x - f / d } else { (lo + hi) / T::lit(2.0) };
        if !(next > lo && next < hi) {
            next = (lo + hi) / T::lit(2.0);
        }
        if (next - x).abs() <= T::epsilon() * T::lit(8.0) * (T::one() + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Student t CDF.
pub fn t_cdf<T: Real>(t: T, df: T) -> T {
    let x = df / (df + t * t);
    let tail = inc_beta(df / T::lit(2.0), T::lit(0.5), x) / T::lit(2.0);
    if t >= T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p<T: Real>(t: T, df: T) -> T {
    if t.is_infinite() {
        return T::zero();
    }
    inc_beta(df / T::lit(2.0), T::lit(0.5), df / (df + t * t)).min(T::one())
}

/// F distribution CDF.
pub fn f_cdf<T: Real>(f: T, d1: T, d2: T) -> T {
    if f <= T::zero() {
        return T::zero();
    }
    inc_beta(d1 / T::lit(2.0), d2 / T::lit(2.0), d1 * f / (d1 * f + d2))
}

/// Upper tail `P(F > f)`.
pub fn f_sf<T: Real>(f: T, d1: T, d2: T) -> T {
    if f <= T::zero() {
        return T::one();
    }
    if f.is_infinite() {
        return T::zero();
    }
    inc_beta(d2 / T::lit(2.0), d1 / T::lit(2.0), d2 / (d2 + d1 * f))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre<T: Real>(n: usize) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(n);
    let nn = T::from_count(n);
    for i in 0..n {
        let mut z = (T::PI() * (T::from_count(i) + T::lit(0.75)) / (nn + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (mut p0, mut p1) = (T::one(), z);
            for j in 2..=n {
                let jj = T::from_count(j);
                let p2 = ((T::lit(2.0) * jj - T::one()) * z * p1 - (jj - T::one()) * p0) / jj;
                p0 = p1;
                p1 = p2;
            }
            dp = nn * (z * p1 - p0) / (z * z - T::one());
            let dz = p1 / dp;
            z = z - dz;
            if dz.abs() < T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        out.push((z, T::lit(2.0) / ((T::one() - z * z) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre rule over `[a, b]`.
fn composite_nodes<T: Real>(a: T, b: T, panels: usize, rule: &[(T, T)]) -> Vec<(T, T)> {
    let h = (b - a) / T::from_count(panels);
    let mut out = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let mid = a + h * (T::from_count(p) + T::lit(0.5));
        for &(x, w) in rule {
            out.push((mid + x * h / T::lit(2.0), w * h / T::lit(2.0)));
        }
    }
    out
}

/// CDF of the range of `k` independent standard normals,
/// `k * integral phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz`.
fn normal_range_cdf<T: Real>(w: T, k: usize, inner: &[(T, T, T, T)]) -> T {
    if w <= T::zero() {
        return T::zero();
    }
    let km1 = (k - 1) as i32;
    let s: T = inner
        .iter()
        .map(|&(z, wt, pdf, cdf)| wt * pdf * (cdf - normal_cdf(z - w)).max(T::zero()).powi(km1))
        .sum();
    (T::from_count(k) * s).min(T::one())
}

/// CDF of the studentized range distribution with `k` groups and `df`
/// error degrees of freedom: the normal-range CDF at `q * s` averaged over
/// the density of `s = sqrt(chi2_df / df)`.
pub fn studentized_range_cdf<T: Real>(q: T, k: usize, df: T) -> T {
    if q <= T::zero() || k < 2 {
        return T::zero();
    }
    let rule16 = gauss_legendre::<T>(16);
    let inner: Vec<(T, T, T, T)> = composite_nodes(T::lit(-8.5), T::lit(8.5), 10, &rule16)
        .into_iter()
        .map(|(z, w)| (z, w, normal_pdf(z), normal_cdf(z)))
        .collect();
    if df.is_infinite() || df > T::lit(1e7) {
        return normal_range_cdf(q, k, &inner);
    }
    let sigma = T::one() / (T::lit(2.0) * df).sqrt();
    let lo = (T::one() - T::lit(12.0) * sigma).max(T::zero());
    let hi = T::one() + T::lit(12.0) * sigma + T::lit(8.0) / df;
    let half = df / T::lit(2.0);
    let ln_norm = T::LN_2() + half * df.ln() - half * T::LN_2() - ln_gamma(half);
    let total: T = composite_nodes(lo, hi, 16, &rule16)
        .into_iter()
        .map(|(s, w)| {
            let dens = (ln_norm + (df - T::one()) * s.ln() - df * s * s / T::lit(2.0)).exp();
            w * dens * normal_range_cdf(q * s, k, &inner)
        })
        .sum();
    total.max(T::zero()).min(T::one())
}

/// Upper-tail p-value of a studentized range statistic.
pub fn studentized_range_p<T: Real>(q: T, k: usize, df: T) -> T {
    (T::one() - studentized_range_cdf(q, k, df)).max(T::zero()).min(T::one())
}

/// Critical value `q` with upper-tail probability `alpha`.
pub fn studentized_range_quantile<T: Real>(alpha: T, k: usize, df: T) -> T {
    let target = T::one() - alpha;
    let (mut lo, mut hi) = (T::zero(), T::lit(10.0));
    while studentized_range_cdf(hi, k, df) < target {
        hi = hi * T::lit(2.0);
    }
    let (mut flo, mut fhi) = (-target, studentized_range_cdf(hi, k, df) - target);
    // Illinois variant of regula falsi.
    let mut side = 0i8;
    for _ in 0..60 {
        let x = hi - fhi * (hi - lo) / (fhi - flo);
        let fx = studentized_range_cdf(x, k, df) - target;
        if fx.abs() < T::lit(1e-10) || (hi - lo) < T::lit(1e-9) {
            return x;
        }
        if (fx > T::zero()) == (fhi > T::zero()) {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo = flo / T::lit(2.0);
            }
            side = 1;
        } else {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi = fhi / T::lit(2.0);
            }
            side = -1;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Anderson-Darling composite-normal test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonDarling<T> {
    pub a2: T,
    /// `A^2 (1 + 0.75/n + 2.25/n^2)`.
    pub a2_adjusted: T,
    pub reject_at_0_05: bool,
}

pub const AD_CRITICAL_0_05: f64 = 0.752;

/// Anderson-Darling test of normality with mean and variance estimated
/// from the sample.
pub fn anderson_darling_normal<T: Real>(sample: &[T]) -> Result<AndersonDarling<T>, StatsError> {
    let n = sample.len();
    if n < 8 {
        return Err(StatsError::TooFew { need: 8, got: n });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(sample).unwrap();
    let var = crate::scalar::sample_variance(sample).unwrap();
    if !(var > T::zero()) {
        return Err(StatsError::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut z: Vec<T> = sample.iter().map(|&x| (x - m) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nn = T::from_count(n);
    let mut s = T::zero();
    for i in 0..n {
        let coef = T::from_count(2 * i + 1);
        // ln(1 - Phi(z)) = ln Phi(-z), accurate in the upper tail.
        s = s + coef * (normal_cdf(z[i]).ln() + normal_cdf(-z[n - 1 - i]).ln());
    }
    let a2 = -nn - s / nn;
    let a2_adjusted = a2 * (T::one() + T::lit(0.75) / nn + T::lit(2.25) / (nn * nn));
    Ok(AndersonDarling {
        a2,
        a2_adjusted,
        reject_at_0_05: a2_adjusted > T::lit(AD_CRITICAL_0_05),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult<T> {
    pub f_stat: T,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: T,
    pub eta_squared: T,
    pub ms_within: T,
}

fn check_groups<T: Real, S: AsRef<[T]>>(groups: &[S]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    for g in groups {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: g.len() });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    Ok(())
}

/// One-way ANOVA. With zero within-group variance and non-zero
/// between-group variance F is reported as +inf with p = 0.
pub fn one_way_anova<T: Real, S: AsRef<[T]>>(groups: &[S]) -> Result<AnovaResult<T>, StatsError> {
    check_groups(groups)?;
    let all: Vec<T> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let grand = mean(&all).unwrap();
    let mut ssb = T::zero();
    let mut ssw = T::zero();
    for g in groups {
        let g = g.as_ref();
        let m = mean(g).unwrap();
        ssb = ssb + T::from_count(g.len()) * (m - grand) * (m - grand);
        ssw = ssw + g.iter().map(|&x| (x - m) * (x - m)).sum::<T>();
    }
    let sst = ssb + ssw;
    if !(sst > T::zero()) {
        return Err(StatsError::ZeroVariance);
    }
    let dfb = groups.len() - 1;
    let dfw = all.len() - groups.len();
    let msb = ssb / T::from_count(dfb);
    let msw = ssw / T::from_count(dfw);
    let (f, p) = if msw > T::zero() {
        let f = msb / msw;
        (f, f_sf(f, T::from_count(dfb), T::from_count(dfw)))
    } else {
        (T::infinity(), T::zero())
    };
    Ok(AnovaResult {
        f_stat: f,
        df_between: dfb,
        df_within: dfw,
        p_value: p,
        eta_squared: ssb / sst,
        ms_within: msw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TukeyPair<T> {
    pub i: usize,
    pub j: usize,
    /// `mean_i - mean_j`.
    pub mean_diff: T,
    pub q_stat: T,
    pub p_value: T,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyResult<T> {
    pub k: usize,
    pub df_within: usize,
    pub alpha: T,
    pub pairs: Vec<TukeyPair<T>>,
}

impl<T: Real> TukeyResult<T> {
    pub fn pair(&self, i: usize, j: usize) -> Option<&TukeyPair<T>> {
        self.pairs
            .iter()
            .find(|p| (p.i, p.j) == (i, j) || (p.i, p.j) == (j, i))
    }
}

/// Tukey HSD post-hoc comparisons (Tukey-Kramer standard errors).
pub fn tukey_hsd<T: Real, S: AsRef<[T]>>(groups: &[S], alpha: T) -> Result<TukeyResult<T>, StatsError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(StatsError::BadAlpha);
    }
    let anova = one_way_anova(groups)?;
    let k = groups.len();
    let df = T::from_count(anova.df_within);
    let means: Vec<T> = groups.iter().map(|g| mean(g.as_ref()).unwrap()).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (ni, nj) = (
                T::from_count(groups[i].as_ref().len()),
                T::from_count(groups[j].as_ref().len()),
            );
            let diff = means[i] - means[j];
            let se = (anova.ms_within / T::lit(2.0) * (T::one() / ni + T::one() / nj)).sqrt();
            let q = if se > T::zero() {
                diff.abs() / se
            } else if diff == T::zero() {
                T::zero()
            } else {
                T::infinity()
            };
            let p = if q.is_infinite() {
                T::zero()
            } else {
                studentized_range_p(q, k, df)
            };
            pairs.push(TukeyPair {
                i,
                j,
                mean_diff: diff,
                q_stat: q,
                p_value: p,
                significant: p < alpha,
            });
        }
    }
    Ok(TukeyResult {
        k,
        df_within: anova.df_within,
        alpha,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TTestVariant {
    /// Equal-variance Student test.
    #[default]
    Pooled,
    /// Welch-Satterthwaite test.
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult<T> {
    pub t_stat: T,
    pub df: T,
    pub p_value: T,
    /// `(mean_a - mean_b) / pooled_sd`.
    pub cohens_d: T,
}

/// Two-sample t-test with Cohen's d from the pooled standard deviation.
pub fn t_test<T: Real>(a: &[T], b: &[T], variant: TTestVariant) -> Result<TTestResult<T>, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: s.len() });
        }
    }
    let (na, nb) = (T::from_count(a.len()), T::from_count(b.len()));
    let (ma, mb) = (mean(a).unwrap(), mean(b).unwrap());
    let va = crate::scalar::sample_variance(a).unwrap();
    let vb = crate::scalar::sample_variance(b).unwrap();
    let pooled = ((na - T::one()) * va + (nb - T::one()) * vb) / (na + nb - T::lit(2.0));
    if !(pooled > T::zero()) {
        return Err(StatsError::ZeroVariance);
    }
    let diff = ma - mb;
    let (t, df) = match variant {
        TTestVariant::Pooled => (
            diff / (pooled * (T::one() / na + T::one() / nb)).sqrt(),
            na + nb - T::lit(2.0),
        ),
        TTestVariant::Welch => {
            let (sa, sb) = (va / na, vb / nb);
            let df = (sa + sb) * (sa + sb)
                / (sa * sa / (na - T::one()) + sb * sb / (nb - T::one()));
            (diff / (sa + sb).sqrt(), df)
        }
    };
    Ok(TTestResult {
        t_stat: t,
        df,
        p_value: t_two_sided_p(t, df),
        cohens_d: diff / pooled.sqrt(),
    })
}
