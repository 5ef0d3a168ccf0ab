//! Additive Holt-Winters forecasting (one or two seasonal factors) and
//! EWMA.
//!
//! Every state update is affine in the observed series, so states can be
//! scaled, added and subtracted: the state fitted on a sum of series is the
//! sum of the states fitted on each part. Heavy-hitter split and merge rely
//! on this to move forecasts around the hierarchy without refitting.
//!
//! ```text
//! L[t] = a (T[t] - S[t-v]) + (1 - a)(L[t-1] + B[t-1])
//! B[t] = b (L[t] - L[t-1]) + (1 - b) B[t-1]
//! S[t] = g (T[t] - L[t])   + (1 - g) S[t-v]
//! G[t] = L[t-1] + B[t-1] + S[t-v]
//! ```
//!
//! With two periods the seasonal term is `xi * S_day + (1 - xi) * S_week`
//! and both rings are updated from the same residual `T[t] - L[t]`.

use thiserror::Error;

use crate::domain::{DetectorConfig, ModelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("insufficient history: need {needed} values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("forecast states are not compatible")]
    Incompatible,
    #[error("invalid forecast parameters: {0}")]
    InvalidParams(String),
}

/// Smoothing parameters of a Holt-Winters model.
#[derive(Debug, Clone, PartialEq)]
pub struct HwParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Season lengths in timeunits; the first is the primary (daily) one.
    pub periods: Vec<usize>,
    /// Weight of the first seasonal ring; ignored with a single period.
    pub xi: f64,
}

impl HwParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, periods: Vec<usize>, xi: f64) -> Result<Self, ForecastError> {
        if periods.is_empty() || periods.len() > 2 || periods.contains(&0) {
            return Err(ForecastError::InvalidParams(format!(
                "need one or two positive periods, got {periods:?}"
            )));
        }
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("xi", xi)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ForecastError::InvalidParams(format!("{name}={v} outside [0, 1]")));
            }
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            periods,
            xi,
        })
    }

    pub fn max_period(&self) -> usize {
        self.periods.iter().copied().max().unwrap_or(1)
    }

    fn weights(&self) -> [f64; 2] {
        if self.periods.len() == 1 {
            [1.0, 0.0]
        } else {
            [self.xi, 1.0 - self.xi]
        }
    }
}

/// Level, trend and seasonal rings. `t` counts observed timeunits; ring
/// slot `t % period` holds the factor last written one period ago.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersState {
    pub level: f64,
    pub trend: f64,
    pub seasons: Vec<Vec<f64>>,
    pub t: u64,
}

impl HoltWintersState {
    /// Initializes from the last two cycles of the longest period.
    ///
    /// Level is the mean of those `2v` values, trend is the difference
    /// between the recent and the older cycle sums over `2v`, and each
    /// ring's phase is the mean of its two residual occurrences.
    pub fn init(params: &HwParams, history: &[f64]) -> Result<Self, ForecastError> {
        let v = params.max_period();
        let needed = 2 * v;
        if history.len() < needed {
            return Err(ForecastError::InsufficientHistory {
                needed,
                got: history.len(),
            });
        }
        let n = history.len();
        let tail = &history[n - needed..];
        let level = tail.iter().sum::<f64>() / needed as f64;
        let older: f64 = tail[..v].iter().sum();
        let recent: f64 = tail[v..].iter().sum();
        let trend = (recent - older) / needed as f64;

        let seasons = params
            .periods
            .iter()
            .map(|&p| {
                let mut ring = vec![0.0; p];
                let mut hits = vec![0u32; p];
                for i in n - 2 * p..n {
                    ring[i % p] += history[i] - level;
                    hits[i % p] += 1;
                }
                for (s, h) in ring.iter_mut().zip(hits) {
                    *s /= h as f64;
                }
                ring
            })
            .collect();
        Ok(Self {
            level,
            trend,
            seasons,
            t: n as u64,
        })
    }

    fn seasonal(&self, params: &HwParams, t: u64) -> f64 {
        let w = params.weights();
        self.seasons
            .iter()
            .zip(w)
            .map(|(ring, w)| w * ring[(t % ring.len() as u64) as usize])
            .sum()
    }

    /// Forecast for the next unobserved timeunit.
    pub fn forecast(&self, params: &HwParams) -> f64 {
        self.level + self.trend + self.seasonal(params, self.t)
    }

    /// Consumes one observation and returns the forecast for the next unit.
    pub fn update(&mut self, params: &HwParams, value: f64) -> f64 {
        let s_old = self.seasonal(params, self.t);
        let level = params.alpha * (value - s_old) + (1.0 - params.alpha) * (self.level + self.trend);
        let trend = params.beta * (level - self.level) + (1.0 - params.beta) * self.trend;
        for ring in &mut self.seasons {
            let slot = (self.t % ring.len() as u64) as usize;
            ring[slot] = params.gamma * (value - level) + (1.0 - params.gamma) * ring[slot];
        }
        self.level = level;
        self.trend = trend;
        self.t += 1;
        self.forecast(params)
    }

    fn zip_apply(&mut self, other: &Self, f: impl Fn(&mut f64, f64)) {
        f(&mut self.level, other.level);
        f(&mut self.trend, other.trend);
        for (a, b) in self.seasons.iter_mut().zip(&other.seasons) {
            for (x, y) in a.iter_mut().zip(b) {
                f(x, *y);
            }
        }
    }

    fn compatible(&self, other: &Self) -> bool {
        self.t == other.t
            && self.seasons.len() == other.seasons.len()
            && self
                .seasons
                .iter()
                .zip(&other.seasons)
                .all(|(a, b)| a.len() == b.len())
    }
}

/// Exponentially weighted moving average `F <- a w + (1 - a) F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaState {
    pub value: f64,
}

impl EwmaState {
    pub fn new(value: f64) -> Self {
        Self { value }
    }

    pub fn update(&mut self, alpha: f64, w: f64) -> f64 {
        self.value = alpha * w + (1.0 - alpha) * self.value;
        self.value
    }
}

/// A forecasting model: parameters only, shared by all node states.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastModel {
    HoltWinters(HwParams),
    Ewma { alpha: f64 },
}

/// Per-series state of a [`ForecastModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastState {
    HoltWinters(HoltWintersState),
    Ewma(EwmaState),
}

impl ForecastModel {
    pub fn from_config(cfg: &DetectorConfig) -> Result<Self, ForecastError> {
        match cfg.model {
            ModelKind::HoltWinters => Ok(ForecastModel::HoltWinters(HwParams::new(
                cfg.alpha,
                cfg.beta,
                cfg.gamma,
                cfg.period_units(),
                cfg.xi,
            )?)),
            ModelKind::Ewma => Ok(ForecastModel::Ewma { alpha: cfg.alpha }),
        }
    }

    /// Shortest history `init` accepts.
    pub fn min_history(&self) -> usize {
        match self {
            ForecastModel::HoltWinters(p) => 2 * p.max_period(),
            ForecastModel::Ewma { .. } => 1,
        }
    }

    pub fn init(&self, history: &[f64]) -> Result<ForecastState, ForecastError> {
        match self {
            ForecastModel::HoltWinters(p) => Ok(ForecastState::HoltWinters(HoltWintersState::init(p, history)?)),
            ForecastModel::Ewma { alpha } => {
                let (&first, rest) = history
                    .split_first()
                    .ok_or(ForecastError::InsufficientHistory { needed: 1, got: 0 })?;
                let mut s = EwmaState::new(first);
                for &v in rest {
                    s.update(*alpha, v);
                }
                Ok(ForecastState::Ewma(s))
            }
        }
    }

    /// Initializes on the head of `series` and replays the rest.
    ///
    /// Returns the final state and one forecast per position. Positions
    /// inside the initialization span get in-sample fitted values
    /// (level plus seasonal factor); later positions get the one-step
    /// forecast made before observing them.
    pub fn fit(&self, series: &[f64]) -> Result<(ForecastState, Vec<f64>), ForecastError> {
        let m = self.min_history();
        if series.len() < m {
            return Err(ForecastError::InsufficientHistory {
                needed: m,
                got: series.len(),
            });
        }
        let mut fitted = Vec::with_capacity(series.len());
        let mut state = match self {
            ForecastModel::HoltWinters(p) => {
                let s = HoltWintersState::init(p, &series[..m])?;
                for i in 0..m {
                    fitted.push(s.level + s.seasonal(p, i as u64));
                }
                ForecastState::HoltWinters(s)
            }
            ForecastModel::Ewma { .. } => {
                fitted.push(series[0]);
                ForecastState::Ewma(EwmaState::new(series[0]))
            }
        };
        for &v in &series[m..] {
            fitted.push(self.forecast(&state));
            self.update(&mut state, v);
        }
        Ok((state, fitted))
    }

    pub fn forecast(&self, state: &ForecastState) -> f64 {
        match (self, state) {
            (ForecastModel::HoltWinters(p), ForecastState::HoltWinters(s)) => s.forecast(p),
            (ForecastModel::Ewma { .. }, ForecastState::Ewma(s)) => s.value,
            _ => panic!("forecast state does not match model"),
        }
    }

    pub fn update(&self, state: &mut ForecastState, value: f64) {
        match (self, state) {
            (ForecastModel::HoltWinters(p), ForecastState::HoltWinters(s)) => {
                s.update(p, value);
            }
            (ForecastModel::Ewma { alpha }, ForecastState::Ewma(s)) => {
                s.update(*alpha, value);
            }
            _ => panic!("forecast state does not match model"),
        }
    }
}

impl ForecastState {
    pub fn scale(&mut self, r: f64) {
        match self {
            ForecastState::HoltWinters(s) => {
                s.level *= r;
                s.trend *= r;
                for ring in &mut s.seasons {
                    for x in ring {
                        *x *= r;
                    }
                }
            }
            ForecastState::Ewma(s) => s.value *= r,
        }
    }

    pub fn scaled(&self, r: f64) -> Self {
        let mut s = self.clone();
        s.scale(r);
        s
    }

    pub fn add_assign(&mut self, other: &ForecastState) {
        match (self, other) {
            (ForecastState::HoltWinters(a), ForecastState::HoltWinters(b)) => a.zip_apply(b, |x, y| *x += y),
            (ForecastState::Ewma(a), ForecastState::Ewma(b)) => a.value += b.value,
            _ => panic!("forecast states of different models"),
        }
    }

    pub fn sub_assign(&mut self, other: &ForecastState) {
        match (self, other) {
            (ForecastState::HoltWinters(a), ForecastState::HoltWinters(b)) => a.zip_apply(b, |x, y| *x -= y),
            (ForecastState::Ewma(a), ForecastState::Ewma(b)) => a.value -= b.value,
            _ => panic!("forecast states of different models"),
        }
    }

    pub fn compatible(&self, other: &ForecastState) -> bool {
        match (self, other) {
            (ForecastState::HoltWinters(a), ForecastState::HoltWinters(b)) => a.compatible(b),
            (ForecastState::Ewma(_), ForecastState::Ewma(_)) => true,
            _ => false,
        }
    }
}

/// Checks that the forecast of a combined state equals the sum of the
/// component forecasts within relative tolerance `rel_tol`.
pub fn hw_sum_property(
    model: &ForecastModel,
    parts: &[ForecastState],
    combined: &ForecastState,
    rel_tol: f64,
) -> Result<bool, ForecastError> {
    if parts.iter().any(|p| !p.compatible(combined)) {
        return Err(ForecastError::Incompatible);
    }
    let sum: f64 = parts.iter().map(|p| model.forecast(p)).sum();
    let whole = model.forecast(combined);
    Ok(relative_eq(sum, whole, rel_tol))
}

pub(crate) fn relative_eq(a: f64, b: f64, rel_tol: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1e-12);
    (a - b).abs() <= rel_tol * scale
}

/// `F <- alpha * w + (1 - alpha) * F`.
pub fn ewma_update(state: EwmaState, alpha: f64, w: f64) -> EwmaState {
    let mut s = state;
    s.update(alpha, w);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hw(alpha: f64, beta: f64, gamma: f64, periods: Vec<usize>, xi: f64) -> HwParams {
        HwParams::new(alpha, beta, gamma, periods, xi).unwrap()
    }

    #[test]
    fn constant_history() {
        let p = hw(0.3, 0.1, 0.2, vec![4], 1.0);
        let s = HoltWintersState::init(&p, &[5.0; 8]).unwrap();
        assert_eq!(s.level, 5.0);
        assert_eq!(s.trend, 0.0);
        assert!(s.seasons[0].iter().all(|&x| x == 0.0));
        assert_eq!(s.forecast(&p), 5.0);
    }

    #[test]
    fn short_history_is_rejected() {
        let p = hw(0.3, 0.1, 0.2, vec![4], 1.0);
        assert_eq!(
            HoltWintersState::init(&p, &[1.0; 7]),
            Err(ForecastError::InsufficientHistory { needed: 8, got: 7 })
        );
    }

    #[test]
    fn pure_seasonal_history() {
        // T[t] = 10 + s[t mod 4] with zero-mean s.
        let s = [3.0, -1.0, -4.0, 2.0];
        let hist: Vec<f64> = (0..8).map(|t| 10.0 + s[t % 4]).collect();
        let p = hw(0.3, 0.1, 0.2, vec![4], 1.0);
        let st = HoltWintersState::init(&p, &hist).unwrap();
        assert_eq!(st.level, 10.0);
        assert_eq!(st.trend, 0.0);
        assert_eq!(st.seasons[0], s.to_vec());
        // Next unit is t = 8, phase 0.
        assert_eq!(st.forecast(&p), 13.0);
    }

    #[test]
    fn zero_rates_freeze_state() {
        let p = hw(0.0, 0.0, 0.0, vec![2], 1.0);
        let mut st = HoltWintersState::init(&p, &[1.0, 3.0, 1.0, 3.0]).unwrap();
        let before = st.clone();
        for v in [100.0, -5.0, 42.0, 7.0] {
            st.update(&p, v);
        }
        assert_eq!(st.level, before.level);
        assert_eq!(st.trend, before.trend);
        assert_eq!(st.seasons, before.seasons);
        assert_eq!(st.forecast(&p), before.forecast(&p));
    }

    #[test]
    fn unit_alpha_tracks_level() {
        let p = hw(1.0, 0.0, 0.0, vec![2], 1.0);
        let mut st = HoltWintersState::init(&p, &[4.0, 4.0, 4.0, 4.0]).unwrap();
        st.trend = 0.5;
        for v in [7.0, 2.0, 9.0] {
            let g = st.update(&p, v);
            assert_eq!(st.level, v);
            assert_eq!(g, v + 0.5);
        }
    }

    /// Recurrences written over explicit time-indexed arrays, as an
    /// independent route for the two-season forecast.
    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    fn oracle_two_season(hist: &[f64], trace: &[f64], a: f64, b: f64, g: f64, vd: usize, vw: usize, xi: f64) -> Vec<f64> {
        let n0 = hist.len();
        let total = n0 + trace.len();
        let mut t_all = hist.to_vec();
        t_all.extend_from_slice(trace);
        let l0 = hist[n0 - 2 * vw..].iter().sum::<f64>() / (2 * vw) as f64;
        let b0 = (hist[n0 - vw..].iter().sum::<f64>() - hist[n0 - 2 * vw..n0 - vw].iter().sum::<f64>()) / (2 * vw) as f64;
        let mut sd = vec![0.0; total];
        let mut sw = vec![0.0; total];
        for j in n0 - 2 * vd..n0 {
            let phase_mates: Vec<usize> = (n0 - 2 * vd..n0).filter(|k| k % vd == j % vd).collect();
            sd[j] = phase_mates.iter().map(|&k| hist[k] - l0).sum::<f64>() / phase_mates.len() as f64;
        }
        for j in n0 - 2 * vw..n0 {
            let phase_mates: Vec<usize> = (n0 - 2 * vw..n0).filter(|k| k % vw == j % vw).collect();
            sw[j] = phase_mates.iter().map(|&k| hist[k] - l0).sum::<f64>() / phase_mates.len() as f64;
        }
        let (mut l, mut bb) = (l0, b0);
        let mut out = Vec::new();
        for t in n0..total {
            let s_prev = xi * sd[t - vd] + (1.0 - xi) * sw[t - vw];
            out.push(l + bb + s_prev);
            let ln = a * (t_all[t] - s_prev) + (1.0 - a) * (l + bb);
            let bn = b * (ln - l) + (1.0 - b) * bb;
            sd[t] = g * (t_all[t] - ln) + (1.0 - g) * sd[t - vd];
            sw[t] = g * (t_all[t] - ln) + (1.0 - g) * sw[t - vw];
            l = ln;
            bb = bn;
        }
        out
    }

    #[test]
    fn two_season_mix_matches_hand_trace() {
        let hist = [10.0, 14.0, 9.0, 15.0, 11.0, 16.0, 8.0, 13.0];
        let trace = [12.0, 17.0, 10.0];
        let p = hw(0.5, 0.2, 0.3, vec![2, 4], 0.76);
        let mut st = HoltWintersState::init(&p, &hist).unwrap();
        let mut got = Vec::new();
        for &v in &trace {
            got.push(st.forecast(&p));
            st.update(&p, v);
        }
        let want = oracle_two_season(&hist, &trace, 0.5, 0.2, 0.3, 2, 4, 0.76);
        // Frozen from the oracle above.
        let frozen = [9.74, 15.976, 11.76876];
        for ((g, w), f) in got.iter().zip(&want).zip(frozen) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            assert!((g - f).abs() < 1e-9, "{g} vs frozen {f}");
        }
    }

    #[test]
    fn ewma_examples() {
        assert_eq!(ewma_update(EwmaState::new(0.0), 0.5, 1.0).value, 0.5);
        assert_eq!(ewma_update(EwmaState::new(3.0), 1.0, 8.0).value, 8.0);
        let mut s = EwmaState::new(0.0);
        for k in 1..=20 {
            s = ewma_update(s, 0.5, 1.0);
            assert!((s.value - (1.0 - 0.5f64.powi(k))).abs() < 1e-15);
        }
    }

    #[test]
    fn sum_property_refuses_mismatched_periods() {
        let m4 = ForecastModel::HoltWinters(hw(0.3, 0.1, 0.2, vec![4], 1.0));
        let m2 = ForecastModel::HoltWinters(hw(0.3, 0.1, 0.2, vec![2], 1.0));
        let a = m4.init(&[1.0; 8]).unwrap();
        let b = m2.init(&[1.0; 8]).unwrap();
        assert_eq!(hw_sum_property(&m4, &[b], &a, 1e-9), Err(ForecastError::Incompatible));
        assert_eq!(hw_sum_property(&m4, std::slice::from_ref(&a), &a, 1e-9), Ok(true));
    }

    #[test]
    fn fit_yields_one_forecast_per_position() {
        let m = ForecastModel::HoltWinters(hw(0.3, 0.1, 0.2, vec![3], 1.0));
        let series: Vec<f64> = (0..20).map(|i| (i % 3) as f64 + 5.0).collect();
        let (state, fitted) = m.fit(&series).unwrap();
        assert_eq!(fitted.len(), 20);
        assert!(fitted.iter().zip(&series).all(|(f, s)| (f - s).abs() < 1e-9));
        // Position 20 has phase 2.
        assert!((m.forecast(&state) - 7.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn forecast_of_sum_is_sum_of_forecasts(
            a in proptest::collection::vec(0.0f64..50.0, 40),
            b in proptest::collection::vec(0.0f64..50.0, 40),
            alpha in 0.0f64..1.0, beta in 0.0f64..1.0, gamma in 0.0f64..1.0,
        ) {
            let m = ForecastModel::HoltWinters(hw(alpha, beta, gamma, vec![4], 1.0));
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let (mut sa, mut sb, mut ss) = (m.init(&a[..8]).unwrap(), m.init(&b[..8]).unwrap(), m.init(&sum[..8]).unwrap());
            for i in 8..40 {
                prop_assert!(hw_sum_property(&m, &[sa.clone(), sb.clone()], &ss, 1e-9).unwrap());
                m.update(&mut sa, a[i]);
                m.update(&mut sb, b[i]);
                m.update(&mut ss, sum[i]);
            }
        }

        #[test]
        fn scaling_commutes_with_updates(
            a in proptest::collection::vec(0.0f64..50.0, 24),
            r in 0.0f64..1.0,
        ) {
            let m = ForecastModel::HoltWinters(hw(0.4, 0.1, 0.3, vec![3, 6], 0.7));
            let scaled: Vec<f64> = a.iter().map(|x| x * r).collect();
            let (sa, _) = m.fit(&a).unwrap();
            let (ss, _) = m.fit(&scaled).unwrap();
            let f1 = m.forecast(&sa.scaled(r));
            let f2 = m.forecast(&ss);
            prop_assert!(relative_eq(f1, f2, 1e-9) || (f1 - f2).abs() < 1e-9);
        }
    }
}
