//! The change-point degree-day energy model and its least-squares fitters.
//!
//! Daily mean consumption is modelled as a weather-insensitive baseload plus
//! two hinge terms that activate below a heating balance point and above a
//! cooling balance point:
//!
//! ```text
//! mean_d = base + gamma_heat * (t_heat - T_d)^+ + gamma_cool * (T_d - t_cool)^+
//! ```
//!
//! Two deterministic least-squares fitters are provided as baselines for the
//! Bayesian fit in [`crate::bayes`]: one with both balance points pinned at
//! 65 °F, and one that searches the full balance-point lattice.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AlignedSeries, WeatherSeries};

/// Lower bound of the admissible balance-point range, °F.
pub const T_LOW: f64 = 32.0;
/// Upper bound of the admissible balance-point range, °F.
pub const T_HIGH: f64 = 100.0;

/// The fixed balance point used by [`fit_ls_65`].
pub const T_FIXED: f64 = 65.0;

/// Floor applied to fitted residual standard deviations so that noiseless
/// data still produces a positive sigma.
const SIGMA_FLOOR: f64 = 1e-12;

/// One point in the five-parameter model space.
///
/// Energies are kWh/day (kWh/sq.ft./day when fit on area-normalized data),
/// slopes kWh per °F-day, balance points °F. `sigma` is the residual noise
/// scale; it is `None` for parameter points derived from annual totals, where
/// no daily residual exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub base: f64,
    pub gamma_heat: f64,
    pub gamma_cool: f64,
    pub t_heat: f64,
    pub t_cool: f64,
    pub sigma: Option<f64>,
}

impl ParamPoint {
    /// Check the hard parameter constraints: nonnegative base and slopes,
    /// balance points within [32, 100] °F with `t_heat <= t_cool`, and a
    /// positive finite sigma when present.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.base, self.gamma_heat, self.gamma_cool, self.t_heat, self.t_cool]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".to_string()));
        }
        if self.base < 0.0 || self.gamma_heat < 0.0 || self.gamma_cool < 0.0 {
            return Err(Error::InvalidParams("base and slopes must be nonnegative".to_string()));
        }
        if self.t_heat > self.t_cool {
            return Err(Error::InvalidParams(format!(
                "t_heat {} exceeds t_cool {}",
                self.t_heat, self.t_cool
            )));
        }
        for (name, t) in [("t_heat", self.t_heat), ("t_cool", self.t_cool)] {
            if !(T_LOW..=T_HIGH).contains(&t) {
                return Err(Error::InvalidParams(format!("{name} {t} outside [{T_LOW}, {T_HIGH}]")));
            }
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParams(format!("sigma {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Model mean for one day at temperature `temp` (°F).
    pub fn predict_day(&self, temp: f64) -> f64 {
        self.base
            + self.gamma_heat * (self.t_heat - temp).max(0.0)
            + self.gamma_cool * (temp - self.t_cool).max(0.0)
    }
}

/// Model-mean daily energy, one value per weather day.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSeries {
    pub days: Vec<(NaiveDate, f64)>,
}

impl PredictedSeries {
    pub fn total(&self) -> f64 {
        self.days.iter().map(|(_, e)| e).sum()
    }
}

/// Predicted energy disaggregated into its three components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit {
    pub heating: f64,
    pub cooling: f64,
    pub baseload: f64,
    pub total: f64,
}

/// Evaluate the model mean over a weather series.
pub fn predict(p: &ParamPoint, weather: &WeatherSeries) -> PredictedSeries {
    PredictedSeries {
        days: weather.days.iter().map(|&(d, t)| (d, p.predict_day(t))).collect(),
    }
}

/// Disaggregate predicted energy into heating, cooling, and baseload sums
/// over the weather series.
pub fn energy_split(p: &ParamPoint, weather: &WeatherSeries) -> EnergySplit {
    let mut heating = 0.0;
    let mut cooling = 0.0;
    for &(_, t) in &weather.days {
        heating += p.gamma_heat * (p.t_heat - t).max(0.0);
        cooling += p.gamma_cool * (t - p.t_cool).max(0.0);
    }
    let baseload = p.base * weather.days.len() as f64;
    EnergySplit { heating, cooling, baseload, total: heating + cooling + baseload }
}

/// Precomputed normal equations for the three-column design
/// `[1, (t_heat - T)^+, (T - t_cool)^+]`.
struct NormalEq {
    g: [[f64; 3]; 3],
    b: [f64; 3],
    yy: f64,
}

fn normal_eq(temps: &[f64], energy: &[f64], t_heat: f64, t_cool: f64) -> NormalEq {
    let mut g = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    let mut yy = 0.0;
    for (&t, &y) in temps.iter().zip(energy) {
        let row = [1.0, (t_heat - t).max(0.0), (t - t_cool).max(0.0)];
        for i in 0..3 {
            for j in i..3 {
                g[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
        yy += y * y;
    }
    for i in 0..3 {
        for j in 0..i {
            g[i][j] = g[j][i];
        }
    }
    NormalEq { g, b, yy }
}

/// Solve the normal equations restricted to the columns in `idx`.
/// Returns `None` when the restricted system is singular.
fn solve_subset(eq: &NormalEq, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let mut m = vec![vec![0.0; k + 1]; k];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            m[r][c] = eq.g[i][j];
        }
        m[r][k] = eq.b[i];
    }
    let scale: f64 = (0..k).map(|i| eq.g[idx[i]][idx[i]].abs()).fold(0.0, f64::max).max(1.0);
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..k {
            let f = m[row][col] / m[col][col];
            for c in col..=k {
                m[row][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut v = m[row][k];
        for c in row + 1..k {
            v -= m[row][c] * x[c];
        }
        x[row] = v / m[row][row];
    }
    Some(x)
}

/// Nonnegative least squares over the three-column design, by exhaustive
/// active-set enumeration. With three columns the eight candidate supports
/// can be checked directly; the feasible support with the smallest residual
/// sum of squares is the global constrained optimum.
fn nnls(eq: &NormalEq) -> ([f64; 3], f64) {
    let mut best = ([0.0; 3], eq.yy);
    for mask in 1u32..8 {
        let idx: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let Some(x) = solve_subset(eq, &idx) else { continue };
        if x.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let mut coef = [0.0; 3];
        for (&i, &v) in idx.iter().zip(&x) {
            coef[i] = v.max(0.0);
        }
        let mut sse = eq.yy;
        for i in 0..3 {
            sse -= 2.0 * coef[i] * eq.b[i];
            for j in 0..3 {
                sse += coef[i] * eq.g[i][j] * coef[j];
            }
        }
        if sse < best.1 {
            best = (coef, sse);
        }
    }
    (best.0, best.1.max(0.0))
}

fn residual_sd(sse: f64, n: usize, k_active: usize) -> f64 {
    let dof = n.saturating_sub(k_active).max(1);
    (sse / dof as f64).sqrt().max(SIGMA_FLOOR)
}

/// Least-squares fit with both balance points pinned at 65 °F.
///
/// Needs at least 10 aligned days. Slope and base coefficients are
/// constrained nonnegative. If every day has the same temperature the two
/// hinge columns are indistinguishable from the intercept and the design is
/// degenerate, except at exactly 65 °F where both hinges vanish and the fit
/// reduces to the mean.
pub fn fit_ls_65(aligned: &AlignedSeries) -> Result<ParamPoint> {
    let n = aligned.len();
    if n < 10 {
        return Err(Error::DegenerateDesign(format!("need at least 10 aligned days, have {n}")));
    }
    let t0 = aligned.temp[0];
    if aligned.temp.iter().all(|&t| t == t0) {
        if t0 != T_FIXED {
            return Err(Error::DegenerateDesign(
                "all temperatures identical; hinge terms indistinguishable from baseload".to_string(),
            ));
        }
        let base = aligned.energy.iter().sum::<f64>() / n as f64;
        let sse: f64 = aligned.energy.iter().map(|e| (e - base).powi(2)).sum();
        return Ok(ParamPoint {
            base,
            gamma_heat: 0.0,
            gamma_cool: 0.0,
            t_heat: T_FIXED,
            t_cool: T_FIXED,
            sigma: Some(residual_sd(sse, n, 1)),
        });
    }

    let eq = normal_eq(&aligned.temp, &aligned.energy, T_FIXED, T_FIXED);
    let (coef, sse) = nnls(&eq);
    let k_active = coef.iter().filter(|&&c| c > 0.0).count();
    Ok(ParamPoint {
        base: coef[0],
        gamma_heat: coef[1],
        gamma_cool: coef[2],
        t_heat: T_FIXED,
        t_cool: T_FIXED,
        sigma: Some(residual_sd(sse, n, k_active)),
    })
}

fn fit_at(temps: &[f64], energy: &[f64], t_heat: f64, t_cool: f64) -> ([f64; 3], f64) {
    nnls(&normal_eq(temps, energy, t_heat, t_cool))
}

/// Least-squares fit over all five parameters.
///
/// The residual objective is piecewise-quadratic in the balance points, so
/// the search walks a 1 °F lattice over `t_heat <= t_cool` in [32, 100],
/// solves the inner nonnegative least squares exactly at each cell, then
/// polishes the best cell on a 0.1 °F grid. Fully deterministic.
///
/// Needs at least 20 aligned days spanning at least 15 °F. When a hinge ends
/// up inactive (zero slope) its balance point is reported as the boundary
/// sentinel: 32 °F for heating, 100 °F for cooling.
pub fn fit_ls_range(aligned: &AlignedSeries) -> Result<ParamPoint> {
    let n = aligned.len();
    if n < 20 {
        return Err(Error::DegenerateDesign(format!("need at least 20 aligned days, have {n}")));
    }
    let t_min = aligned.temp.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = aligned.temp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t_max - t_min < 15.0 {
        return Err(Error::DegenerateDesign(format!(
            "temperature span {:.1} °F too narrow to identify balance points",
            t_max - t_min
        )));
    }

    let mut best: Option<(f64, f64, [f64; 3], f64)> = None;
    for th in T_LOW as i32..=T_HIGH as i32 {
        for tc in th..=T_HIGH as i32 {
            let (coef, sse) = fit_at(&aligned.temp, &aligned.energy, th as f64, tc as f64);
            if best.as_ref().is_none_or(|b| sse < b.3) {
                best = Some((th as f64, tc as f64, coef, sse));
            }
        }
    }
    let (th0, tc0, mut coef, mut sse) = best.unwrap();
    let (mut th_best, mut tc_best) = (th0, tc0);
    for i in -10i32..=10 {
        for j in -10i32..=10 {
            let th = (th0 + 0.1 * i as f64).clamp(T_LOW, T_HIGH);
            let tc = (tc0 + 0.1 * j as f64).clamp(T_LOW, T_HIGH);
            if th > tc {
                continue;
            }
            let (c, s) = fit_at(&aligned.temp, &aligned.energy, th, tc);
            if s < sse {
                (th_best, tc_best, coef, sse) = (th, tc, c, s);
            }
        }
    }

    let t_heat = if coef[1] == 0.0 { T_LOW } else { th_best };
    let t_cool = if coef[2] == 0.0 { T_HIGH } else { tc_best };
    let k_active = coef.iter().filter(|&&c| c > 0.0).count();
    Ok(ParamPoint {
        base: coef[0],
        gamma_heat: coef[1],
        gamma_cool: coef[2],
        t_heat,
        t_cool,
        sigma: Some(residual_sd(sse, n, k_active + 2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn weather_from_temps(temps: &[f64]) -> WeatherSeries {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        WeatherSeries {
            days: temps
                .iter()
                .enumerate()
                .map(|(i, &t)| (start + chrono::Days::new(i as u64), t))
                .collect(),
        }
    }

    fn aligned_from(p: &ParamPoint, temps: &[f64], noise: &[f64]) -> AlignedSeries {
        let weather = weather_from_temps(temps);
        let energy: Vec<f64> = temps
            .iter()
            .enumerate()
            .map(|(i, &t)| p.predict_day(t) + noise.get(i).copied().unwrap_or(0.0))
            .collect();
        AlignedSeries {
            building_id: "test".to_string(),
            dates: weather.days.iter().map(|&(d, _)| d).collect(),
            energy,
            temp: temps.to_vec(),
            coverage: 1.0,
        }
    }

    fn p(base: f64, gh: f64, gc: f64, th: f64, tc: f64) -> ParamPoint {
        ParamPoint { base, gamma_heat: gh, gamma_cool: gc, t_heat: th, t_cool: tc, sigma: None }
    }

    fn temps_range(lo: i32, hi: i32) -> Vec<f64> {
        (lo..=hi).map(|t| t as f64).collect()
    }

    #[test]
    fn predict_three_zones() {
        let p = p(10.0, 2.0, 3.0, 60.0, 75.0);
        assert_eq!(p.predict_day(65.0), 10.0);
        assert_eq!(p.predict_day(50.0), 30.0);
        assert_eq!(p.predict_day(80.0), 25.0);
    }

    #[test]
    fn validate_rejects_crossed_balance_points() {
        assert!(p(1.0, 1.0, 1.0, 70.0, 60.0).validate().is_err());
        assert!(p(1.0, 1.0, 1.0, 60.0, 70.0).validate().is_ok());
        assert!(p(-1.0, 1.0, 1.0, 60.0, 70.0).validate().is_err());
        assert!(p(1.0, 1.0, 1.0, 20.0, 70.0).validate().is_err());
        let mut q = p(1.0, 1.0, 1.0, 60.0, 70.0);
        q.sigma = Some(0.0);
        assert!(q.validate().is_err());
    }

    #[test]
    fn fit65_recovers_noiseless_truth_at_65() {
        let truth = p(10.0, 2.0, 3.0, 65.0, 65.0);
        let a = aligned_from(&truth, &temps_range(30, 90), &[]);
        let fit = fit_ls_65(&a).unwrap();
        assert!((fit.base - 10.0).abs() < 1e-6);
        assert!((fit.gamma_heat - 2.0).abs() < 1e-6);
        assert!((fit.gamma_cool - 3.0).abs() < 1e-6);
        assert_eq!((fit.t_heat, fit.t_cool), (65.0, 65.0));
    }

    #[test]
    fn fit65_constant_65_reduces_to_mean() {
        let temps = vec![65.0; 12];
        let weather = weather_from_temps(&temps);
        let energy: Vec<f64> = (0..12).map(|i| 8.0 + (i % 3) as f64).collect();
        let a = AlignedSeries {
            building_id: "test".to_string(),
            dates: weather.days.iter().map(|&(d, _)| d).collect(),
            energy: energy.clone(),
            temp: temps,
            coverage: 1.0,
        };
        let fit = fit_ls_65(&a).unwrap();
        let mean = energy.iter().sum::<f64>() / 12.0;
        assert!((fit.base - mean).abs() < 1e-12);
        assert_eq!(fit.gamma_heat, 0.0);
        assert_eq!(fit.gamma_cool, 0.0);
    }

    #[test]
    fn fit65_constant_other_temperature_is_degenerate() {
        let a = aligned_from(&p(10.0, 2.0, 0.0, 55.0, 100.0), &vec![50.0; 12], &[]);
        assert!(matches!(fit_ls_65(&a).unwrap_err(), Error::DegenerateDesign(_)));
    }

    #[test]
    fn fit65_requires_ten_days() {
        let a = aligned_from(&p(10.0, 2.0, 0.0, 55.0, 100.0), &temps_range(40, 48), &[]);
        assert!(matches!(fit_ls_65(&a).unwrap_err(), Error::DegenerateDesign(_)));
    }

    // With a true heating balance point below the pinned 65 °F, the response
    // as a function of the 65 °F hinge is convex (flat, then rising), so the
    // fitted line sits below it at the hinge origin: the recovered baseload
    // is biased downward.
    #[test]
    fn fit65_wrong_balance_point_biases_baseload_low() {
        let truth = p(10.0, 2.0, 0.0, 55.0, 100.0);
        let a = aligned_from(&truth, &temps_range(30, 90), &[]);
        let fit = fit_ls_65(&a).unwrap();
        assert!(
            fit.base < truth.base - 1.0,
            "expected downward-biased baseload, got {}",
            fit.base
        );
    }

    #[test]
    fn fitrange_recovers_all_five_noiseless() {
        let truth = p(10.0, 2.0, 3.0, 60.0, 75.0);
        let a = aligned_from(&truth, &temps_range(30, 90), &[]);
        let fit = fit_ls_range(&a).unwrap();
        assert!((fit.base - 10.0).abs() < 1e-3);
        assert!((fit.gamma_heat - 2.0).abs() < 1e-3);
        assert!((fit.gamma_cool - 3.0).abs() < 1e-3);
        assert!((fit.t_heat - 60.0).abs() < 1e-3);
        assert!((fit.t_cool - 75.0).abs() < 1e-3);
    }

    #[test]
    fn fitrange_no_cooling_days_gives_sentinel() {
        let truth = p(10.0, 2.0, 0.0, 60.0, 100.0);
        let a = aligned_from(&truth, &temps_range(30, 59), &[]);
        let fit = fit_ls_range(&a).unwrap();
        assert_eq!(fit.gamma_cool, 0.0);
        assert_eq!(fit.t_cool, T_HIGH);
    }

    #[test]
    fn fitrange_needs_span_and_days() {
        let truth = p(10.0, 2.0, 0.0, 60.0, 100.0);
        let narrow = aligned_from(&truth, &vec![50.0, 52.0, 54.0, 56.0, 58.0].repeat(5), &[]);
        assert!(matches!(fit_ls_range(&narrow).unwrap_err(), Error::DegenerateDesign(_)));
        let short = aligned_from(&truth, &temps_range(30, 48), &[]);
        assert!(matches!(fit_ls_range(&short).unwrap_err(), Error::DegenerateDesign(_)));
    }

    #[test]
    fn fitrange_residual_no_worse_than_fit65() {
        let truth = p(10.0, 2.0, 3.0, 65.0, 65.0);
        let temps = temps_range(30, 90);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 2.0).unwrap();
        let noise: Vec<f64> = temps.iter().map(|_| normal.sample(&mut rng)).collect();
        let a = aligned_from(&truth, &temps, &noise);

        let sse = |fit: &ParamPoint| -> f64 {
            a.temp
                .iter()
                .zip(&a.energy)
                .map(|(&t, &e)| (e - fit.predict_day(t)).powi(2))
                .sum()
        };
        let f65 = fit_ls_65(&a).unwrap();
        let frange = fit_ls_range(&a).unwrap();
        assert!(sse(&frange) <= sse(&f65) + 1e-9);
    }

    #[test]
    fn split_between_balance_points_is_pure_baseload() {
        let p = p(10.0, 2.0, 3.0, 60.0, 75.0);
        let weather = weather_from_temps(&[62.0, 65.0, 70.0, 74.0]);
        let s = energy_split(&p, &weather);
        assert_eq!(s.heating, 0.0);
        assert_eq!(s.cooling, 0.0);
        assert_eq!(s.baseload, 40.0);
        assert_eq!(s.total, 40.0);
    }

    #[test]
    fn split_unit_degree_day() {
        let p = p(10.0, 2.0, 3.0, 60.0, 75.0);
        let weather = weather_from_temps(&[59.0]);
        let s = energy_split(&p, &weather);
        assert_eq!(s.heating, 2.0);
        assert_eq!(s.cooling, 0.0);
    }

    proptest! {
        #[test]
        fn predict_dominates_base_and_is_flat_between(
            base in 0.0f64..50.0,
            gh in 0.0f64..5.0,
            gc in 0.0f64..5.0,
            th in 40.0f64..60.0,
            spread in 0.0f64..30.0,
            t in -20.0f64..120.0,
        ) {
            let p = p(base, gh, gc, th, (th + spread).min(T_HIGH));
            prop_assert!(p.validate().is_ok());
            let v = p.predict_day(t);
            prop_assert!(v >= base);
            if t >= p.t_heat && t <= p.t_cool {
                prop_assert_eq!(v, base);
            }
        }

        #[test]
        fn predict_monotone_in_each_wing(
            base in 0.0f64..50.0,
            gh in 0.0f64..5.0,
            gc in 0.0f64..5.0,
            t1 in -20.0f64..120.0,
            t2 in -20.0f64..120.0,
        ) {
            let p = p(base, gh, gc, 55.0, 75.0);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if hi <= p.t_heat {
                prop_assert!(p.predict_day(lo) >= p.predict_day(hi));
            }
            if lo >= p.t_cool {
                prop_assert!(p.predict_day(lo) <= p.predict_day(hi));
            }
        }

        #[test]
        fn split_components_sum_to_prediction(
            base in 0.0f64..50.0,
            gh in 0.0f64..5.0,
            gc in 0.0f64..5.0,
            th in 40.0f64..65.0,
            tc in 65.0f64..90.0,
            temps in proptest::collection::vec(-10.0f64..110.0, 1..60),
        ) {
            let p = p(base, gh, gc, th, tc);
            let weather = weather_from_temps(&temps);
            let s = energy_split(&p, &weather);
            prop_assert!(s.heating >= 0.0 && s.cooling >= 0.0 && s.baseload >= 0.0);
            let predicted = predict(&p, &weather).total();
            let scale = predicted.abs().max(1.0);
            prop_assert!((s.total - predicted).abs() <= 1e-9 * scale);
            prop_assert!((s.heating + s.cooling + s.baseload - s.total).abs() <= 1e-9 * scale);
        }

        #[test]
        fn fitrange_recovers_random_lattice_truths(
            base in 1.0f64..20.0,
            gh in 0.5f64..3.0,
            gc in 0.5f64..3.0,
            th in 40i32..60,
            tc in 70i32..90,
        ) {
            let truth = p(base, gh, gc, th as f64, tc as f64);
            let a = aligned_from(&truth, &temps_range(25, 95), &[]);
            let fit = fit_ls_range(&a).unwrap();
            prop_assert!((fit.base - truth.base).abs() < 1e-6);
            prop_assert!((fit.gamma_heat - truth.gamma_heat).abs() < 1e-6);
            prop_assert!((fit.gamma_cool - truth.gamma_cool).abs() < 1e-6);
            prop_assert!((fit.t_heat - truth.t_heat).abs() < 1e-6);
            prop_assert!((fit.t_cool - truth.t_cool).abs() < 1e-6);
        }
    }
}
