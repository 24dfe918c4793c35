//! Temporal partitions `0 = t_0 < t_1 < ... < t_M = T`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const REL_SLACK: f64 = 1e-12;

/// Partition of `(0, T]` into intervals `I_m = (t_{m-1}, t_m]`.
///
/// Intervals are indexed from 1 to `M` in the public API, matching the
/// usual convention for time-stepping schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDocument", into = "GridDocument")]
pub struct TimeGrid {
    final_time: f64,
    nodes: Vec<f64>,
    /// Common step when all steps agree to rounding, so that uniform grids
    /// report bit-identical steps.
    uniform_step: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridDocument {
    #[serde(rename = "T")]
    final_time: f64,
    nodes: Vec<f64>,
}

impl TryFrom<GridDocument> for TimeGrid {
    type Error = crate::Error;

    fn try_from(doc: GridDocument) -> Result<Self> {
        let grid = TimeGrid::from_nodes(doc.nodes)?;
        if (grid.final_time - doc.final_time).abs() > REL_SLACK * doc.final_time.abs() {
            return Err(invalid("final node does not match T"));
        }
        Ok(grid)
    }
}

impl From<TimeGrid> for GridDocument {
    fn from(g: TimeGrid) -> Self {
        GridDocument {
            final_time: g.final_time,
            nodes: g.nodes,
        }
    }
}

impl TimeGrid {
    /// Builds a grid from explicit nodes; the first node must be 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("a time grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(invalid("first time node must be 0"));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(invalid("time nodes must be finite"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("time nodes must be strictly increasing"));
        }
        let final_time = *nodes.last().unwrap();
        let k = final_time / (nodes.len() - 1) as f64;
        let uniform_step = nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - k).abs() <= 1e-13 * k)
            .then_some(k);
        Ok(Self {
            final_time,
            nodes,
            uniform_step,
        })
    }

    /// `M` equal steps of length `T/M`.
    pub fn uniform(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(invalid(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if steps == 0 {
            return Err(invalid("number of time steps must be at least 1"));
        }
        let k = final_time / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|m| m as f64 * k).collect();
        nodes[steps] = final_time;
        Self::from_nodes(nodes)
    }

    /// Nodes `t_m = T (m/M)^gamma`, refined toward `t = 0` for `gamma > 1`.
    pub fn graded(final_time: f64, steps: usize, gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(invalid(format!(
                "grading exponent must be >= 1, got {gamma}"
            )));
        }
        if gamma == 1.0 {
            return Self::uniform(final_time, steps);
        }
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(invalid(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if steps == 0 {
            return Err(invalid("number of time steps must be at least 1"));
        }
        let mf = steps as f64;
        let mut nodes: Vec<f64> = (0..=steps)
            .map(|m| final_time * (m as f64 / mf).powf(gamma))
            .collect();
        nodes[steps] = final_time;
        Self::from_nodes(nodes)
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Number of intervals `M`.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node `t_m`, `0 <= m <= M`.
    pub fn node(&self, m: usize) -> f64 {
        self.nodes[m]
    }

    /// Step `k_m = t_m - t_{m-1}`, `1 <= m <= M`.
    pub fn step(&self, m: usize) -> f64 {
        self.uniform_step
            .unwrap_or_else(|| self.nodes[m] - self.nodes[m - 1])
    }

    pub fn steps(&self) -> Vec<f64> {
        (1..=self.len()).map(|m| self.step(m)).collect()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform_step.is_some()
    }

    /// Largest step `k`.
    pub fn max_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Smallest step `k_min`.
    pub fn min_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Interval `(t_{m-1}, t_m]` as a pair.
    pub fn interval(&self, m: usize) -> (f64, f64) {
        (self.nodes[m - 1], self.nodes[m])
    }

    /// Index `m` of the interval containing `t` under left-continuity:
    /// `t_m` itself belongs to `I_m`, and `t = 0` is assigned to `I_1`.
    pub fn interval_of(&self, t: f64) -> usize {
        let idx = self.nodes.partition_point(|&node| node < t);
        idx.clamp(1, self.len())
    }

    /// Ratios `k_m / k_{m+1}` for `m = 1..M-1`.
    pub fn step_ratios(&self) -> Vec<f64> {
        let k = self.steps();
        k.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// `ln(T/k)` with the global maximal step.
    pub fn log_factor(&self) -> f64 {
        (self.final_time / self.max_step()).ln()
    }

    /// Checks the step-size conditions used throughout the stability theory.
    pub fn validate_conditions(&self, c: f64, beta: f64, kappa: f64) -> ConditionReport {
        let k = self.max_step();
        let k_min = self.min_step();
        let t = self.final_time;
        let ratios = self.step_ratios();
        let (min_ratio, max_ratio) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        });
        let (min_ratio, max_ratio) = if ratios.is_empty() {
            (1.0, 1.0)
        } else {
            (min_ratio, max_ratio)
        };
        let lower = c * k.powf(beta);
        let min_step_ok = k_min >= lower * (1.0 - REL_SLACK);
        let ratio_ok = min_ratio >= (1.0 / kappa) * (1.0 - REL_SLACK)
            && max_ratio <= kappa * (1.0 + REL_SLACK);
        let max_step_ok = k <= 0.25 * t * (1.0 + REL_SLACK);
        ConditionReport {
            min_step_condition: min_step_ok,
            ratio_condition: ratio_ok,
            max_step_condition: max_step_ok,
            min_ratio,
            max_ratio,
            max_step: k,
            min_step: k_min,
            step_spread: k - k_min,
        }
    }
}

/// Outcome of [`TimeGrid::validate_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `k_min >= c k^beta`.
    pub min_step_condition: bool,
    /// `1/kappa <= k_m/k_{m+1} <= kappa` for every neighbour pair.
    pub ratio_condition: bool,
    /// `k <= T/4`.
    pub max_step_condition: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// `k - k_min`, compared against a threshold chosen by the experiment.
    pub step_spread: f64,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.min_step_condition && self.ratio_condition && self.max_step_condition
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_quarter_steps() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.max_step(), 0.25);
        assert!(g.validate_conditions(1.0, 1.0, 1.0).max_step_condition);
    }

    #[test]
    fn single_interval_and_longer_horizon() {
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.interval(1), (0.0, 1.0));
        let g = TimeGrid::uniform(2.0, 8).unwrap();
        assert_eq!(g.max_step(), 0.25);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        assert!(TimeGrid::uniform(-1.0, 4).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::graded(1.0, 4, 0.5).is_err());
    }

    #[test]
    fn graded_nodes_and_ratios() {
        let g = TimeGrid::graded(1.0, 4, 2.0).unwrap();
        let expected = [0.0, 1.0 / 16.0, 4.0 / 16.0, 9.0 / 16.0, 1.0];
        for (a, b) in g.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let ratios = g.step_ratios();
        for (r, e) in ratios.iter().zip([1.0 / 3.0, 3.0 / 5.0, 5.0 / 7.0]) {
            assert!((r - e).abs() < 1e-14, "{r} vs {e}");
        }
        let report = g.validate_conditions(1.0, 1.0, 2.0);
        assert!(!report.ratio_condition);
        assert!((report.min_ratio - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn graded_gamma_one_is_uniform() {
        let a = TimeGrid::graded(1.0, 4, 1.0).unwrap();
        let b = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_conditions() {
        let r = TimeGrid::uniform(1.0, 8)
            .unwrap()
            .validate_conditions(1.0, 1.0, 1.0);
        assert!(r.all_hold());
        assert_eq!(r.step_spread, 0.0);
        let r = TimeGrid::uniform(1.0, 2)
            .unwrap()
            .validate_conditions(1.0, 1.0, 1.0);
        assert!(!r.max_step_condition);
    }

    #[test]
    fn left_continuous_lookup() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.interval_of(0.0), 1);
        assert_eq!(g.interval_of(0.25), 1);
        assert_eq!(g.interval_of(0.2500001), 2);
        assert_eq!(g.interval_of(1.0), 4);
    }

    #[test]
    fn json_round_trip() {
        let g = TimeGrid::graded(2.0, 5, 1.5).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with("{\"T\":2.0,\"nodes\":["));
        let back: TimeGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert!(
            serde_json::from_str::<TimeGrid>("{\"T\":1.0,\"nodes\":[0.0,0.6,0.5,1.0]}").is_err()
        );
    }

    proptest! {
        #[test]
        fn steps_sum_to_final_time(t in 0.01f64..100.0, m in 1usize..300, gamma in 1.0f64..4.0) {
            for g in [TimeGrid::uniform(t, m).unwrap(), TimeGrid::graded(t, m, gamma).unwrap()] {
                let s: f64 = g.steps().iter().sum();
                prop_assert!((s - t).abs() <= 1e-12 * t);
                prop_assert!(g.max_step() >= g.min_step());
            }
        }

        #[test]
        fn uniform_grids_satisfy_all_conditions(m in 4usize..200) {
            let r = TimeGrid::uniform(1.0, m).unwrap().validate_conditions(1.0, 1.0, 1.0);
            prop_assert!(r.all_hold());
        }

        #[test]
        fn graded_with_unit_exponent_matches_uniform(t in 0.1f64..10.0, m in 1usize..100) {
            let a = TimeGrid::graded(t, m, 1.0).unwrap();
            let b = TimeGrid::uniform(t, m).unwrap();
            for (x, y) in a.nodes().iter().zip(b.nodes()) {
                prop_assert!((x - y).abs() <= 1e-15 * t);
            }
        }
    }
}
