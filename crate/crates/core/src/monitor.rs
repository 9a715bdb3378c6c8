//! Post-deployment drift monitor.
//!
//! Tracks a moving-window success rate per recipe and raises WARNING when
//! the window drops 5 points below the registered baseline, CRITICAL at 10
//! points. No alert fires before the window first fills. Declines are
//! measured in absolute percentage points by default; a relative mode
//! (fraction of baseline) is available as a config switch.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_WARN_DROP: f64 = 0.05;
pub const DEFAULT_CRITICAL_DROP: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("unknown recipe '{0}'")]
    UnknownRecipe(String),
    #[error("baseline success rate {0} outside [0, 1]")]
    BadBaseline(f64),
    #[error("window size must be >= 1")]
    BadWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alert {
    None,
    Warning,
    Critical,
}

impl std::fmt::Display for Alert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Alert::None => write!(f, "none"),
            Alert::Warning => write!(f, "warning"),
            Alert::Critical => write!(f, "critical"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonitorConfig {
    pub window_size: usize,
    pub warn_drop: f64,
    pub critical_drop: f64,
    /// Measure decline as a fraction of the baseline instead of absolute
    /// percentage points.
    pub relative: bool,
    /// Suppress repeats: only report an alert when its level changes.
    pub debounce: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            window_size: DEFAULT_WINDOW,
            warn_drop: DEFAULT_WARN_DROP,
            critical_drop: DEFAULT_CRITICAL_DROP,
            relative: false,
            debounce: false,
        }
    }
}

#[derive(Debug, Clone)]
struct RecipeState {
    baseline_sr: f64,
    ring: VecDeque<bool>,
    successes: usize,
    last_reported: Alert,
}

/// Per-recipe moving-window drift monitor.
#[derive(Debug, Clone)]
pub struct Monitor {
    config: MonitorConfig,
    recipes: HashMap<String, RecipeState>,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self, MonitorError> {
        if config.window_size == 0 {
            return Err(MonitorError::BadWindow);
        }
        Ok(Self {
            config,
            recipes: HashMap::new(),
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Registers a recipe with its validated baseline success rate.
    pub fn register(&mut self, recipe: &str, baseline_sr: f64) -> Result<(), MonitorError> {
        if !(0.0..=1.0).contains(&baseline_sr) {
            return Err(MonitorError::BadBaseline(baseline_sr));
        }
        self.recipes.insert(
            recipe.to_string(),
            RecipeState {
                baseline_sr,
                ring: VecDeque::with_capacity(self.config.window_size),
                successes: 0,
                last_reported: Alert::None,
            },
        );
        Ok(())
    }

    fn state(&self, recipe: &str) -> Result<&RecipeState, MonitorError> {
        self.recipes
            .get(recipe)
            .ok_or_else(|| MonitorError::UnknownRecipe(recipe.to_string()))
    }

    /// Moving-window success rate; `None` until the window first fills.
    pub fn window_sr(&self, recipe: &str) -> Result<Option<f64>, MonitorError> {
        let state = self.state(recipe)?;
        if state.ring.len() < self.config.window_size {
            return Ok(None);
        }
        Ok(Some(state.successes as f64 / self.config.window_size as f64))
    }

    fn alert_level(&self, state: &RecipeState) -> Alert {
        let window_sr = state.successes as f64 / self.config.window_size as f64;
        let decline = if self.config.relative {
            if state.baseline_sr <= 0.0 {
                0.0
            } else {
                (state.baseline_sr - window_sr) / state.baseline_sr
            }
        } else {
            state.baseline_sr - window_sr
        };
        if decline >= self.config.critical_drop {
            Alert::Critical
        } else if decline >= self.config.warn_drop {
            Alert::Warning
        } else {
            Alert::None
        }
    }

    /// Appends an outcome and returns the alert level for the current
    /// window. Level-triggered by default: the alert repeats on every ingest
    /// while the condition holds. With debounce enabled, an alert is
    /// reported only when its level changes.
    pub fn ingest(&mut self, recipe: &str, success: bool) -> Result<Alert, MonitorError> {
        let window = self.config.window_size;
        let state = self
            .recipes
            .get_mut(recipe)
            .ok_or_else(|| MonitorError::UnknownRecipe(recipe.to_string()))?;
        state.ring.push_back(success);
        if success {
            state.successes += 1;
        }
        if state.ring.len() > window {
            if state.ring.pop_front() == Some(true) {
                state.successes -= 1;
            }
        }
        if state.ring.len() < window {
            return Ok(Alert::None);
        }
        let state = &self.recipes[recipe];
        let level = self.alert_level(state);
        if self.config.debounce {
            let state = self.recipes.get_mut(recipe).unwrap();
            if level == state.last_reported {
                return Ok(Alert::None);
            }
            state.last_reported = level;
        }
        Ok(level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monitor() -> Monitor {
        let mut m = Monitor::new(MonitorConfig::default()).unwrap();
        m.register("pick", 0.95).unwrap();
        m
    }

    /// Fills the window with the given number of successes out of 100.
    fn fill(m: &mut Monitor, recipe: &str, successes: usize) -> Alert {
        let mut last = Alert::None;
        for i in 0..100 {
            last = m.ingest(recipe, i < successes).unwrap();
        }
        last
    }

    #[test]
    fn warning_at_six_point_decline() {
        let mut m = monitor();
        assert_eq!(fill(&mut m, "pick", 89), Alert::Warning);
        assert_eq!(m.window_sr("pick").unwrap(), Some(0.89));
    }

    #[test]
    fn critical_at_eleven_point_decline() {
        let mut m = monitor();
        assert_eq!(fill(&mut m, "pick", 84), Alert::Critical);
    }

    #[test]
    fn no_alert_at_three_point_decline() {
        let mut m = monitor();
        assert_eq!(fill(&mut m, "pick", 92), Alert::None);
    }

    #[test]
    fn exact_thresholds() {
        let mut m = monitor();
        // baseline 0.95: window 0.90 is exactly a 5pp decline -> warning;
        // window 0.85 exactly 10pp -> critical.
        assert_eq!(fill(&mut m, "pick", 90), Alert::Warning);
        let mut m = monitor();
        assert_eq!(fill(&mut m, "pick", 85), Alert::Critical);
    }

    #[test]
    fn no_alerts_before_window_fills() {
        let mut m = monitor();
        for _ in 0..99 {
            assert_eq!(m.ingest("pick", false).unwrap(), Alert::None);
        }
        assert_eq!(m.window_sr("pick").unwrap(), None);
        // The hundredth outcome completes the window and fires.
        assert_eq!(m.ingest("pick", false).unwrap(), Alert::Critical);
        assert_eq!(m.window_sr("pick").unwrap(), Some(0.0));
    }

    #[test]
    fn window_slides() {
        let mut m = monitor();
        fill(&mut m, "pick", 100);
        assert_eq!(m.window_sr("pick").unwrap(), Some(1.0));
        // 50 failures slide in: window SR 0.5.
        for _ in 0..50 {
            m.ingest("pick", false).unwrap();
        }
        assert_eq!(m.window_sr("pick").unwrap(), Some(0.5));
    }

    #[test]
    fn unknown_recipe_is_an_error() {
        let mut m = monitor();
        assert!(matches!(
            m.ingest("place", true),
            Err(MonitorError::UnknownRecipe(_))
        ));
        assert!(m.window_sr("place").is_err());
    }

    #[test]
    fn recipes_are_isolated() {
        let mut m = monitor();
        m.register("place", 0.9).unwrap();
        fill(&mut m, "pick", 100);
        let before = m.window_sr("pick").unwrap();
        for _ in 0..100 {
            m.ingest("place", false).unwrap();
        }
        assert_eq!(m.window_sr("pick").unwrap(), before);
        assert_eq!(m.window_sr("place").unwrap(), Some(0.0));
    }

    #[test]
    fn critical_implies_warning_condition() {
        let m = monitor();
        assert!(m.config.critical_drop >= m.config.warn_drop);
        let mut m = monitor();
        let alert = fill(&mut m, "pick", 80);
        assert_eq!(alert, Alert::Critical);
        // The warning condition also holds at this decline.
        let window_sr = m.window_sr("pick").unwrap().unwrap();
        assert!(0.95 - window_sr >= DEFAULT_WARN_DROP);
    }

    #[test]
    fn replay_reproduces_alert_sequence() {
        let outcomes: Vec<bool> = (0..300)
            .map(|i| crate::rng::stream(4, "mon", i).next_f64() < 0.9)
            .collect();
        let run = |outcomes: &[bool]| -> Vec<Alert> {
            let mut m = monitor();
            outcomes
                .iter()
                .map(|&o| m.ingest("pick", o).unwrap())
                .collect()
        };
        assert_eq!(run(&outcomes), run(&outcomes));
    }

    #[test]
    fn level_triggered_by_default_debounce_reports_changes_only() {
        let mut m = monitor();
        fill(&mut m, "pick", 84);
        // Holding at the same SR keeps firing critical.
        assert_eq!(m.ingest("pick", false).unwrap(), Alert::Critical);
        assert_eq!(m.ingest("pick", false).unwrap(), Alert::Critical);

        let mut m = Monitor::new(MonitorConfig {
            debounce: true,
            ..MonitorConfig::default()
        })
        .unwrap();
        m.register("pick", 0.95).unwrap();
        let alerts: Vec<Alert> = (0..103)
            .map(|i| m.ingest("pick", i >= 16).unwrap())
            .collect();
        // Window fills at event 100 with 84 successes -> critical reported
        // once, then suppressed while the level holds.
        assert_eq!(alerts[99], Alert::Critical);
        assert_eq!(alerts[100], Alert::None);
        assert_eq!(alerts[101], Alert::None);
    }

    #[test]
    fn relative_mode_scales_by_baseline() {
        let mut m = Monitor::new(MonitorConfig {
            relative: true,
            ..MonitorConfig::default()
        })
        .unwrap();
        m.register("pick", 0.50).unwrap();
        // window 0.46: absolute decline 4pp but relative 8% -> warning.
        let alert = fill(&mut m, "pick", 46);
        assert_eq!(alert, Alert::Warning);
    }

    #[test]
    fn register_validates_baseline() {
        let mut m = monitor();
        assert!(m.register("x", 1.5).is_err());
        assert!(Monitor::new(MonitorConfig {
            window_size: 0,
            ..MonitorConfig::default()
        })
        .is_err());
    }
}
