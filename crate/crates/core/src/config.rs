//! Simulation configuration.
//!
//! Every engine constant lives in [`SimConfig`]. The on-disk form is JSON with
//! an explicit `format_version`; omitted keys take the documented defaults and
//! unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Current config schema version.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field} out of range: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unsupported config format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Labor charged per executed action kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaborCosts {
    #[serde(rename = "move")]
    pub move_: f64,
    pub produce: f64,
    pub invest: f64,
    pub trade: f64,
    pub no_op: f64,
}

impl Default for LaborCosts {
    fn default() -> Self {
        Self {
            move_: 1.0,
            produce: 1.0,
            invest: 1.0,
            trade: 0.05,
            no_op: 0.0,
        }
    }
}

/// Inclusive sampling range for an enterprise skill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillRange {
    pub min: f64,
    pub max: f64,
}

/// Shape constants for the baseline allocation schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleShape {
    /// Period `k` of the decreasing schedule has weight
    /// `1 + (n_periods - k) * decreasing_slope`; `1.0` gives grants
    /// proportional to `(n, n-1, ..., 1)`.
    pub decreasing_slope: f64,
    /// Peak position of the convex schedule as a fraction of the horizon
    /// (the peak period is `ceil(n_periods * convex_peak_fraction)`).
    pub convex_peak_fraction: f64,
    /// Weight of the period farthest from the peak, relative to the peak.
    pub convex_floor: f64,
}

impl Default for ScheduleShape {
    fn default() -> Self {
        Self {
            decreasing_slope: 1.0,
            convex_peak_fraction: 1.0 / 3.0,
            convex_floor: 0.25,
        }
    }
}

/// Full engine configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub format_version: u32,
    pub seed: u64,

    pub n_enterprises: usize,
    pub n_periods: usize,
    pub steps_per_period: usize,
    pub grid_width: usize,
    pub grid_height: usize,

    /// Isoelastic utility coefficient.
    pub eta: f64,
    /// Labor-income coefficient asymptote.
    pub alpha: f64,
    /// Labor-income coefficient time scale.
    pub beta: f64,
    /// Investment efficacy.
    pub delta: f64,
    /// Economy-climate coefficient for social welfare.
    pub climate_coeff: f64,
    pub emission_floor: f64,
    pub total_credit_budget: f64,

    pub produce_coin_rate: f64,
    pub invest_coin_cost_numerator: f64,
    pub labor_costs: LaborCosts,
    pub size_range: SkillRange,
    pub research_range: SkillRange,

    pub trade_price_levels: u32,
    pub order_lifetime: usize,
    pub max_open_orders: usize,
    /// Number of periods (current included) summarized in the price history.
    pub price_history_periods: usize,

    pub project_coin_cost: f64,
    pub project_labor_cost: f64,
    pub project_credit_reward: f64,
    /// Share of each period's credit total set aside for certified projects.
    pub project_share: f64,

    pub pollution_radius: usize,
    pub pollution_discount: f64,
    pub pollution_prob: f64,
    /// Produce events with emission level strictly above this pollute.
    pub pollution_threshold: f64,

    pub invest_delay: usize,
    pub invest_forget_rate: f64,
    pub invest_fail_prob: f64,

    pub default_punishment: f64,
    /// Upper end of the decoded punishment range.
    pub max_punishment: f64,
    /// When set, the punishment dimension of government actions is ignored
    /// and `default_punishment` is used.
    pub pin_punishment: bool,

    /// Half-width of the enterprise local view (window side is `2r + 1`).
    pub view_radius: usize,

    pub schedule: ScheduleShape,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            n_enterprises: 5,
            n_periods: 10,
            steps_per_period: 100,
            grid_width: 25,
            grid_height: 25,
            eta: 0.23,
            alpha: 0.2,
            beta: 500.0,
            delta: 0.1,
            climate_coeff: 0.01,
            emission_floor: 0.1,
            total_credit_budget: 150.0,
            produce_coin_rate: 10.0,
            invest_coin_cost_numerator: 5.0,
            labor_costs: LaborCosts::default(),
            size_range: SkillRange { min: 1.0, max: 3.0 },
            research_range: SkillRange { min: 1.0, max: 3.0 },
            trade_price_levels: 10,
            order_lifetime: 50,
            max_open_orders: 5,
            price_history_periods: 3,
            project_coin_cost: 50.0,
            project_labor_cost: 5.0,
            project_credit_reward: 1.0,
            project_share: 0.1,
            pollution_radius: 1,
            pollution_discount: 0.3,
            pollution_prob: 0.5,
            pollution_threshold: 0.5,
            invest_delay: 10,
            invest_forget_rate: 0.05,
            invest_fail_prob: 0.1,
            default_punishment: 20.0,
            max_punishment: 100.0,
            pin_punishment: false,
            view_radius: 5,
            schedule: ScheduleShape::default(),
        }
    }
}

impl SimConfig {
    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: SimConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical JSON form (fixed field order, every field present).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn horizon(&self) -> usize {
        self.n_periods * self.steps_per_period
    }

    /// Side length of the enterprise local view.
    pub fn view_size(&self) -> usize {
        2 * self.view_radius + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::Version {
                found: self.format_version,
                expected: CONFIG_FORMAT_VERSION,
            });
        }
        let finite = [
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("climate_coeff", self.climate_coeff),
            ("total_credit_budget", self.total_credit_budget),
            ("produce_coin_rate", self.produce_coin_rate),
            ("invest_coin_cost_numerator", self.invest_coin_cost_numerator),
            ("project_coin_cost", self.project_coin_cost),
            ("project_labor_cost", self.project_labor_cost),
            ("project_credit_reward", self.project_credit_reward),
            ("default_punishment", self.default_punishment),
            ("max_punishment", self.max_punishment),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid("eta", format!("{} not in (0, 1)", self.eta)));
        }
        if self.n_enterprises == 0 {
            return Err(invalid("n_enterprises", "must be positive"));
        }
        if self.n_periods == 0 {
            return Err(invalid("n_periods", "must be positive"));
        }
        if self.steps_per_period < 2 {
            return Err(invalid("steps_per_period", "must be at least 2"));
        }
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(invalid("grid_width", "grid dimensions must be positive"));
        }
        if self.alpha < 0.0 {
            return Err(invalid("alpha", "must be non-negative"));
        }
        if self.beta <= 0.0 {
            return Err(invalid("beta", "must be positive"));
        }
        if self.delta < 0.0 {
            return Err(invalid("delta", "must be non-negative"));
        }
        if self.climate_coeff < 0.0 {
            return Err(invalid("climate_coeff", "must be non-negative"));
        }
        if !(self.emission_floor > 0.0 && self.emission_floor < 1.0) {
            return Err(invalid("emission_floor", "not in (0, 1)"));
        }
        if self.total_credit_budget < 0.0 {
            return Err(invalid("total_credit_budget", "must be non-negative"));
        }
        if self.produce_coin_rate < 0.0 {
            return Err(invalid("produce_coin_rate", "must be non-negative"));
        }
        if self.invest_coin_cost_numerator < 0.0 {
            return Err(invalid("invest_coin_cost_numerator", "must be non-negative"));
        }
        let lc = &self.labor_costs;
        for (field, v) in [
            ("labor_costs", lc.move_),
            ("labor_costs", lc.produce),
            ("labor_costs", lc.invest),
            ("labor_costs", lc.trade),
            ("labor_costs", lc.no_op),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "costs must be finite and non-negative"));
            }
        }
        for (field, r) in [("size_range", self.size_range), ("research_range", self.research_range)] {
            if !(r.min.is_finite() && r.max.is_finite() && r.min > 0.0 && r.min <= r.max) {
                return Err(invalid(field, "need 0 < min <= max"));
            }
        }
        if self.trade_price_levels == 0 {
            return Err(invalid("trade_price_levels", "must be positive"));
        }
        if self.order_lifetime == 0 || self.order_lifetime >= self.horizon() {
            return Err(invalid(
                "order_lifetime",
                "must be positive and shorter than the episode",
            ));
        }
        if self.max_open_orders == 0 {
            return Err(invalid("max_open_orders", "must be positive"));
        }
        if self.price_history_periods == 0 {
            return Err(invalid("price_history_periods", "must be positive"));
        }
        if self.project_coin_cost < 0.0 || self.project_labor_cost < 0.0 {
            return Err(invalid("project_coin_cost", "project costs must be non-negative"));
        }
        if self.project_credit_reward < 0.0 {
            return Err(invalid("project_credit_reward", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.project_share) {
            return Err(invalid("project_share", "not in [0, 1]"));
        }
        if !(self.pollution_discount > 0.0 && self.pollution_discount < 1.0) {
            return Err(invalid("pollution_discount", "not in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.pollution_prob) {
            return Err(invalid("pollution_prob", "not in [0, 1]"));
        }
        if !self.pollution_threshold.is_finite() {
            return Err(invalid("pollution_threshold", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.invest_forget_rate) {
            return Err(invalid("invest_forget_rate", "not in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.invest_fail_prob) {
            return Err(invalid("invest_fail_prob", "not in [0, 1]"));
        }
        if self.default_punishment < 0.0 || self.max_punishment < 0.0 {
            return Err(invalid("default_punishment", "must be non-negative"));
        }
        let s = &self.schedule;
        if !(s.decreasing_slope.is_finite() && s.decreasing_slope > 0.0) {
            return Err(invalid("schedule", "decreasing_slope must be positive"));
        }
        if !(s.convex_peak_fraction > 0.0 && s.convex_peak_fraction <= 1.0) {
            return Err(invalid("schedule", "convex_peak_fraction not in (0, 1]"));
        }
        if !(s.convex_floor > 0.0 && s.convex_floor < 1.0) {
            return Err(invalid("schedule", "convex_floor not in (0, 1)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = SimConfig::from_json("{}").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.eta, 0.23);
        assert_eq!(c.n_enterprises, 5);
    }

    #[test]
    fn eta_out_of_range_is_rejected() {
        let err = SimConfig::from_json(r#"{"eta": 1.5}"#).unwrap_err();
        assert!(err.to_string().contains("eta out of range"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            SimConfig::from_json(r#"{"etaa": 0.2}"#),
            Err(ConfigError::Parse(_))
        ));
        assert!(SimConfig::from_json(r#"{"labor_costs": {"fly": 1.0}}"#).is_err());
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(matches!(
            SimConfig::from_json(r#"{"format_version": 7}"#),
            Err(ConfigError::Version { found: 7, .. })
        ));
    }

    #[test]
    fn invariant_violations_name_the_field() {
        for (text, field) in [
            (r#"{"emission_floor": 1.0}"#, "emission_floor"),
            (r#"{"pollution_discount": 0.0}"#, "pollution_discount"),
            (r#"{"invest_fail_prob": 1.5}"#, "invest_fail_prob"),
            (r#"{"steps_per_period": 1}"#, "steps_per_period"),
            (r#"{"order_lifetime": 1000}"#, "order_lifetime"),
        ] {
            let err = SimConfig::from_json(text).unwrap_err().to_string();
            assert!(err.starts_with(field), "{text}: {err}");
        }
    }

    #[test]
    fn partial_config_keeps_other_defaults() {
        let c = SimConfig::from_json(r#"{"grid_width": 10, "labor_costs": {"trade": 0.1}}"#).unwrap();
        assert_eq!(c.grid_width, 10);
        assert_eq!(c.labor_costs.trade, 0.1);
        assert_eq!(c.labor_costs.produce, 1.0);
        assert_eq!(c.grid_height, 25);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = SimConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.delta = 0.11;
        assert_ne!(a.hash(), b.hash());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_config() -> impl Strategy<Value = SimConfig> {
            (
                (1usize..8, 1usize..12, 2usize..200, 3usize..40, 3usize..40),
                (0.01f64..0.99, 0.0f64..2.0, 1.0f64..1e4, 0.0f64..1.0),
                (0.01f64..0.99, 0.01f64..0.99, 0.0f64..1.0, 0.0f64..1.0),
                (1u32..30, 0.0f64..1e4, any::<u64>(), any::<bool>()),
            )
                .prop_map(
                    |(
                        (n, periods, spp, w, h),
                        (eta, alpha, beta, delta),
                        (floor, disc, fail, forget),
                        (levels, budget, seed, pin),
                    )| SimConfig {
                        n_enterprises: n,
                        n_periods: periods,
                        steps_per_period: spp,
                        grid_width: w,
                        grid_height: h,
                        eta,
                        alpha,
                        beta,
                        delta,
                        emission_floor: floor,
                        pollution_discount: disc,
                        invest_fail_prob: fail,
                        invest_forget_rate: forget,
                        trade_price_levels: levels,
                        total_credit_budget: budget,
                        order_lifetime: 1,
                        seed,
                        pin_punishment: pin,
                        ..SimConfig::default()
                    },
                )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn save_load_round_trip(c in arb_config()) {
                c.validate().unwrap();
                let text = c.to_json();
                let back = SimConfig::from_json(&text).unwrap();
                prop_assert_eq!(&back, &c);
                prop_assert_eq!(back.to_json(), text);
            }
        }
    }
}
