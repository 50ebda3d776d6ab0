use std::fmt;

use super::{
    annualized_return, annualized_volatility, classify_hhi, detect_regime_change, hhi,
    max_drawdown, sharpe_ratio, sortino_ratio, MetricError, MetricsConfig, PortfolioReturns,
    Result,
};
use crate::optimizer::WeightVector;

/// Marker written in place of a metric that cannot be computed.
pub const UNDEFINED: &str = "--";

/// Key names of a serialised [`MetricsReport`], in output order.
pub const METRIC_KEYS: [&str; 9] = [
    "expected_return",
    "volatility",
    "sharpe",
    "sortino",
    "max_drawdown",
    "liquidity_risk",
    "liquidity_hhi",
    "regime_change",
    "regime_statistic",
];

/// A numeric metric or an explicit undefined marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Undefined => None,
        }
    }

    /// Four-decimal display form, `--` when undefined.
    pub fn display(self) -> String {
        match self {
            Self::Value(v) => format_display(v),
            Self::Undefined => UNDEFINED.to_string(),
        }
    }

    /// Shortest exact form, `--` when undefined.
    pub fn exact(self) -> String {
        match self {
            Self::Value(v) => v.to_string(),
            Self::Undefined => UNDEFINED.to_string(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == UNDEFINED {
            return Ok(Self::Undefined);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Self::Value)
            .ok_or_else(|| MetricError::Parse(format!("bad number `{s}`")))
    }
}

impl<E> From<std::result::Result<f64, E>> for Metric {
    fn from(r: std::result::Result<f64, E>) -> Self {
        r.map_or(Self::Undefined, Self::Value)
    }
}

/// Rounds to four decimals for display; negative zero prints as `0.0000`.
pub fn format_display(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiquidityRisk {
    Low,
    ModeratelyLow,
    Moderate,
    High,
    NotAssessed,
}

impl LiquidityRisk {
    fn key(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::ModeratelyLow => "moderately_low",
            Self::Moderate => "moderate",
            Self::High => "high",
            Self::NotAssessed => "not_assessed",
        }
    }

    fn from_key(s: &str) -> Option<Self> {
        Some(match s {
            "low" => Self::Low,
            "moderately_low" => Self::ModeratelyLow,
            "moderate" => Self::Moderate,
            "high" => Self::High,
            "not_assessed" => Self::NotAssessed,
            _ => return None,
        })
    }
}

impl fmt::Display for LiquidityRisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Low => "Low",
            Self::ModeratelyLow => "Moderately Low",
            Self::Moderate => "Moderate",
            Self::High => "High",
            Self::NotAssessed => UNDEFINED,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeStatus {
    /// No training context was supplied.
    NotAssessed,
    /// A side was too short or had zero variance.
    Undefined,
    Assessed {
        statistic: f64,
        changed: bool,
    },
}

impl RegimeStatus {
    pub fn statistic(self) -> Metric {
        match self {
            Self::Assessed { statistic, .. } => Metric::Value(statistic),
            _ => Metric::Undefined,
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::NotAssessed => "not_assessed",
            Self::Undefined => "undefined",
            Self::Assessed { changed: true, .. } => "yes",
            Self::Assessed { changed: false, .. } => "no",
        }
    }
}

impl fmt::Display for RegimeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Assessed { changed: true, .. } => "Yes",
            Self::Assessed { changed: false, .. } => "No",
            _ => UNDEFINED,
        })
    }
}

/// Every metric for one portfolio return series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub expected_return: Metric,
    pub volatility: Metric,
    pub sharpe: Metric,
    pub sortino: Metric,
    pub max_drawdown: Metric,
    /// Concentration proxy derived from the final weights, not from market data.
    pub liquidity_risk: LiquidityRisk,
    pub liquidity_hhi: Metric,
    pub regime_change: RegimeStatus,
}

impl MetricsReport {
    /// The numeric fields by key, used for display and numeral checks.
    pub fn numeric_fields(&self) -> [(&'static str, Metric); 7] {
        [
            ("expected_return", self.expected_return),
            ("volatility", self.volatility),
            ("sharpe", self.sharpe),
            ("sortino", self.sortino),
            ("max_drawdown", self.max_drawdown),
            ("liquidity_hhi", self.liquidity_hhi),
            ("regime_statistic", self.regime_change.statistic()),
        ]
    }

    /// `key=value` lines at full precision.
    pub fn to_kv(&self) -> String {
        self.render(Metric::exact)
    }

    /// `key=value` lines rounded to four decimals.
    pub fn to_display_kv(&self) -> String {
        self.render(Metric::display)
    }

    fn render(&self, num: fn(Metric) -> String) -> String {
        let mut out = String::new();
        for (key, m) in &self.numeric_fields()[..5] {
            out.push_str(&format!("{key}={}\n", num(*m)));
        }
        out.push_str(&format!("liquidity_risk={}\n", self.liquidity_risk.key()));
        out.push_str(&format!("liquidity_hhi={}\n", num(self.liquidity_hhi)));
        out.push_str(&format!("regime_change={}\n", self.regime_change.key()));
        out.push_str(&format!(
            "regime_statistic={}\n",
            num(self.regime_change.statistic())
        ));
        out
    }

    /// Parses the output of [`to_kv`](Self::to_kv). Every key is required;
    /// unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut slots: [Option<&str>; 9] = [None; 9];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MetricError::Parse(format!("line `{line}` has no `=`")))?;
            let idx = METRIC_KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| MetricError::Parse(format!("unknown key `{k}`")))?;
            if slots[idx].replace(v.trim()).is_some() {
                return Err(MetricError::Parse(format!("duplicate key `{k}`")));
            }
        }
        let get = |i: usize| {
            slots[i].ok_or_else(|| MetricError::Parse(format!("missing key `{}`", METRIC_KEYS[i])))
        };
        let liquidity_risk = LiquidityRisk::from_key(get(5)?)
            .ok_or_else(|| MetricError::Parse("bad liquidity_risk".into()))?;
        let statistic = Metric::parse(get(8)?)?;
        let regime_change = match (get(7)?, statistic) {
            ("not_assessed", Metric::Undefined) => RegimeStatus::NotAssessed,
            ("undefined", Metric::Undefined) => RegimeStatus::Undefined,
            ("yes", Metric::Value(statistic)) => RegimeStatus::Assessed {
                statistic,
                changed: true,
            },
            ("no", Metric::Value(statistic)) => RegimeStatus::Assessed {
                statistic,
                changed: false,
            },
            (other, _) => {
                return Err(MetricError::Parse(format!(
                    "inconsistent regime_change `{other}`"
                )))
            }
        };
        Ok(Self {
            expected_return: Metric::parse(get(0)?)?,
            volatility: Metric::parse(get(1)?)?,
            sharpe: Metric::parse(get(2)?)?,
            sortino: Metric::parse(get(3)?)?,
            max_drawdown: Metric::parse(get(4)?)?,
            liquidity_risk,
            liquidity_hhi: Metric::parse(get(6)?)?,
            regime_change,
        })
    }
}

/// Computes every metric; a metric whose preconditions fail becomes
/// [`Metric::Undefined`] instead of failing the whole report.
///
/// Liquidity is assessed only when `final_weights` is given, the regime test
/// only when `train_context` is given.
pub fn full_report(
    r: &PortfolioReturns,
    final_weights: Option<&WeightVector>,
    train_context: Option<&PortfolioReturns>,
    cfg: &MetricsConfig,
) -> MetricsReport {
    let (liquidity_risk, liquidity_hhi) = match final_weights {
        Some(w) => {
            let h = hhi(w);
            (classify_hhi(h, cfg), Metric::Value(h))
        }
        None => (LiquidityRisk::NotAssessed, Metric::Undefined),
    };
    let regime_change = match train_context {
        None => RegimeStatus::NotAssessed,
        Some(train) => match detect_regime_change(train, r, cfg) {
            Ok(t) => RegimeStatus::Assessed {
                statistic: t.statistic,
                changed: t.changed,
            },
            Err(_) => RegimeStatus::Undefined,
        },
    };
    MetricsReport {
        expected_return: annualized_return(r, cfg).into(),
        volatility: annualized_volatility(r, cfg).into(),
        sharpe: sharpe_ratio(r, cfg).into(),
        sortino: sortino_ratio(r, cfg).into(),
        max_drawdown: max_drawdown(r).into(),
        liquidity_risk,
        liquidity_hhi,
        regime_change,
    }
}
