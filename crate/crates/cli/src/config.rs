//! Run configuration: a TOML file with nested sections, every key optional
//! with documented defaults, unknown keys rejected. Flags override file
//! values; file values override defaults. A run is fully described by one
//! file plus a seed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use straddle_core::env::{
    EnvConfig, ExpiryRule, FeeModel, MarketProfile, StraddleRules, BASE_FEATURES, OBS_FEATURES,
};
use straddle_core::marketdata::{Period, Regime, SyntheticSpec, TradingCalendar};
use straddle_core::qnet::HyperParams;
use straddle_core::resistance::ResistanceParams;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub resistance: ResistanceSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub backtest: BacktestSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub risk_free_rate: f64,
    pub trading_days_per_year: u32,
    pub bars_per_day: u32,
    pub contract_multiplier: f64,
    pub strike_interval: f64,
    /// "third-friday" or "fourth-wednesday".
    pub expiry_rule: String,
    pub min_days_to_roll: i64,
    /// Trade every calendar day (crypto-style).
    pub always_open: bool,
    pub fees: FeesSection,
}

impl Default for MarketSection {
    fn default() -> Self {
        MarketSection {
            risk_free_rate: 0.02,
            trading_days_per_year: 242,
            bars_per_day: 16,
            contract_multiplier: 100.0,
            strike_interval: 50.0,
            expiry_rule: "third-friday".into(),
            min_days_to_roll: 15,
            always_open: false,
            fees: FeesSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeesSection {
    /// "per-point", "strike-prop-capped" or "per-contract".
    pub variant: String,
    pub fee_per_point: Option<f64>,
    pub multiplier: Option<f64>,
    pub rate: Option<f64>,
    pub cap_frac: Option<f64>,
    pub contract_size: Option<f64>,
    pub fee: Option<f64>,
}

impl Default for FeesSection {
    fn default() -> Self {
        FeesSection {
            variant: "per-point".into(),
            fee_per_point: None,
            multiplier: None,
            rate: None,
            cap_frac: None,
            contract_size: None,
            fee: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Base-period bars; synthetic data is generated when absent.
    pub csv: Option<PathBuf>,
    /// Holiday list, one ISO date per line.
    pub holidays: Option<PathBuf>,
    pub base_period_minutes: u32,
    /// Leading fraction of bars used for training; the rest backtests.
    pub train_split: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { csv: None, holidays: None, base_period_minutes: 15, train_split: 0.7 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub bars: usize,
    pub initial_price: f64,
    pub start_date: String,
    pub session_open_minutes: u32,
    pub regimes: Vec<RegimeSection>,
    pub transition: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub vol: f64,
    pub drift: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            bars: 16 * 600,
            initial_price: 3000.0,
            start_date: "2020-01-06".into(),
            session_open_minutes: 90,
            regimes: vec![
                RegimeSection { vol: 0.1, drift: 0.0 },
                RegimeSection { vol: 0.6, drift: 0.0 },
            ],
            transition: vec![vec![0.9985, 0.0015], vec![0.003, 0.997]],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub window_steps: usize,
    pub hv_days: u32,
    pub max_hold_days: u32,
    pub stop: f64,
    pub stop_close_reward: f64,
    pub deviation_g: f64,
    pub position_limit: f64,
    pub initial_capital: f64,
    pub periods: Vec<u32>,
    pub episode_days: u32,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            window_steps: 64,
            hv_days: 5,
            max_hold_days: 5,
            stop: -0.15,
            stop_close_reward: 0.10,
            deviation_g: 0.05,
            position_limit: 0.20,
            initial_capital: 1_000_000.0,
            periods: vec![30, 60, 1440],
            episode_days: 30,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResistanceSection {
    pub window: usize,
    pub reversal_pct: f64,
    pub breakthrough_pct: f64,
    pub area_pct: f64,
    pub merge_pct: f64,
    pub lookback_days: u32,
}

impl Default for ResistanceSection {
    fn default() -> Self {
        ResistanceSection {
            window: 16,
            reversal_pct: 0.01,
            breakthrough_pct: 0.005,
            area_pct: 0.003,
            merge_pct: 0.005,
            lookback_days: 20,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { embed_dim: 64, heads: 4, layers: 2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_sync_interval: u64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub grad_clip_norm: f64,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 64,
            buffer_capacity: 100_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            target_sync_interval: 1_000,
            total_steps: 50_000,
            warmup_steps: 2_000,
            grad_clip_norm: 10.0,
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub policies: Vec<String>,
    pub ma_fast: usize,
    pub ma_slow: usize,
    pub random_open_prob: f64,
    pub random_hold_bars: u32,
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection {
            policies: vec!["long".into(), "ma".into()],
            ma_fast: 5,
            ma_slow: 20,
            random_open_prob: 0.02,
            random_hold_bars: 40,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
            }
        }
    }

    /// Seed with no entropy fallback: it must come from the file or a flag.
    pub fn require_seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.seed).context("a seed is required: set `seed` in the config or pass --seed")
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn calendar(&self) -> Result<TradingCalendar> {
        let mut cal = if self.market.always_open {
            TradingCalendar::always_open(self.market.bars_per_day)
        } else {
            TradingCalendar::week_5x(self.market.bars_per_day)
        };
        if let Some(path) = &self.data.holidays {
            if !path.exists() {
                bail!("holiday file {} does not exist", path.display());
            }
            cal = cal.with_holidays(TradingCalendar::load_holidays(path)?);
        }
        Ok(cal)
    }

    pub fn fee_model(&self) -> Result<FeeModel> {
        let f = &self.market.fees;
        let model = match f.variant.as_str() {
            "per-point" => FeeModel::PerPoint {
                fee_per_point: f.fee_per_point.unwrap_or(0.15),
                multiplier: f.multiplier.unwrap_or(self.market.contract_multiplier),
            },
            "strike-prop-capped" => FeeModel::StrikeProportionalCapped {
                rate: f.rate.unwrap_or(0.0002),
                cap_frac: f.cap_frac.unwrap_or(0.10),
                contract_size: f.contract_size.unwrap_or(self.market.contract_multiplier),
            },
            "per-contract" => FeeModel::PerContract { fee: f.fee.unwrap_or(1.5) },
            other => bail!("unknown fee variant {other:?} (per-point, strike-prop-capped, per-contract)"),
        };
        Ok(model)
    }

    pub fn market_profile(&self) -> Result<MarketProfile> {
        let rules = StraddleRules {
            strike_interval: self.market.strike_interval,
            min_days_to_roll: self.market.min_days_to_roll,
            expiry_rule: match self.market.expiry_rule.as_str() {
                "third-friday" => ExpiryRule::ThirdFriday,
                "fourth-wednesday" => ExpiryRule::FourthWednesday,
                other => bail!("unknown expiry rule {other:?} (third-friday, fourth-wednesday)"),
            },
        };
        Ok(MarketProfile {
            risk_free_rate: self.market.risk_free_rate,
            trading_days_per_year: self.market.trading_days_per_year,
            contract_multiplier: self.market.contract_multiplier,
            fees: self.fee_model()?,
            rules,
        })
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let cfg = EnvConfig {
            window_steps: self.env.window_steps,
            hv_days: self.env.hv_days,
            max_hold_days: self.env.max_hold_days,
            stop: self.env.stop,
            stop_close_reward: self.env.stop_close_reward,
            deviation_g: self.env.deviation_g,
            position_limit: self.env.position_limit,
            initial_capital: self.env.initial_capital,
            periods: self.env.periods.clone(),
            episode_days: self.env.episode_days,
            resistance: ResistanceParams {
                window: self.resistance.window,
                reversal: self.resistance.reversal_pct,
                breakthrough: self.resistance.breakthrough_pct,
                area: self.resistance.area_pct,
                lookback_days: self.resistance.lookback_days,
            },
            merge_pct: self.resistance.merge_pct,
            profile: self.market_profile()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            feature_dim: BASE_FEATURES,
            obs_feature_dim: OBS_FEATURES,
            window: self.env.window_steps,
            embed_dim: self.network.embed_dim,
            heads: self.network.heads,
            layers: self.network.layers,
            periods: self.env.periods.clone(),
        }
    }

    pub fn train_config(&self, seed: u64) -> straddle_core::ddqn::TrainConfig {
        let t = &self.train;
        straddle_core::ddqn::TrainConfig {
            gamma: t.gamma,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            buffer_capacity: t.buffer_capacity,
            eps_start: t.eps_start,
            eps_end: t.eps_end,
            eps_decay_steps: t.eps_decay_steps,
            target_sync_interval: t.target_sync_interval,
            total_steps: t.total_steps,
            warmup_steps: t.warmup_steps,
            seed,
            grad_clip_norm: t.grad_clip_norm,
            log_every: t.log_every,
            checkpoint_every: t.checkpoint_every,
        }
    }

    pub fn synthetic_spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let s = &self.synthetic;
        let start_date = s
            .start_date
            .parse()
            .with_context(|| format!("bad synthetic.start_date {:?}", s.start_date))?;
        Ok(SyntheticSpec {
            regimes: s.regimes.iter().map(|r| Regime { vol: r.vol, drift: r.drift }).collect(),
            transition: s.transition.clone(),
            seed,
            bars: s.bars,
            initial_price: s.initial_price,
            period: Period::minutes(self.data.base_period_minutes),
            start_date,
            session_open_minutes: s.session_open_minutes,
            calendar: self.calendar()?,
            trading_days_per_year: self.market.trading_days_per_year,
        })
    }

    /// Base-period bars per year, for Sharpe annualization.
    pub fn bars_per_year(&self) -> f64 {
        (self.market.bars_per_day * self.market.trading_days_per_year) as f64
    }
}
