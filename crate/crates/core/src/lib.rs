//! Straddle-option trading engine.
//!
//! The pipeline: candlestick ingestion and synthesis ([`marketdata`]),
//! historical-volatility estimation and Black-Scholes settlement ([`pricing`]),
//! swing-based resistance levels ([`resistance`]), a simulated straddle trading
//! environment with a delayed stop-loss reward ([`env`]), a transformer +
//! channel-attention Q-network with hand-written gradients ([`qnet`]),
//! Double-DQN training ([`ddqn`]) and policy backtesting with equity-curve
//! metrics ([`backtest`]).

pub mod backtest;
pub mod ddqn;
pub mod env;
pub mod marketdata;
pub mod pricing;
pub mod qnet;
pub mod resistance;
