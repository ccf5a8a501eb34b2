//! Delayed stop-loss reward.
//!
//! Opens and waits pay nothing. Holding pays nothing while the trade's log
//! return stays above the stop threshold and the simple-return loss once it
//! sinks below, so short-term noise is ignored but a deepening loss keeps
//! hurting until the position is closed. Closing at or under the stop pays
//! the fixed bonus `a` (cutting the loss was correct); any other close pays
//! the simple return, doubled when a profitable close has the underlying
//! more than `g` away from its open-time price.

/// `return_t` is ln(MarketValue/Cost) at the acting bar;
/// `deviation_from_open` is the underlying's relative move since the open.
pub fn compute_reward(
    prev_action: u8,
    action: u8,
    return_t: f64,
    stop: f64,
    stop_close_reward: f64,
    deviation_g: f64,
    deviation_from_open: f64,
) -> f64 {
    debug_assert!(prev_action <= 1 && action <= 1, "binary action space");
    debug_assert!(stop < 0.0 && stop_close_reward > 0.0);
    match (prev_action, action) {
        (0, _) => 0.0,
        (1, 1) => {
            if return_t < stop {
                return_t.exp() - 1.0
            } else {
                0.0
            }
        }
        (1, 0) => {
            if return_t <= stop {
                stop_close_reward
            } else {
                let simple = return_t.exp() - 1.0;
                if return_t > 0.0 && deviation_from_open.abs() > deviation_g {
                    2.0 * simple
                } else {
                    simple
                }
            }
        }
        _ => unreachable!("actions validated by the environment"),
    }
}
