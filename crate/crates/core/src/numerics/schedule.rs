/// Fraction of steps spent warming up.
pub const WARMUP_FRACTION: f64 = 0.1;

/// Linear warmup from 0 to `peak` over the first `ceil(0.1 * total)` steps,
/// then linear decay back to 0 at `total`.
pub fn lr_schedule(step: u64, total_steps: u64, peak: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let step = step.min(total_steps);
    let warmup = warmup_steps(total_steps);
    if step <= warmup {
        if warmup == 0 {
            return peak;
        }
        peak * (step as f64 / warmup as f64)
    } else {
        let span = total_steps - warmup;
        peak * ((total_steps - step) as f64 / span as f64)
    }
}

pub fn warmup_steps(total_steps: u64) -> u64 {
    (WARMUP_FRACTION * total_steps as f64).ceil() as u64
}
