//! Stand-alone evaluator of the placement formulas, written against plain
//! numbers only so it shares no code with the library.

/// Shannon rate in bits/s. `interference` is the summed received power of
/// the other transmitters on the channel, watts.
pub fn rate(bandwidth: f64, tx_power: f64, gain: f64, noise: f64, interference: f64) -> f64 {
    let snr = tx_power * gain / (noise + interference);
    bandwidth * (snr + 1.0).ln() / std::f64::consts::LN_2
}

/// (seconds, joules) for running `kilobits` on the device itself.
pub fn local(kilobits: f64, cycles_per_bit: f64, capacity: f64, compute_power: f64) -> (f64, f64) {
    let cycles = kilobits * 1000.0 * cycles_per_bit;
    let t = cycles / capacity;
    (t, t * compute_power)
}

pub fn edge(kilobits: f64, edge_cpb: f64, edge_capacity: f64, rate: f64, upload_power: f64) -> (f64, f64) {
    let bits = kilobits * 1000.0;
    let t = bits * edge_cpb / edge_capacity + bits / rate;
    (t, t * upload_power)
}

#[allow(clippy::too_many_arguments)]
pub fn cloud(
    kilobits: f64,
    cloud_cpb: f64,
    cloud_capacity: f64,
    rate: f64,
    n: f64,
    fiber_rate: f64,
    fiber_latency: f64,
    upload_power: f64,
) -> (f64, f64) {
    let bits = kilobits * 1000.0;
    let compute = bits * cloud_cpb / cloud_capacity;
    let wireless = n * (bits / rate);
    let backhaul = fiber_latency + bits / fiber_rate;
    let t = compute + wireless + backhaul;
    (t, t * upload_power)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}
