//! Events per second of the engine on a stationary start.

use std::time::Instant;

use zrp_core::equilibrium::{fugacity_of_density, sample_configuration};
use zrp_core::kmc::{advance_until, DisplacementSampler};
use zrp_core::model::{ModelSpec, RateFamily};
use zrp_core::rng::{stream, tag};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).map_or(1.5, |s| s.parse().unwrap());
    let side: usize = args.get(2).map_or(2048, |s| s.parse().unwrap());
    let horizon: f64 = args.get(3).map_or(2000.0, |s| s.parse().unwrap());
    let rate = match args.get(4).map(String::as_str) {
        Some("affine") => RateFamily::Affine { a: 1.0, b: 0.5 },
        _ => RateFamily::Linear { a: 1.0 },
    };
    let spec = ModelSpec::new(1, alpha, side, rate, 1.0).unwrap();
    let profile = fugacity_of_density(spec.gamma, &spec.rate, 1e-12).unwrap();
    let sampler = DisplacementSampler::for_spec(&spec).unwrap();
    let mut rng = stream(1, tag::INITIAL, 0);
    let mut config = sample_configuration(&mut rng, &spec, &profile);
    let mut rng = stream(1, tag::DYNAMICS, 0);
    let start = Instant::now();
    let summary = advance_until(&mut config, &sampler, horizon, &mut (), &mut rng).unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{} events in {secs:.3} s: {:.1} ns/event",
        summary.events,
        1e9 * secs / summary.events as f64
    );
}
