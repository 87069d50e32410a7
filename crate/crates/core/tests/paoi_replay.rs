//! Peak age recomputed from raw delivery timelines.

mod common;

use common::{random_scenario, verify_paoi};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn paoi_matches_brute_force_on_every_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut total = 0;
    for scenario in 0..10 {
        let cfg = random_scenario(&mut rng);
        total += verify_paoi(&cfg).unwrap_or_else(|e| panic!("scenario {scenario}: {e}"));
    }
    // A scenario can legitimately have none, e.g. when the agent's own link is poor.
    assert!(total > 1000, "{total} samples");
}
