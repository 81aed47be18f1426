//! The adaptive model-freshness filter.
//!
//! A fixed device tracks the update times of models it accepts and
//! moves its threshold toward median + beta * MAD of that window. Fresh
//! snapshots keep passing; a model that went stale while its mule
//! wandered gets filtered out instead of contaminating the aggregate.
//!
//! Run with: cargo run --example freshness_filter

use mlmule::learner::{init_model, ModelSnapshot, ShapeTag};
use mlmule::protocol::{freshness_accept, update_freshness_threshold, FreshnessParams};
use mlmule::rng;

fn main() {
    let fresh = FreshnessParams::default();
    println!(
        "filter parameters: alpha {}, beta {}, window {}\n",
        fresh.alpha, fresh.beta, fresh.window
    );

    let mut r = rng::derive(1, rng::STREAM_LEARNING);
    let params = init_model(ShapeTag::logistic(4, 3), &mut r);

    // arrivals: mostly a steady fresh stream, plus two stale stragglers
    let arrivals: Vec<(u64, &str)> = vec![
        (10, "mule A"),
        (14, "mule B"),
        (22, "mule A"),
        (30, "mule C"),
        (8, "mule D (stale straggler)"),
        (41, "mule B"),
        (52, "mule A"),
        (18, "mule E (stale straggler)"),
        (66, "mule C"),
        (75, "mule B"),
    ];

    let mut threshold = 0.0_f64;
    let mut window: Vec<u64> = Vec::new();

    println!("{:<28} {:>11} {:>11} {:>9}", "arrival", "last_update", "threshold", "verdict");
    for (last_update, who) in arrivals {
        let snapshot = ModelSnapshot {
            params: params.clone(),
            last_update,
            n_train_samples: 100,
        };
        let accepted = freshness_accept(&snapshot, threshold);
        print!("{who:<28} {last_update:>11} {threshold:>11.3}");
        if accepted {
            window.push(last_update);
            if window.len() > fresh.window {
                window.remove(0);
            }
            threshold =
                update_freshness_threshold(threshold, &window, fresh.alpha, fresh.beta).unwrap();
            println!("{:>9}", "accept");
        } else {
            println!("{:>9}", "REJECT");
        }
    }

    println!("\nThe threshold starts at zero (cold start accepts everything)");
    println!("and climbs with the accepted update times, so the two stale");
    println!("stragglers bounce off once the space has seen fresher models.");
}
