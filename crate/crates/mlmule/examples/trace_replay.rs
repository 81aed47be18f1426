//! Check-in trace replay.
//!
//! Parses a small inline trace in the `user,place,start,duration`
//! format and replays the co-location events it encodes. Between
//! visits a user is simply holding its model (mule phase).
//!
//! Run with: cargo run --example trace_replay

use mlmule::worldsim::{parse_trace, World, WorldConfig};

const TRACE: &str = "\
# user, place, start step, duration in steps
amy,cafe,0,6
amy,gym,20,4
bob,cafe,8,5
bob,library,30,10
cho,gym,5,3
cho,gym,40,8
";

fn main() {
    let world = World::build(&WorldConfig::default()).unwrap();
    let trace = parse_trace(TRACE, world.n_spaces(), "inline").unwrap();

    println!("=== Trace ===");
    println!("{} users, {} visit records", trace.n_users, trace.records.len());
    for r in &trace.records {
        println!(
            "  user {} -> space {} during [{}, {})",
            r.user,
            r.space.0,
            r.start,
            r.start + r.duration
        );
    }

    println!("\n=== Replay, first 50 steps ===");
    for t in 0..50 {
        let events = trace.colocations(&world, t);
        if !events.is_empty() {
            let listed: Vec<String> = events
                .iter()
                .map(|e| format!("mule {} @ fixed {}", e.mule, e.fixed))
                .collect();
            println!("t {t:>2}: {}", listed.join(", "));
        }
    }

    let horizon = 50;
    println!(
        "\ntotal co-location events in [0, {horizon}): {}",
        trace.total_colocations(horizon)
    );
}
