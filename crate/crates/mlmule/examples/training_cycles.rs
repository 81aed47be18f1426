//! The two in-house training cycles, run straight from the protocol
//! API: share-aggregate-train-share when the data lives on the fixed
//! device, share-aggregate-share-train when it lives on the mule.
//! Finishes by writing the mule's snapshot through the text checkpoint
//! format and back.
//!
//! Run with: cargo run --example training_cycles

use mlmule::learner::{
    evaluate, init_model, read_snapshot, write_snapshot, Hyperparams, ModelSnapshot, ShapeTag,
};
use mlmule::partition::{synth_dataset, train_test_split, SynthSpec};
use mlmule::protocol::{
    fixed_training_cycle, mobile_training_cycle, FixedDeviceState, FreshnessParams, MuleState,
};
use mlmule::rng;

fn main() {
    let spec = SynthSpec {
        superclasses: 2,
        subclasses_per_super: 2,
        samples_per_subclass: 120,
        feature_dim: 4,
        sigma: 0.2,
    };
    let mut r = rng::derive(3, rng::STREAM_LEARNING);
    let dataset = synth_dataset(&spec, &mut r).unwrap();
    let (train_ds, test_ds) = train_test_split(&dataset, 0.2, &mut r).unwrap();
    let shape = ShapeTag::logistic(4, 4);
    let hyper = Hyperparams::default();
    let fresh = FreshnessParams::default();
    let transfer_steps = 3;

    println!("=== Fixed-device training cycle ===");
    let mule = MuleState::new(ModelSnapshot::new(init_model(shape, &mut r)));
    let mut fixed = FixedDeviceState::new(ModelSnapshot::new(init_model(shape, &mut r)));
    fixed.local_train = Some(train_ds.clone());
    fixed.local_test = Some(test_ds.clone());

    let before = evaluate(&fixed.snapshot.params, &test_ds).unwrap();
    println!("fixed device before any contact: accuracy {:.3}", before.accuracy);

    let mut fixed_now = fixed.clone();
    let mut mule_now = mule.clone();
    for cycle in 0..5 {
        let now = cycle * (2 * transfer_steps as u64);
        let (m2, f2, report) = fixed_training_cycle(
            &mule_now,
            &fixed_now,
            now,
            transfer_steps,
            &hyper,
            &fresh,
            &mut r,
        )
        .unwrap();
        mule_now = m2;
        fixed_now = f2;
        let acc = evaluate(&fixed_now.snapshot.params, &test_ds).unwrap().accuracy;
        println!(
            "cycle {cycle}: commit t {:>2}, accepted {}, threshold {:.2} -> {:.2}, fixed accuracy {acc:.3}",
            report.t, report.accepted, report.threshold_before, report.threshold_after
        );
    }
    println!(
        "mule now carries the space's model (last_update {}, weight {})",
        mule_now.snapshot.last_update, mule_now.snapshot.n_train_samples
    );

    println!("\n=== Mobile-device training cycle ===");
    let mut mule = MuleState::new(ModelSnapshot::new(init_model(shape, &mut r)));
    mule.local_train = Some(train_ds);
    mule.local_test = Some(test_ds.clone());
    let fixed = FixedDeviceState::new(ModelSnapshot::new(init_model(shape, &mut r)));

    let (mule_after, fixed_after, report) =
        mobile_training_cycle(&mule, &fixed, 100, transfer_steps, &hyper, &fresh, &mut r).unwrap();
    println!(
        "one cycle at t 100: accepted {}, mule trained at t {}, fixed last_update {} (it only aggregates)",
        report.accepted, mule_after.snapshot.last_update, fixed_after.snapshot.last_update
    );
    let acc = evaluate(&mule_after.snapshot.params, &test_ds).unwrap().accuracy;
    println!("mule accuracy after its cycle: {acc:.3}");

    println!("\n=== Checkpoint round trip ===");
    let mut buffer = Vec::new();
    write_snapshot(&mule_after.snapshot, &mut buffer).unwrap();
    let text = String::from_utf8(buffer).unwrap();
    println!("{} checkpoint bytes, first line: {}", text.len(), text.lines().next().unwrap());
    let back = read_snapshot(&text).unwrap();
    assert_eq!(back, mule_after.snapshot);
    println!("round trip is bit-exact");
}
