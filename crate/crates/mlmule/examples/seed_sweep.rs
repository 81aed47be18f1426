//! Programmatic seed sweep through the same plumbing the `mule-sim`
//! binary uses: write a config, fan out seeds, inspect the manifest,
//! and join everything into one smoothed comparison CSV.
//!
//! Run with: cargo run --release --example seed_sweep

use mlmule::cli::{cmd_compare, cmd_simulate};

fn main() {
    let dir = std::env::temp_dir().join("mule_seed_sweep");
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("exp.cfg");
    std::fs::write(
        &config_path,
        "[sim]\n\
         method = mlmule\n\
         total_steps = 600\n\
         eval_every = 25\n\
         \n\
         [data]\n\
         samples_per_subclass = 120\n\
         partition = dirichlet\n\
         alpha = 0.01\n",
    )
    .unwrap();

    let mule_dir = dir.join("mule");
    let manifest = cmd_simulate(&config_path, &[], Some(vec![0, 1, 2]), &mule_dir).unwrap();
    println!("simulate wrote {} files under {}", manifest.files.len(), mule_dir.display());
    println!("config hash {}", manifest.config_hash);
    for f in &manifest.files {
        println!("  {f}");
    }

    let local_dir = dir.join("local");
    let sets = vec![("method".to_string(), "local".to_string())];
    cmd_simulate(&config_path, &sets, Some(vec![0, 1, 2]), &local_dir).unwrap();

    let out = dir.join("compare.csv");
    cmd_compare(&[mule_dir, local_dir], 4, Some(&out)).unwrap();
    let joined = std::fs::read_to_string(&out).unwrap();
    println!("\njoined comparison ({} lines):", joined.lines().count());
    for line in joined.lines().take(8) {
        println!("  {line}");
    }
    println!("  ...");
    println!("\nfull CSV at {}", out.display());
}
