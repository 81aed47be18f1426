//! Command-line front end: experiment execution, seed sweeps, partition
//! statistics, trace conversion, and run comparison. The `mule-sim`
//! binary is a thin dispatcher over these functions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{load_config, RunManifest, SimConfig, ARTIFACT_VERSION};
use crate::engine::{moving_average, run_simulation, MetricRow, MetricsLog};
use crate::error::{Error, Result};
use crate::partition::{
    label_entropy, partition_dirichlet, partition_iid, partition_shards, synth_dataset,
};
use crate::config::PartitionScheme;
use crate::rng;

/// Maps errors onto process exit codes: 2 bad config or inputs, 3 IO,
/// 4 mostly-malformed conversion input, 5 model-shape mismatch.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 3,
        Error::TooManyMalformed { .. } => 4,
        Error::ShapeMismatch(_) => 5,
        _ => 2,
    }
}

/// `--seeds` accepts a single seed, a comma list, or an inclusive range
/// `a..b`.
pub fn parse_seed_spec(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("bad seed spec `{spec}` (use 5, 0,1,2 or 0..9)"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
        .collect()
}

fn apply_overrides(cfg: &mut SimConfig, sets: &[(String, String)]) -> Result<()> {
    for (key, value) in sets {
        cfg.set_key(key, value)?;
    }
    Ok(())
}

/// A missing config file is a configuration error (exit 2), not an I/O
/// failure; write-side I/O problems keep exit 3.
fn load_config_for_cli(path: &Path) -> Result<SimConfig> {
    load_config(path).map_err(|e| match &e {
        Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            Error::config(format!("config file not found: {}", path.display()))
        }
        _ => e,
    })
}

fn sweep_parallelism() -> usize {
    std::env::var("MULE_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(std::num::NonZeroUsize::get)
                .unwrap_or(1)
        })
}

/// Runs the configured simulation once per seed, writes one CSV per run
/// plus a manifest and the canonical config, and returns the manifest.
/// Seeds fan out across worker threads capped by `MULE_SIM_THREADS`.
pub fn cmd_simulate(
    config_path: &Path,
    sets: &[(String, String)],
    seeds: Option<Vec<u64>>,
    out_dir: &Path,
) -> Result<RunManifest> {
    let mut cfg = load_config_for_cli(config_path)?;
    apply_overrides(&mut cfg, sets)?;
    let seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
    if seeds.is_empty() {
        return Err(Error::config("seed list is empty"));
    }
    cfg.validate()?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let workers = sweep_parallelism().min(seeds.len());
    let mut results: Vec<Option<Result<MetricsLog>>> = Vec::new();
    results.resize_with(seeds.len(), || None);

    std::thread::scope(|scope| {
        let chunk = seeds.len().div_ceil(workers);
        for (chunk_idx, (seed_chunk, slot_chunk)) in seeds
            .chunks(chunk)
            .zip(results.chunks_mut(chunk))
            .enumerate()
        {
            let cfg = cfg.clone();
            let _ = chunk_idx;
            scope.spawn(move || {
                for (&seed, slot) in seed_chunk.iter().zip(slot_chunk.iter_mut()) {
                    let mut run_cfg = cfg.clone();
                    run_cfg.seed = seed;
                    run_cfg.world.seed = seed;
                    *slot = Some(run_simulation(&run_cfg));
                }
            });
        }
    });

    let mut files = Vec::with_capacity(seeds.len());
    for (&seed, slot) in seeds.iter().zip(results) {
        let log = slot.expect("worker filled every slot")?;
        let name = cfg.run_file_name(seed);
        log.write_csv(&out_dir.join(&name))?;
        files.push(name);
    }

    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        config_hash: cfg.config_hash(),
        shape_tag: cfg.shape_tag(),
        seeds,
        out_dir: out_dir.to_path_buf(),
        files,
    };
    manifest.write_file(&out_dir.join("manifest.txt"))?;
    fs::write(out_dir.join("config.cfg"), cfg.to_canonical_text())
        .map_err(|e| Error::io(out_dir.join("config.cfg"), e))?;
    Ok(manifest)
}

/// Emits the per-owner class-count table for the configured partition:
/// one row per owner, one column per class, plus the owner's label
/// entropy. Written to `out`, or stdout when `None`.
pub fn cmd_partition_stats(
    config_path: &Path,
    sets: &[(String, String)],
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config_for_cli(config_path)?;
    apply_overrides(&mut cfg, sets)?;

    let mut learn_rng = rng::derive(cfg.seed, rng::STREAM_LEARNING);
    let dataset = synth_dataset(&cfg.data, &mut learn_rng)?;
    let world = crate::worldsim::World::build(&cfg.world)?;
    let n_spaces = world.n_spaces();

    let mut owners: Vec<(String, Vec<usize>)> = Vec::new();
    match cfg.partition {
        PartitionScheme::Iid => {
            let pa = partition_iid(&dataset, n_spaces, &mut learn_rng)?;
            for o in 0..n_spaces {
                owners.push((format!("owner{o}"), pa.samples(o).to_vec()));
            }
        }
        PartitionScheme::Dirichlet => {
            let pa = partition_dirichlet(&dataset, n_spaces, cfg.alpha, &mut learn_rng)?;
            for o in 0..n_spaces {
                owners.push((format!("owner{o}"), pa.samples(o).to_vec()));
            }
        }
        PartitionScheme::Shards => {
            let shards = partition_shards(&dataset, &world)?;
            for (s, samples) in shards.space_samples.iter().enumerate() {
                owners.push((format!("space{s}"), samples.clone()));
            }
            for (sup, samples) in shards.general_pool.iter().enumerate() {
                owners.push((format!("pool{sup}"), samples.clone()));
            }
        }
    }

    let k = dataset.n_classes();
    let mut text = String::from("owner");
    for c in 0..k {
        text.push_str(&format!(",c{c}"));
    }
    text.push_str(",entropy\n");
    for (name, samples) in &owners {
        let counts = dataset.subset(samples).class_counts();
        text.push_str(name);
        for c in &counts {
            text.push_str(&format!(",{c}"));
        }
        text.push_str(&format!(",{}\n", label_entropy(&counts)));
    }

    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertReport {
    pub users: usize,
    pub places: usize,
    pub records: usize,
    pub malformed: usize,
}

/// Converts a check-in table (`user,place,timestamp,dwell` per line,
/// optional header) into the trace format, dividing timestamps and
/// dwells by `time_div` and flooring dwells at `min_dwell`. Malformed
/// rows are skipped and counted; more than half malformed aborts.
pub fn cmd_trace_convert(
    input: &Path,
    output: &Path,
    time_div: u64,
    min_dwell: u64,
) -> Result<ConvertReport> {
    if time_div == 0 {
        return Err(Error::config("time_div must be >= 1"));
    }
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let mut users = std::collections::HashSet::new();
    let mut places = std::collections::HashSet::new();
    let mut out = String::new();
    let mut records = 0usize;
    let mut malformed = 0usize;
    let mut considered = 0usize;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        considered += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (fields.len() == 4)
            .then(|| {
                let ts: u64 = fields[2].parse().ok()?;
                let dwell: u64 = fields[3].parse().ok()?;
                if dwell == 0 || fields[0].is_empty() || fields[1].is_empty() {
                    return None;
                }
                Some((fields[0], fields[1], ts, dwell))
            })
            .flatten();
        match parsed {
            Some((user, place, ts, dwell)) => {
                let start = ts / time_div;
                let steps = (dwell / time_div).max(1).max(min_dwell);
                out.push_str(&format!("{user},{place},{start},{steps}\n"));
                users.insert(user.to_string());
                places.insert(place.to_string());
                records += 1;
            }
            None => malformed += 1,
        }
    }

    if considered > 0 && malformed * 2 > considered {
        return Err(Error::TooManyMalformed {
            bad: malformed,
            total: considered,
        });
    }

    fs::write(output, out).map_err(|e| Error::io(output, e))?;
    Ok(ConvertReport {
        users: users.len(),
        places: places.len(),
        records,
        malformed,
    })
}

/// Joins the metrics logs of one or more run directories, averages
/// accuracy over entities and seeds per (method, mobility label, t),
/// smooths with a trailing moving average, and emits a tidy CSV sorted
/// by (method, label, t).
pub fn cmd_compare(run_dirs: &[PathBuf], window: usize, out: Option<&Path>) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(Error::config("compare needs at least one run directory"));
    }
    let mut shape: Option<String> = None;
    let mut grouped: BTreeMap<(String, String), BTreeMap<u64, Vec<MetricRow>>> = BTreeMap::new();

    for dir in run_dirs {
        let manifest = RunManifest::read_file(&dir.join("manifest.txt"))?;
        let tag = manifest.shape_tag.to_string();
        match &shape {
            None => shape = Some(tag),
            Some(existing) if *existing != tag => {
                return Err(Error::ShapeMismatch(format!(
                    "{} in {} vs {existing}",
                    tag,
                    dir.display()
                )));
            }
            _ => {}
        }
        for file in &manifest.files {
            let (method, label) = parse_run_file_name(file)?;
            let rows = MetricsLog::read_csv(&dir.join(file))?;
            let slot = grouped.entry((method, label)).or_default();
            for row in rows {
                slot.entry(row.t).or_default().push(row);
            }
        }
    }

    let mut text = String::from("method,p_cross,t,pre_acc,post_acc\n");
    for ((method, label), by_t) in &grouped {
        let ts: Vec<u64> = by_t.keys().copied().collect();
        let pre_raw: Vec<f64> = by_t
            .values()
            .map(|rows| rows.iter().map(|r| r.pre_acc).sum::<f64>() / rows.len() as f64)
            .collect();
        let post_raw: Vec<f64> = by_t
            .values()
            .map(|rows| rows.iter().map(|r| r.post_acc).sum::<f64>() / rows.len() as f64)
            .collect();
        let pre = moving_average(&pre_raw, window);
        let post = moving_average(&post_raw, window);
        for i in 0..ts.len() {
            text.push_str(&format!(
                "{method},{label},{},{},{}\n",
                ts[i], pre[i], post[i]
            ));
        }
    }

    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Splits `<method>_<label>_<seed>.csv` into method and mobility label.
fn parse_run_file_name(name: &str) -> Result<(String, String)> {
    let stem = name
        .strip_suffix(".csv")
        .ok_or_else(|| Error::validation(format!("unexpected run file name `{name}`")))?;
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!(
            "run file `{name}` does not match <method>_<label>_<seed>.csv"
        )));
    }
    Ok((parts[0].to_string(), parts[1].to_string()))
}
