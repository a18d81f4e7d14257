//! Replays the checked-in fuzz corpus, plus seeded byte mutations of every
//! seed, through the same properties the cargo-fuzz targets assert. Runs on
//! stable so the decoders get coverage without a nightly toolchain.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reactnav::dataset::{emit_csv, parse_csv};
use reactnav::serial::{decode_command, decode_scan, encode_command, encode_scan};
use reactnav::{Model, ScanVector, Trajectory, WorldSpec};

const MUTANTS_PER_SEED: usize = 300;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut seeds: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

/// Flip, insert, delete or duplicate a few bytes. Draws replacement bytes
/// mostly from the input itself so mutants stay near the grammar.
fn mutate(seed: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = seed.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let pick = |rng: &mut ChaCha8Rng, out: &[u8]| {
            if !out.is_empty() && rng.random_bool(0.7) {
                out[rng.random_range(0..out.len())]
            } else {
                rng.random()
            }
        };
        match rng.random_range(0..4) {
            0 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                out[i] = pick(rng, &out);
            }
            1 => {
                let b = pick(rng, &out);
                let i = rng.random_range(0..=out.len());
                out.insert(i, b);
            }
            2 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                out.remove(i);
            }
            _ if !out.is_empty() => {
                let a = rng.random_range(0..out.len());
                let b = rng.random_range(a..=out.len().min(a + 16));
                let chunk = out[a..b].to_vec();
                let at = rng.random_range(0..=out.len());
                out.splice(at..at, chunk);
            }
            _ => out.push(rng.random()),
        }
    }
    out
}

fn replay(target: &str, check: impl Fn(&[u8])) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    for (path, seed) in corpus(target) {
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&seed)));
        assert!(outcome.is_ok(), "seed {} failed", path.display());
        for _ in 0..MUTANTS_PER_SEED {
            let m = mutate(&seed, &mut rng);
            let outcome = catch_unwind(AssertUnwindSafe(|| check(&m)));
            assert!(
                outcome.is_ok(),
                "mutant of {} failed: {:?}",
                path.display(),
                String::from_utf8_lossy(&m)
            );
        }
    }
}

#[test]
fn decode_scan_corpus() {
    replay("decode_scan", |data| {
        if let Ok(scan) = decode_scan(data) {
            assert!(scan.in_envelope());
            let again = decode_scan(encode_scan(&scan).as_bytes()).expect("re-encoded frame decodes");
            for (a, b) in scan.channels().iter().zip(again.channels()) {
                assert!((a - b).abs() <= 0.005 + 1e-9);
            }
        }
    });
}

#[test]
fn decode_command_corpus() {
    replay("decode_command", |data| {
        for &byte in data {
            if let Ok(cmd) = decode_command(byte) {
                assert_eq!(encode_command(cmd), byte);
            }
        }
    });
}

#[test]
fn parse_csv_corpus() {
    replay("parse_csv", |data| {
        if let Ok(ds) = parse_csv(data) {
            let again = parse_csv(&emit_csv(&ds)).expect("emitted CSV parses");
            assert_eq!(again.labels(), ds.labels());
        }
    });
}

#[test]
fn trajectory_csv_corpus() {
    replay("trajectory_csv", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(t) = Trajectory::from_csv(text) {
            let again = Trajectory::from_csv(&t.to_csv()).expect("emitted log parses");
            assert_eq!(again.len(), t.len());
        }
    });
}

#[test]
fn world_json_corpus() {
    replay("world_json", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(world) = WorldSpec::from_json(text) {
            let _ = world.validate();
            WorldSpec::from_json(&world.to_json()).expect("serialized world parses");
        }
    });
}

#[test]
fn model_json_corpus() {
    replay("model_json", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(model) = Model::from_json(text) {
            for scan in [
                ScanVector::new(5.0, 5.0, 5.0, 5.0),
                ScanVector::new(450.0, 20.0, 90.0, 7.5),
            ] {
                model.predict(&scan);
            }
            assert_eq!(Model::from_json(&model.to_json()).expect("round trip"), model);
        }
    });
}

#[test]
fn seeds_that_should_decode_do() {
    for (path, bytes) in corpus("decode_scan") {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let expect_ok = matches!(name.as_str(), "seed-valid" | "seed-floor");
        assert_eq!(decode_scan(&bytes).is_ok(), expect_ok, "{name}");
    }
    for target in ["parse_csv", "trajectory_csv"] {
        for (path, bytes) in corpus(target) {
            let text = String::from_utf8(bytes).unwrap();
            let ok = if target == "parse_csv" {
                parse_csv(text.as_bytes()).is_ok()
            } else {
                Trajectory::from_csv(&text).is_ok()
            };
            assert!(ok, "{}", path.display());
        }
    }
    for (path, bytes) in corpus("world_json") {
        let w = WorldSpec::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
        w.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
    for (path, bytes) in corpus("model_json") {
        Model::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
