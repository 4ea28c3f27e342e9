//! Regression baselines for the committed scenarios and model set. The
//! expected files were written by `bvr assess` and `bvr replay --auto`.

use std::path::{Path, PathBuf};

use bvr_cli::commands;
use bvr_core::session::{OperatorCommand, Outcome};
use bvr_core::SimConfig;

const SCENARIOS: [&str; 3] = ["three_missiles", "close_range_four", "single_80km"];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn expected(file: &str) -> String {
    let path = fixtures().join("expected").join(file);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn assess_matches_the_committed_rings() {
    for name in SCENARIOS {
        let scenario = commands::load_scenario(&fixtures().join("scenarios").join(format!("{name}.toml"))).unwrap();
        let models = commands::load_models(None, &scenario).unwrap();
        let ring = commands::assess(&scenario, models, &SimConfig::default()).unwrap();
        assert_eq!(ring, expected(&format!("{name}.ring")), "{name}");
    }
}

#[test]
fn three_missile_ring_lists_the_safest_entry_last() {
    let ring = expected("three_missiles.ring");
    let entries: Vec<&str> = ring.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(entries.len(), 9);
    assert!(entries[8].starts_with("safest = "));
}

#[test]
fn auto_replays_match_the_committed_traces() {
    let dir = tempfile::tempdir().unwrap();
    for name in SCENARIOS {
        let scenario = commands::load_scenario(&fixtures().join("scenarios").join(format!("{name}.toml"))).unwrap();
        let models = commands::load_models(None, &scenario).unwrap();
        let out = dir.path().join(format!("{name}.trace"));
        let result = commands::replay(&scenario, models, &SimConfig::default(), OperatorCommand::Safest, None, &out)
            .unwrap();
        assert_eq!(result.trace, expected(&format!("{name}.trace")), "{name}");
        if name == "close_range_four" {
            assert_eq!(result.outcome, Outcome::Hit);
        }
    }
}
