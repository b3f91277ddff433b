use proptest::prelude::*;

use polylab_cli::{Command, ConfigError, RunConfig};

fn circle_config(sizes: &[usize], m: usize, radius: f64, probes: usize) -> String {
    format!(
        "command = \"solve\"\n\n[grid]\nsizes = {sizes:?}\n\n[problem]\nm = {m}\n\n[curve]\nkind = \"circle\"\nradius = {radius}\n\n[analysis]\nprobes = {probes}\n"
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialized_config_parses_back(
        sizes in proptest::collection::btree_set(17usize..600, 1..4),
        m in 1usize..=3,
        radius in 0.2..0.6f64,
        probes in 8usize..200,
    ) {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        let cfg = RunConfig::parse(&circle_config(&sizes, m, radius, probes)).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name(key in "[a-z]{3,10}_x", section in 0usize..4) {
        let (header, dotted) = match section {
            0 => ("grid", format!("grid.{key}")),
            1 => ("curve", format!("curve.{key}")),
            2 => ("solver", format!("solver.{key}")),
            _ => ("analysis", format!("analysis.{key}")),
        };
        let body = if header == "curve" { "kind = \"circle\"\nradius = 0.5\n" } else { "" };
        let text = format!("command = \"solve\"\n[{header}]\n{body}{key} = 1\n");
        match RunConfig::parse(&text) {
            Err(ConfigError::Invalid { key: k, .. }) => prop_assert_eq!(k, dotted),
            other => prop_assert!(false, "expected a named-key error, got {:?}", other),
        }
    }
}

#[test]
fn defaults_validate_for_every_command() {
    for c in [Command::Solve, Command::Convergence, Command::Jumps, Command::Tv, Command::Altcaf, Command::ValidateLemma23] {
        let cfg = RunConfig::defaults_for(c).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", c.as_str()));
    }
}

#[test]
fn interface_outside_domain_names_the_radius() {
    let text = "command = \"solve\"\n[curve]\nkind = \"circle\"\nradius = 1.5\n";
    let err = RunConfig::parse(text).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("curve.radius") && msg.contains("InterfaceTouchesBoundary"), "{msg}");
}

#[test]
fn command_mismatch_is_a_config_error() {
    let err = RunConfig::parse_for("command = \"tv\"\n", Command::Solve).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "command"), "{err}");
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let verdict = RunConfig::parse(&text);
        if path.file_name().unwrap() == "bad-radius.toml" {
            assert!(verdict.is_err());
        } else {
            verdict.unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
        seen += 1;
    }
    assert!(seen >= 8);
}
