//! Command-line behaviour on a deliberately tiny configuration: validation,
//! caching, manifests and exports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use rallyproc::solver::ValueFunction;
use rallyproc_cli::cache::Cache;
use rallyproc_cli::export::{read_values, write_policy, write_values, ArtifactId, Format};
use rallyproc_cli::{run_pipeline, Manifest, Pipeline, RunConfig, Suite};

const TINY: [&str; 10] = ["--n", "5", "--fit-samples", "200", "--starts", "2000", "--table-shots", "2000", "--eps", "1,2"];

fn tiny(out: &Path) -> RunConfig {
    RunConfig {
        n: 5,
        epsilons: Some(vec![1, 2]),
        fit_samples: 200,
        starts: 2000,
        table_shots: 2000,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

/// One full tiny run shared by the tests; the directory lives for the whole
/// test binary.
fn shared() -> &'static (PathBuf, Manifest) {
    static RUN: OnceLock<(PathBuf, Manifest)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let manifest = run_pipeline(tiny(&dir)).unwrap();
        (dir, manifest)
    })
}

fn rallyproc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rallyproc")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn zero_draws_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = rallyproc(&["fit", "--n", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("N must be at least 1"));
    assert!(tiny(dir.path()).validate().is_ok());
    assert!(RunConfig { n: 0, ..tiny(dir.path()) }.validate().is_err());
}

#[test]
fn epsilon_lists_must_include_perfect_execution() {
    let dir = tempfile::tempdir().unwrap();
    assert!(RunConfig { epsilons: Some(vec![2, 3]), ..tiny(dir.path()) }.validate().is_err());
    assert!(RunConfig { epsilons: Some(vec![1, 65]), ..tiny(dir.path()) }.validate().is_err());
    assert!(RunConfig { e_max: 0, epsilons: None, ..tiny(dir.path()) }.validate().is_err());
    let out = rallyproc(&["solve", "--eps", "2,3", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn manifest_lists_every_table_and_artifact() {
    let (dir, manifest) = shared();
    assert_eq!(manifest.epsilons, vec![1, 2]);
    assert_eq!(manifest.outputs.len(), Suite::ALL.len());
    for suite in Suite::ALL {
        let name = format!("{}.csv", suite.name());
        assert!(dir.join(&name).is_file(), "{name}");
        assert!(manifest.outputs.contains_key(&name));
    }
    for rec in &manifest.artifacts {
        assert!(dir.join(&rec.dir).is_dir(), "{}", rec.dir);
        for (file, sha) in &rec.files {
            assert_eq!(&rallyproc_cli::cache::file_sha256(&dir.join(&rec.dir).join(file)).unwrap(), sha);
        }
    }
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(&on_disk, manifest);
}

#[test]
fn rerun_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_pipeline(tiny(dir.path())).unwrap();
    let bytes = fs::read(dir.path().join("manifest.json")).unwrap();
    let stamps = |d: &Path| -> Vec<(String, std::time::SystemTime)> {
        let mut v: Vec<_> = fs::read_dir(d.join("cache"))
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), e.metadata().unwrap().modified().unwrap()))
            .collect();
        v.sort();
        v
    };
    let before = stamps(dir.path());
    let second = run_pipeline(tiny(dir.path())).unwrap();
    assert_eq!(first, second);
    assert_eq!(fs::read(dir.path().join("manifest.json")).unwrap(), bytes);
    assert_eq!(stamps(dir.path()), before);
    assert!(before.iter().all(|(name, _)| !name.starts_with(".partial-")));
}

#[test]
fn cached_stages_do_not_run_again() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path()).unwrap();
    let key = rallyproc_cli::cache::key(&[b"stage", b"inputs"]);
    let (first, hit) = cache.stage("demo", &key, |d| Ok(fs::write(d.join("x.txt"), "payload")?)).unwrap();
    assert!(!hit);
    let (second, hit) = cache.stage("demo", &key, |_| panic!("cached stage must not be rebuilt")).unwrap();
    assert!(hit);
    assert_eq!(first, second);
    // Keys separate their parts, so concatenations do not collide.
    assert_ne!(rallyproc_cli::cache::key(&[b"ab", b"c"]), rallyproc_cli::cache::key(&[b"a", b"bc"]));
}

#[test]
fn value_export_roundtrips_exactly() {
    let (dir, _) = shared();
    let mut p = Pipeline::new(tiny(dir)).unwrap();
    for which in ["mrp", "mdp"] {
        let vf: ValueFunction = p.values(2, which).unwrap();
        let path = dir.join(format!("{which}-2.csv"));
        write_values(&vf, &p.census, Format::Csv, &path).unwrap();
        let back = read_values(&path, Format::Csv, 2, which).unwrap();
        assert_eq!(back.values.len(), p.census.len());
        assert!(vf.values.iter().zip(&back.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        let json = dir.join(format!("{which}-2.json"));
        write_values(&vf, &p.census, Format::Json, &json).unwrap();
        assert_eq!(read_values(&json, Format::Json, 2, which).unwrap(), vf);
    }
}

#[test]
fn policy_export_has_one_row_per_transient_state() {
    let (dir, _) = shared();
    let mut p = Pipeline::new(tiny(dir)).unwrap();
    let policy = p.policy(2).unwrap();
    let path = dir.join("policy-2.csv");
    write_policy(&policy, &p.census, &p.layout, Format::Csv, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,a,b,shot,action"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), p.census.n_transient());
    for (s, row) in rows.iter().enumerate() {
        let name = row.rsplit(',').next().unwrap();
        let action = p.layout.action_by_name(name).unwrap();
        assert!(p.census.actions(s).contains(&action.id), "state {s} plays {name}");
    }
}

#[test]
fn tables_have_two_key_columns_plus_one_per_epsilon() {
    let (dir, _) = shared();
    for suite in Suite::ALL {
        let text = fs::read_to_string(dir.join(format!("{}.csv", suite.name()))).unwrap();
        let header = text.lines().next().unwrap();
        // The outcome table always spans 1..=max ε, which is {1, 2} here.
        assert_eq!(header, "scenario,measure,eps_1,eps_2", "{}", suite.name());
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}

#[test]
fn export_command_writes_requested_artifacts() {
    let (dir, _) = shared();
    let out = dir.to_str().unwrap();
    let table = dir.join("fig8.json");
    let mut args = vec!["export", "--artifact", "fig8", "--format", "json", "--to", table.to_str().unwrap(), "--out", out];
    args.extend(TINY);
    let res = rallyproc(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&table).unwrap()).unwrap();
    assert!(rows.as_array().is_some_and(|r| !r.is_empty()));

    let values = dir.join("mdp-1-cli.csv");
    let mut args = vec!["export", "--artifact", "mdp:1", "--to", values.to_str().unwrap(), "--out", out];
    args.extend(TINY);
    assert!(rallyproc(&args).status.success());
    assert!(fs::read_to_string(&values).unwrap().starts_with("index,state,a,b,shot,value"));

    assert!(ArtifactId::parse("policy:x").is_err());
    assert!(ArtifactId::parse("fig9").is_err());
    assert_eq!(ArtifactId::parse("policy:13").unwrap(), ArtifactId::Policy { epsilon: 13 });
}
