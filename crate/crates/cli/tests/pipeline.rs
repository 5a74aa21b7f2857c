use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use argpet::{cmd_prepare, cmd_report, ExperimentSpec, Labels, Persons};
use argpet_core::corpus::{load_dataset, save_dataset, Label};
use argpet_core::synthetic;

fn fixture(dir: &Path) -> PathBuf {
    let ds = synthetic::person_dataset(150, 7).unwrap();
    save_dataset(&ds, dir.join("corpus.jsonl")).unwrap();
    fs::write(dir.join("persons.txt"), synthetic::PERSONS.join("\n")).unwrap();
    let mut sam = String::from("topic\tsentence\tannotation\tset\n");
    for r in synthetic::sam_records(30, 7) {
        let a = ["Argument_for", "Argument_against", "NoArgument"][r.stance.index()];
        sam.push_str(&format!("{}\t{}\t{a}\ttrain\n", r.topic, r.sentence));
    }
    fs::write(dir.join("sam.tsv"), sam).unwrap();
    let config = dir.join("exp.toml");
    fs::write(
        &config,
        "dataset = \"corpus.jsonl\"\n\
         person_list = \"persons.txt\"\n\
         out = \"runs\"\n\
         variant = \"adapter_pet\"\n\
         hidden_size = 8\n\
         heads = 2\n\
         layers = 1\n\
         ffn_size = 16\n\
         reduction_factor = 4\n\
         init_std = 0.1\n\
         max_len = 64\n\
         epochs = 1\n\
         learning_rate = 0.001\n",
    )
    .unwrap();
    config
}

fn argpet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_argpet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(read_tree(&p));
        } else {
            out.insert(p.clone(), fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn prepare_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::load(&fixture(dir.path())).unwrap();
    spec.persons = Persons::Shuffled;
    spec.labels = Labels::Onion;
    spec.no_stance_share = Some(0.15);
    let m = cmd_prepare(&spec).unwrap();
    assert!(m.persons.is_some() && m.onion_flips.is_some() && m.downsample.is_some());
    assert!(m.seeds.contains_key("persons") && m.seeds.contains_key("split"));
    let first = read_tree(&spec.out);
    cmd_prepare(&spec).unwrap();
    assert_eq!(read_tree(&spec.out), first);
}

#[test]
fn onion_prepare_flips_exactly_the_flagged_units() {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentSpec::load(&fixture(dir.path())).unwrap();
    let original = ExperimentSpec {
        out: dir.path().join("orig"),
        ..base.clone()
    };
    let onion = ExperimentSpec {
        out: dir.path().join("onion"),
        labels: Labels::Onion,
        ..base
    };
    cmd_prepare(&original).unwrap();
    let manifest = cmd_prepare(&onion).unwrap();
    let tallies = manifest.onion_flips.unwrap();

    let mut flips = BTreeMap::<String, usize>::new();
    let mut delta = BTreeMap::<Label, i64>::new();
    for split in ["train", "dev", "test"] {
        let a = load_dataset(original.prepared_dir().join(format!("{split}.jsonl"))).unwrap();
        let b = load_dataset(onion.prepared_dir().join(format!("{split}.jsonl"))).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.units.iter().zip(&b.units) {
            assert_eq!(x.unit_id, y.unit_id);
            assert_eq!(x.label != y.label, x.onion, "unit {}", x.unit_id);
            if x.label != y.label {
                assert_eq!(y.label, x.label.flipped());
                *flips.entry(x.label.as_str().to_string()).or_default() += 1;
                *delta.entry(x.label).or_default() -= 1;
                *delta.entry(y.label).or_default() += 1;
            }
        }
    }
    for (label, n) in &tallies {
        assert_eq!(flips.get(label).copied().unwrap_or(0), *n, "{label}");
    }
    for l in Label::ALL {
        let out = tallies[l.as_str()] as i64;
        let inn = tallies[l.flipped().as_str()] as i64;
        let expected = if l.is_stance() { inn - out } else { 0 };
        assert_eq!(delta.get(&l).copied().unwrap_or(0), expected, "{l}");
    }
}

#[test]
fn standard_protocols_plan_forty_and_eighty_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let c = config.to_str().unwrap();
    let strat = argpet(&["sweep", "-c", c, "--proportions", "standard", "--mode", "stratified", "--dry-run"]);
    assert!(strat.status.success());
    assert!(stdout(&strat).ends_with("40 cells\n"), "{}", stdout(&strat));
    let tfs = argpet(&["sweep", "-c", c, "--proportions", "standard", "--mode", "tfs", "--dry-run"]);
    assert!(tfs.status.success());
    assert!(stdout(&tfs).ends_with("80 cells\n"), "{}", stdout(&tfs));
}

#[test]
fn sweep_resumes_and_cells_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let c = config.to_str().unwrap();
    assert!(argpet(&["prepare", "-c", c]).status.success());
    let args = ["sweep", "-c", c, "--proportions", "0.5,1.0", "--seeds", "0,1", "--jobs", "2"];
    let first = argpet(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("4 cells: 0 skipped, 4 succeeded, 0 failed"), "{}", stdout(&first));

    let out = dir.path().join("runs");
    let report = out.join("report");
    for f in ["metrics.csv", "aggregate.csv", "table6.csv", "feasibility.csv", "macro_f1_by_proportion.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let cell = out.join("cells/adapter_pet/stratified/p0.5/s1");
    let run = fs::read(cell.join("run.json")).unwrap();
    let metrics = fs::read(cell.join("metrics.csv")).unwrap();

    let again = argpet(&args);
    assert!(again.status.success());
    assert!(stdout(&again).contains("4 cells: 4 skipped, 0 succeeded, 0 failed"), "{}", stdout(&again));

    // Retraining a finished cell reproduces its report byte for byte.
    let retrain = argpet(&["train", "-c", c, "--proportion", "0.5", "--seed", "1"]);
    assert!(retrain.status.success(), "{}", String::from_utf8_lossy(&retrain.stderr));
    assert_eq!(fs::read(cell.join("run.json")).unwrap(), run);
    assert_eq!(fs::read(cell.join("metrics.csv")).unwrap(), metrics);

    let eval = argpet(&["evaluate", "--cell", cell.to_str().unwrap()]);
    assert!(eval.status.success());
    assert!(stdout(&eval).contains("matches stored run report: yes"));
}

#[test]
fn failed_cells_are_recorded_and_fail_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let c = config.to_str().unwrap();
    assert!(argpet(&["prepare", "-c", c]).status.success());
    let broken = dir.path().join("broken.toml");
    let mut text = fs::read_to_string(&config).unwrap();
    text = text.replace("variant = \"adapter_pet\"", "variant = \"adapter_sam\"\nsam_dataset = \"missing.tsv\"");
    fs::write(&broken, text).unwrap();
    let o = argpet(&["sweep", "-c", broken.to_str().unwrap(), "--proportions", "1.0", "--seeds", "0,1"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("2 cells: 0 skipped, 0 succeeded, 2 failed"), "{}", stdout(&o));
    assert!(dir.path().join("runs/sweeps/adapter_sam-stratified.sweep_report.json").is_file());
}

#[test]
fn report_needs_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_report(dir.path()).is_err());
    assert!(!argpet(&["report", dir.path().to_str().unwrap()]).status.success());
}
