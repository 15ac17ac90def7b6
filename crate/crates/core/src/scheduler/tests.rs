use std::time::{Duration, Instant};

use super::*;
use crate::document::{Document, Edit};

fn node(name: &str) -> NodeName {
    NodeName::new(name).unwrap()
}

fn load(files: &[(&str, &str)]) -> Document {
    let mut doc = Document::new();
    let edits: Vec<Edit> = files.iter().map(|(n, t)| Edit::insert(node(n), 0, *t)).collect();
    doc.apply_edits(&edits).unwrap();
    doc
}

const A: &str = "theory A begin\ndef x = 1\ndef y = x + 1\neval y\nend\n";

#[test]
fn unchanged_version_reuses_everything() {
    let mut doc = load(&[("A.mthy", A)]);
    let mut cache = MemoryCache::default();
    let first = assign(&doc.latest(), &mut cache);
    cache.remember(&first);
    assert!(first.plans.iter().all(|p| !p.reused));

    let v2 = doc.apply_edits(&[]).unwrap();
    let second = assign(&v2, &mut cache);
    assert!(second.plans.iter().all(|p| p.reused));
    assert_eq!(first.nodes, second.nodes);
}

#[test]
fn editing_a_def_invalidates_the_suffix() {
    let mut doc = load(&[("A.mthy", A)]);
    let a = node("A.mthy");
    let mut cache = MemoryCache::default();
    let first = assign(&doc.latest(), &mut cache);
    cache.remember(&first);

    // `def x = 1` becomes `def x = 10`.
    let at = A.find("1\n").unwrap() + 1;
    let v2 = doc.apply_edits(&[Edit::insert(a.clone(), at, "0")]).unwrap();
    let second = assign(&v2, &mut cache);
    let reused: Vec<bool> = second.plans.iter().map(|p| p.reused).collect();
    assert_eq!(reused, [true, true, false, false, false, false]);
    assert_eq!(first.nodes[&a].execs[..2], second.nodes[&a].execs[..2]);
}

#[test]
fn import_cycle_fails_both_nodes() {
    let doc = load(&[
        ("A.mthy", "theory A imports B begin\nend\n"),
        ("B.mthy", "theory B imports A begin\nend\n"),
    ]);
    let assignment = assign(&doc.latest(), &mut MemoryCache::default());
    for name in ["A.mthy", "B.mthy"] {
        let na = &assignment.nodes[&node(name)];
        assert_eq!(
            na.import_errors,
            [ImportError::Cycle(vec![node("A.mthy"), node("B.mthy")])]
        );
    }
    assert!(assignment.plans.iter().all(|p| matches!(p.preset, Preset::Fail(_))));
}

#[test]
fn missing_import_is_reported_on_imports_span() {
    let doc = load(&[("A.mthy", "theory A imports C begin\ndef x = 1\nend\n")]);
    let assignment = assign(&doc.latest(), &mut MemoryCache::default());
    assert_eq!(assignment.missing_imports(), [(node("A.mthy"), node("C.mthy"))]);
    let presets: Vec<bool> = assignment
        .plans
        .iter()
        .map(|p| matches!(p.preset, Preset::Imports(_)))
        .collect();
    assert_eq!(presets, [false, true, false, false, false]);
}

#[test]
fn imports_come_first_and_feed_the_importer() {
    let doc = load(&[
        ("A.mthy", "theory A imports B begin\neval y\nend\n"),
        ("B.mthy", "theory B begin\ndef y = 3\nend\n"),
    ]);
    let assignment = assign(&doc.latest(), &mut MemoryCache::default());
    assert_eq!(assignment.plans[0].node, node("B.mthy"));
    let b_last = *assignment.nodes[&node("B.mthy")].execs.last().unwrap();
    let a_first = &assignment.plans[assignment.nodes[&node("B.mthy")].execs.len()];
    assert_eq!(a_first.node, node("A.mthy"));
    assert_eq!(a_first.env, EnvSource::Imports(vec![b_last]));
}

#[test]
fn editing_an_import_invalidates_importers() {
    let mut doc = load(&[
        ("A.mthy", "theory A imports B begin\neval y\nend\n"),
        ("B.mthy", "theory B begin\ndef y = 3\nend\n"),
    ]);
    let mut cache = MemoryCache::default();
    let first = assign(&doc.latest(), &mut cache);
    cache.remember(&first);
    let v2 = doc.apply_edits(&[Edit::insert(node("B.mthy"), 24, "3")]).unwrap();
    let second = assign(&v2, &mut cache);
    assert!(second
        .plans
        .iter()
        .filter(|p| p.node == node("A.mthy"))
        .all(|p| !p.reused));
}

#[test]
fn scheduler_runs_to_quiescence() {
    let doc = load(&[
        ("A.mthy", "theory A imports B begin\neval y + 1\nlemma y = 4\nend\n"),
        ("B.mthy", "theory B begin\ndef y = 3\nend\n"),
    ]);
    let sched = Scheduler::new(2);
    let updates = sched.subscribe();
    let assignment = sched.run(&doc.latest());
    assert!(sched.wait_quiescent(Duration::from_secs(5)));

    let summary = sched.summarize(&assignment);
    assert_eq!(summary.total.failed, 1);
    assert_eq!(summary.total.finished, assignment.plans.len() - 1);

    let eval = assignment.plans.iter().find(|p| p.span.keyword == "eval").unwrap();
    let snap = sched.snapshot(eval.exec_id).unwrap();
    assert_eq!(snap.result.unwrap().messages[0].text, "4");

    let mut seen: Vec<Update> = updates.try_iter().collect();
    seen.retain(|u| u.exec_id == eval.exec_id);
    let statuses: Vec<ExecStatus> = seen.iter().map(|u| u.status).collect();
    assert_eq!(statuses, [ExecStatus::Running, ExecStatus::Finished]);
}

#[test]
fn superseding_cancels_running_sleep() {
    let mut doc = load(&[("A.mthy", "theory A begin\nsleep 10000\nend\n")]);
    let sched = Scheduler::new(1);
    let first = sched.run(&doc.latest());
    let sleep = first.plans[2].exec_id;
    let start = Instant::now();
    while sched.status(sleep) != Some(ExecStatus::Running) {
        assert!(start.elapsed() < Duration::from_secs(5));
        std::thread::sleep(Duration::from_millis(1));
    }

    let v2 = doc
        .apply_edits(&[Edit::remove(node("A.mthy"), 15, "sleep 10000\n")])
        .unwrap();
    let t = Instant::now();
    let second = sched.run(&v2);
    assert!(sched.wait_quiescent(Duration::from_secs(2)));
    assert!(t.elapsed() < Duration::from_millis(500));
    assert_eq!(sched.status(sleep), Some(ExecStatus::Cancelled));
    assert_eq!(sched.summarize(&second).total.finished, second.plans.len());
}

#[test]
fn reused_executions_keep_results() {
    let mut doc = load(&[("A.mthy", A)]);
    let sched = Scheduler::new(1);
    let first = sched.run(&doc.latest());
    assert!(sched.wait_quiescent(Duration::from_secs(5)));
    let v2 = doc.apply_edits(&[Edit::insert(node("A.mthy"), A.len(), "\n")]).unwrap();
    let second = sched.run(&v2);
    assert!(sched.is_quiescent() || sched.wait_quiescent(Duration::from_secs(5)));
    let a = node("A.mthy");
    assert_eq!(first.nodes[&a].execs[..4], second.nodes[&a].execs[..4]);
}
