#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;

use mthy::document::{Edit, NodeName};
use mthy::replay::{EditScript, Step};
use mthy::report::render_trace;
use mthy::session::Session;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Fixture directories holding theory files.
pub fn fixture_dirs() -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir() && p.file_name().unwrap() != "scripts")
        .collect();
    dirs.sort();
    dirs
}

pub fn fixture_scripts() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixtures().join("scripts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

pub fn node(name: &str) -> NodeName {
    NodeName::new(name).unwrap()
}

/// Loads a fixture directory, checks it to quiescence and returns the session.
pub fn check_dir(dir: &std::path::Path, workers: usize) -> Session {
    let mut session = Session::with_root(workers, dir);
    session.load_dir(dir).unwrap();
    session.run();
    assert!(
        session.wait_quiescent(Duration::from_secs(60)),
        "{} did not settle",
        dir.display()
    );
    session
}

pub fn trace_of(dir: &std::path::Path, workers: usize) -> String {
    render_trace(&check_dir(dir, workers).outcomes())
}

const IDENTS: &[&str] = &["a", "b", "c", "x", "y", "n1", "v_2", "t'"];

fn expr(rng: &mut impl Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..10) {
            0..=3 => rng.gen_range(0..100).to_string(),
            4 => ["true", "false"].choose(rng).unwrap().to_string(),
            5 => "9223372036854775807".into(),
            _ => IDENTS.choose(rng).unwrap().to_string(),
        };
    }
    match rng.gen_range(0..6) {
        0 => format!("({})", expr(rng, depth - 1)),
        n => {
            let op = ["+", "-", "*", "=", "<"][n - 1];
            format!("{} {op} {}", expr(rng, depth - 1), expr(rng, depth - 1))
        }
    }
}

/// One random command line (ending in a newline), expressions depth <= 4.
pub fn command(rng: &mut impl Rng) -> String {
    let ident = IDENTS.choose(rng).unwrap();
    let depth = rng.gen_range(0..=4);
    match rng.gen_range(0..12) {
        0..=3 => format!("def {ident} = {}\n", expr(rng, depth)),
        4 => format!(
            "def {ident}: {} = {}\n",
            ["int", "bool"].choose(rng).unwrap(),
            expr(rng, 2)
        ),
        5..=6 => format!("eval {}\n", expr(rng, depth)),
        7..=8 => format!("lemma l{}: {} = {}\n", rng.gen_range(0..9), expr(rng, 2), expr(rng, 2)),
        9 => format!("sleep {}\n", rng.gen_range(0..15)),
        10 => "(* note *)\n".into(),
        _ => format!("{} junk ?!\n", expr(rng, 1)),
    }
}

fn theory_text(rng: &mut impl Rng, index: usize, names: &[String]) -> String {
    let mut text = format!("theory T{index}");
    let imports: Vec<&String> = names.iter().filter(|_| rng.gen_bool(0.4)).collect();
    if !imports.is_empty() {
        text.push_str(" imports");
        for i in imports {
            text.push(' ');
            text.push_str(i);
        }
    }
    text.push_str(" begin\n");
    for _ in 0..rng.gen_range(0..6) {
        text.push_str(&command(rng));
    }
    text.push_str("end\n");
    text
}

/// Character offsets just after each newline, plus 0.
fn line_starts(text: &str) -> Vec<usize> {
    let mut starts = vec![0];
    for (i, c) in text.chars().enumerate() {
        if c == '\n' {
            starts.push(i + 1);
        }
    }
    starts
}

/// A random edit script over at most 5 nodes with at most 20 timed batches.
/// Nodes are created by the script itself; there is no root directory.
pub fn random_script(rng: &mut impl Rng) -> EditScript {
    let mut texts: Vec<(NodeName, String)> = Vec::new();
    let mut steps = Vec::new();
    let mut at_ms = 0;
    let batches = rng.gen_range(1..=20);
    for step in 0..batches {
        let mut edits = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let create = texts.is_empty() || (texts.len() < 5 && rng.gen_bool(0.2));
            if create {
                let index = texts.len();
                // Occasionally import a theory that never appears, or one
                // created later, which can close a cycle.
                let mut names: Vec<String> = (0..index).map(|i| format!("T{i}")).collect();
                if rng.gen_bool(0.1) {
                    names.push(["Ghost", "T4"][rng.gen_range(0..2)].into());
                }
                let text = theory_text(rng, index, &names);
                let name = NodeName::new(&format!("T{index}.mthy")).unwrap();
                edits.push(Edit::insert(name.clone(), 0, text.clone()));
                texts.push((name, text));
                continue;
            }
            let (name, text) = texts.choose_mut(rng).unwrap();
            let len = text.chars().count();
            let edit = match rng.gen_range(0..6) {
                0 | 1 => {
                    let at = *line_starts(text).choose(rng).unwrap();
                    Edit::insert(name.clone(), at.min(len), command(rng))
                }
                2 => {
                    let starts = line_starts(text);
                    let i = rng.gen_range(0..starts.len());
                    let from = starts[i];
                    let to = starts.get(i + 1).copied().unwrap_or(len);
                    if from == to {
                        continue;
                    }
                    let removed: String = text.chars().skip(from).take(to - from).collect();
                    Edit::remove(name.clone(), from, removed)
                }
                3 => {
                    let at = rng.gen_range(0..=len);
                    let piece = ["1", " ", "+", "x", "\n", "def ", "(*", "*)", "\\<forall>", "="]
                        .choose(rng)
                        .unwrap();
                    Edit::insert(name.clone(), at, *piece)
                }
                _ => {
                    if len == 0 {
                        continue;
                    }
                    let from = rng.gen_range(0..len);
                    let n = rng.gen_range(1..=(len - from).min(4));
                    let removed: String = text.chars().skip(from).take(n).collect();
                    Edit::remove(name.clone(), from, removed)
                }
            };
            edit.apply_to(text).unwrap();
            edits.push(edit);
        }
        if step > 0 {
            at_ms += rng.gen_range(0..6);
        }
        steps.push(Step { at_ms, edits });
    }
    EditScript { root: None, steps }
}
