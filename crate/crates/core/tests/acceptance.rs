//! Acceptance criteria, one `[PASS]`/`[FAIL]` line each.

mod common;

use std::collections::HashSet;
use std::io::BufReader;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::node;
use mthy::document::Edit;
use mthy::markup::Label;
use mthy::protocol::{
    deserialize, read_frame, serialize, serve_tcp, write_frame, Core, Envelope, ProtocolMessage, MESSAGE_TYPES,
};
use mthy::replay::{replay, ReplayMode};
use mthy::scheduler::ExecStatus;
use mthy::session::Session;
use mthy::symbols::{decode, encode, SymbolStyle, SymbolTable};
use mthy::syntax::partition;

type Outcome = Result<String, String>;

fn differential_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let start = Instant::now();
    let workers = thread::available_parallelism().map_or(2, |n| n.get()).max(2);
    for i in 0..100 {
        let script = common::random_script(&mut rng);
        let incremental = replay(&script, ReplayMode::Incremental, workers).map_err(|e| e.to_string())?;
        let batch = replay(&script, ReplayMode::Batch, workers).map_err(|e| e.to_string())?;
        if incremental != batch {
            return Err(format!(
                "script {i} differs\n--- script\n{}\n--- incremental\n{incremental}--- batch\n{batch}",
                serde_json::to_string(&script).unwrap()
            ));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("100 scripts identical but took {elapsed:?} (limit 60 s)"));
    }
    Ok(format!(
        "100 scripts, incremental == batch, {:.1} s total",
        elapsed.as_secs_f64()
    ))
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
}

impl Client {
    fn send(&mut self, message: ProtocolMessage) -> u64 {
        self.seq += 1;
        write_frame(&mut self.writer, &Envelope::new(self.seq, message)).unwrap();
        self.seq
    }

    fn recv_until(&mut self, pred: impl Fn(&ProtocolMessage) -> bool) -> Envelope {
        loop {
            let body = read_frame(&mut self.reader).unwrap().expect("server closed");
            let env = Envelope::from_json(&body).unwrap();
            if pred(&env.message) {
                return env;
            }
        }
    }
}

fn non_blocking_editing() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let listener = TcpListener::bind(("127.0.0.1", 0)).unwrap();
    let port = listener.local_addr().unwrap().port();
    let core = Core::new(Session::with_root(2, root.path()));
    let server = thread::spawn(move || serve_tcp(core, listener).unwrap());
    let stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream.set_nodelay(true).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut client = Client {
        reader: BufReader::new(stream.try_clone().unwrap()),
        writer: stream,
        seq: 0,
    };

    let n = node("N.mthy");
    let mut text = String::from("theory N begin\nsleep 5000\n");
    client.send(ProtocolMessage::NodeEdits {
        edits: vec![Edit::insert(n.clone(), 0, text.clone())],
        client_version_tag: "0".into(),
    });
    client.recv_until(|m| {
        matches!(
            m,
            ProtocolMessage::Status {
                status: ExecStatus::Running,
                ..
            }
        )
    });
    let sleep_started = Instant::now();

    let mut times = Vec::new();
    for i in 0..20 {
        let line = format!("eval {i}\n");
        let edit = Edit::insert(n.clone(), text.chars().count(), line.clone());
        text.push_str(&line);
        let t = Instant::now();
        let seq = client.send(ProtocolMessage::NodeEdits {
            edits: vec![edit],
            client_version_tag: format!("{}", i + 1),
        });
        client.recv_until(|m| matches!(m, ProtocolMessage::Assignment { reply_to, .. } if *reply_to == seq));
        times.push(t.elapsed());
    }
    let still_sleeping = sleep_started.elapsed() < Duration::from_millis(5000);
    client.send(ProtocolMessage::Shutdown {});
    server.join().unwrap();

    let max = times.iter().max().unwrap();
    let detail = format!("20 round trips, max {:.2} ms", max.as_secs_f64() * 1e3);
    if !still_sleeping {
        return Err(format!("{detail}; sleep finished before the measurements ended"));
    }
    if times.iter().all(|t| *t < Duration::from_millis(100)) {
        Ok(detail)
    } else {
        Err(format!("{detail} (limit 100 ms)"))
    }
}

fn quiescence_time(budget: usize) -> Duration {
    let mut session = Session::new(budget);
    let t = Instant::now();
    session
        .submit(&[
            Edit::insert(node("P.mthy"), 0, "theory P begin\nsleep 500\nend\n"),
            Edit::insert(node("Q.mthy"), 0, "theory Q begin\nsleep 500\nend\n"),
        ])
        .unwrap();
    assert!(session.wait_quiescent(Duration::from_secs(10)));
    t.elapsed()
}

fn parallelism() -> Outcome {
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    let two = quiescence_time(2);
    let one = quiescence_time(1);
    let detail = format!(
        "budget 2: {} ms, budget 1: {} ms ({cores} core(s) available)",
        two.as_millis(),
        one.as_millis()
    );
    if two < Duration::from_millis(900) && one > Duration::from_millis(1000) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cancellation() -> Outcome {
    let mut session = Session::new(1);
    let n = node("C.mthy");
    let text = "theory C begin\nsleep 10000\ndef c = 1\nend\n";
    let first = session.submit(&[Edit::insert(n.clone(), 0, text)]).unwrap().assignment;
    let sleep = first.plans.iter().find(|p| p.span.keyword == "sleep").unwrap().exec_id;
    let started = Instant::now();
    while session.scheduler().status(sleep) != Some(ExecStatus::Running) {
        if started.elapsed() > Duration::from_secs(5) {
            return Err("sleep never started".into());
        }
        thread::sleep(Duration::from_millis(1));
    }
    thread::sleep(Duration::from_millis(50));
    let t = Instant::now();
    session.submit(&[Edit::remove(n, 15, "sleep 10000\n")]).unwrap();
    let settled = session.wait_quiescent(Duration::from_secs(5));
    let elapsed = t.elapsed();
    let status = session.scheduler().status(sleep);
    let detail = format!("quiescent after {} ms, sleep exec {:?}", elapsed.as_millis(), status);
    if settled && elapsed < Duration::from_millis(500) && status == Some(ExecStatus::Cancelled) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn budget_independence() -> Outcome {
    let dirs = common::fixture_dirs();
    for dir in &dirs {
        let one = common::trace_of(dir, 1);
        for budget in [2, 8] {
            if common::trace_of(dir, budget) != one {
                return Err(format!("{} differs with budget {budget}", dir.display()));
            }
        }
    }
    Ok(format!("{} fixture theories identical for budgets 1, 2, 8", dirs.len()))
}

fn escape_dense(rng: &mut impl Rng, names: &[String]) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..40) {
        match rng.gen_range(0..10) {
            0..=4 => s.push_str(&names[rng.gen_range(0..names.len())]),
            5 => s.push_str("\\<"),
            6 => s.push_str("\\<bogus>"),
            7 => s.push('>'),
            8 => s.push(['\n', ' ', '\\'][rng.gen_range(0..3)]),
            _ => s.push(rng.gen_range(b'!'..=b'~') as char),
        }
    }
    s
}

fn symbol_codec() -> Outcome {
    let table = SymbolTable::bundled();
    let names: Vec<String> = table.entries().iter().map(|e| e.escape()).collect();
    let mut checked = 0;
    for entry in table.entries() {
        let esc = entry.escape();
        let mut cases = vec![esc.clone(), format!("a{esc}b")];
        if entry.style != SymbolStyle::Glyph {
            cases.push(format!("{esc}x"));
            cases.push(format!("x{esc}\\<alpha>"));
        }
        for raw in cases {
            let styled = decode(&raw);
            if encode(&styled) != raw {
                return Err(format!("round trip fails for {raw:?}"));
            }
            checked += 1;
        }
        if let Some(glyph) = entry.codepoint {
            if decode(&esc).text != glyph.to_string() {
                return Err(format!("{esc} does not decode to {glyph}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let raw = escape_dense(&mut rng, &names);
        if encode(&decode(&raw)) != raw {
            return Err(format!("round trip fails for fuzzed {raw:?}"));
        }
    }
    for _ in 0..1000 {
        let len = rng.gen_range(0..60);
        let raw: String = (0..len).map(|_| rng.gen::<char>()).collect();
        let styled = decode(&raw);
        if styled.offset_map.raw_len() != raw.chars().count() {
            return Err(format!("offset map inconsistent for {raw:?}"));
        }
    }
    Ok(format!(
        "{} table entries ({checked} cases), 1000 fuzzed round trips, 1000 arbitrary decodes",
        table.entries().len()
    ))
}

fn partition_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let alphabet: Vec<char> = "defvalmtheorybgins (*)\\<>^\n\t=+-*:,019_'\u{2200}\u{3b1}?!"
        .chars()
        .collect();
    let keywords = [
        "def ",
        "eval ",
        "lemma ",
        "theory ",
        "imports ",
        "begin",
        "end",
        "sleep ",
        "(*",
        "*)",
        "\\<forall>",
    ];
    let mut failures = 0;
    for _ in 0..10_000 {
        let mut s = String::new();
        for _ in 0..rng.gen_range(0..80) {
            if rng.gen_bool(0.15) {
                s.push_str(keywords[rng.gen_range(0..keywords.len())]);
            } else if rng.gen_bool(0.05) {
                s.push(rng.gen::<char>());
            } else {
                s.push(alphabet[rng.gen_range(0..alphabet.len())]);
            }
        }
        let (spans, _) = partition(&s);
        let joined: String = spans.iter().map(|sp| sp.text.as_str()).collect();
        if joined != s {
            failures += 1;
        }
    }
    if failures == 0 {
        Ok("10000 random strings, concat(spans) == input".into())
    } else {
        Err(format!("{failures} failures"))
    }
}

fn markup_well_formed() -> Outcome {
    let mut trees = 0;
    let mut uses = 0;
    for dir in common::fixture_dirs() {
        let session = common::check_dir(&dir, 2);
        let outcomes = session.outcomes();
        let mut defs = HashSet::new();
        for (node, spans) in &outcomes {
            for s in spans {
                let Some(r) = &s.result else { continue };
                for (range, label) in r.markup.labels() {
                    if let Label::DefSite { .. } = label {
                        defs.insert((node.clone(), s.span.range.start + range.start));
                    }
                }
            }
        }
        let nodes: HashSet<_> = outcomes.iter().map(|(n, _)| n.clone()).collect();
        for (node, spans) in &outcomes {
            for s in spans {
                let Some(r) = &s.result else { continue };
                trees += 1;
                if let Err(e) = r.markup.validate(s.span.text.chars().count()) {
                    return Err(format!("{node} {:?}: {e}", s.span.range));
                }
                for (range, label) in r.markup.labels() {
                    let Label::UseSite { def, .. } = label else { continue };
                    uses += 1;
                    let at = s.span.range.start + range.start;
                    let resolved = if s.span.keyword == "imports" {
                        // Import names refer to the imported node itself.
                        def.offset == 0 && nodes.contains(&def.node)
                    } else {
                        defs.contains(&(def.node.clone(), def.offset)) && (def.node != *node || def.offset < at)
                    };
                    if !resolved {
                        return Err(format!("{node}:{at}: use_site {label} does not resolve"));
                    }
                }
            }
        }
    }
    Ok(format!(
        "{trees} markup trees well-formed, {uses} use sites resolve to preceding defs"
    ))
}

fn protocol_golden() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../protocol/golden");
    for ty in MESSAGE_TYPES {
        let path = dir.join(format!("{ty}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let body = text.trim_end();
        let env = Envelope::from_json(body).map_err(|e| format!("{ty}: {e}"))?;
        if env.message.type_name() != *ty {
            return Err(format!("{ty}.json holds a {} message", env.message.type_name()));
        }
        if env.to_json() != body {
            return Err(format!("{ty}: re-serialization differs"));
        }
        match deserialize(&serialize(&env)) {
            Ok(back) if back == env => {}
            _ => return Err(format!("{ty}: frame round trip differs")),
        }
    }
    Ok(format!(
        "{} message types round-trip byte for byte",
        MESSAGE_TYPES.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("differential oracle", differential_oracle),
        ("non-blocking editing", non_blocking_editing),
        ("parallelism", parallelism),
        ("cancellation", cancellation),
        ("budget independence", budget_independence),
        ("symbol codec", symbol_codec),
        ("span partition fuzz", partition_fuzz),
        ("markup well-formedness", markup_well_formed),
        ("protocol golden files", protocol_golden),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
