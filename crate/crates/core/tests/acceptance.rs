//! One line per acceptance criterion. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rfac_core::group::GroupProfile;
use rfac_core::properties::{measure_efficiency, run_suite, Suite, SuiteReport};
use rfac_core::scenarios::{self, Adversary, Scenario};
use rfac_core::Group;

const CRYPTO_BUDGET: Duration = Duration::from_secs(5);
const SCENARIO_BUDGET: Duration = Duration::from_secs(60);

struct Line {
    id: u8,
    name: &'static str,
    ok: bool,
    detail: String,
}

fn counts(r: &SuiteReport) -> String {
    r.checks.iter().map(|c| format!("{} {}/{}", c.name, c.passed, c.total)).collect::<Vec<_>>().join("; ")
}

fn suite_line(id: u8, name: &'static str, suite: Suite, n: usize, group: &Group, extra: impl Fn(&SuiteReport) -> bool) -> Line {
    let r = run_suite(suite, n, 7, group);
    if !r.passed() {
        eprintln!("{r}");
    }
    Line { id, name, ok: r.passed() && extra(&r), detail: format!("{} in {:.2?}", counts(&r), r.elapsed) }
}

fn main() -> ExitCode {
    let toy = Group::generate(GroupProfile::Toy);
    let desk = Group::generate(GroupProfile::Desk);
    let mut lines = Vec::new();

    lines.push(suite_line(1, "crypto oracle equivalence (toy, exhaustive, < 5 s)", Suite::Crypto, 20, &desk, |r| {
        r.elapsed < CRYPTO_BUDGET && r.check("toy decrypt(universal(encrypt)) = id").is_some_and(|c| c.total == 11u64.pow(6))
    }));
    lines.push(suite_line(2, "mutual authentication (500 honest, 500 adversarial)", Suite::Lemma1, 500, &toy, |r| {
        r.checks.iter().take(2).all(|c| c.total == 500)
    }));
    lines.push(suite_line(3, "identifier refresh (>= 499/500, desk)", Suite::Lemma2, 500, &desk, |r| {
        r.check("encid changes").is_some_and(|c| c.total == 500 && c.passed >= 499)
    }));
    lines.push(suite_line(4, "stolen reader (200/200)", Suite::Lemma3, 200, &desk, |r| {
        r.checks.iter().all(|c| c.total == 200 && c.passed == 200)
    }));
    lines.push(suite_line(5, "method execution under replay (1000 sessions)", Suite::Lemma4, 1000, &toy, |r| {
        r.check("executions match verified calls").is_some_and(|c| c.total == 1000)
            && r.check("expired tokens rejected").is_some_and(|c| c.passed == 1000)
    }));
    lines.push(suite_line(6, "decoy frame shapes (>= 1000 frames)", Suite::Decoy, 100, &desk, |r| {
        r.check("frames compared").is_some_and(|c| c.total >= 1000)
    }));

    let started = Instant::now();
    let mut failed = Vec::new();
    for seed in 0..10 {
        for sc in Scenario::ALL {
            let (report, _) = scenarios::run(sc, desk.clone(), seed, Adversary::None);
            if !report.passed() {
                eprintln!("{report}");
                failed.push(format!("{sc}/{seed}"));
            }
        }
    }
    let elapsed = started.elapsed();
    lines.push(Line {
        id: 7,
        name: "scenario scripts (seeds 0..9, desk, < 60 s)",
        ok: failed.is_empty() && elapsed < SCENARIO_BUDGET,
        detail: format!("30 runs in {elapsed:.2?}, failed {failed:?}"),
    });

    let rows = measure_efficiency(&desk, &[10, 100, 1000], 7);
    let flat = rows.iter().all(|r| r.authentications == r.tags && r.reader_public_key.0 == r.reader_public_key.1)
        && rows.windows(2).all(|w| w[0].reader_public_key == w[1].reader_public_key)
        && rows.iter().all(|r| r.tag_public_key == 0);
    let detail = rows
        .iter()
        .map(|r| format!("{} tags: reader {} pk/auth, tag {} pk, <= {} sym", r.tags, r.reader_public_key.1, r.tag_public_key, r.tag_symmetric))
        .collect::<Vec<_>>()
        .join("; ");
    lines.push(Line { id: 8, name: "public-key cost per authentication", ok: flat, detail });

    for l in &lines {
        println!("criterion {}: {} - {} ({})", l.id, if l.ok { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    if lines.iter().all(|l| l.ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
