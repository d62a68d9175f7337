//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by the
//! individual verdicts it aggregates. Exits 0 unless a run errors out; the
//! verdict lines are the result.

use std::path::PathBuf;
use std::time::Instant;

use liouville_cli::experiments::run;
use liouville_cli::report::ledger_csv;
use liouville_cli::{run_to_dir, Experiment, ExperimentConfig, Verdict};

struct Criterion {
    id: u32,
    title: &'static str,
    verdicts: Vec<Verdict>,
    /// Printed on failure: why the criterion is out of reach at this scale.
    note: Option<&'static str>,
    seconds: f64,
}

impl Criterion {
    fn pass(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.pass || !v.gated)
    }

    fn print(&self) {
        let tag = if self.pass() { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {} ({:.1}s)", self.id, self.title, self.seconds);
        for v in &self.verdicts {
            println!("    {v}");
        }
        if !self.pass() {
            if let Some(note) = self.note {
                for line in note.lines() {
                    println!("    note: {}", line.trim());
                }
            }
        }
    }
}

fn cfg(e: Experiment, edits: &[(&str, &str)]) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(e);
    for (k, v) in edits {
        c.set(k, v).unwrap_or_else(|err| panic!("{k} = {v}: {err}"));
    }
    c
}

fn criterion(id: u32, title: &'static str, note: Option<&'static str>, configs: Vec<ExperimentConfig>) -> Criterion {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    for c in &configs {
        let rep = run(c).unwrap_or_else(|e| panic!("criterion {id}: {e}"));
        let tag = if configs.len() > 1 { format!(" [gamma={}]", c.gamma) } else { String::new() };
        verdicts.extend(rep.verdicts.into_iter().map(|mut v| {
            v.name.push_str(&tag);
            v
        }));
    }
    Criterion { id, title, verdicts, note, seconds: start.elapsed().as_secs_f64() }
}

const NOTE_4: &str = "the exact small-x limit of g(x)/x^2 for the torus radial process is 1, not 3/pi:
g(x) = 1 - exp(-x^2), so the deviation from 3/pi grows as x shrinks and the ordering
check cannot hold; the x = 0.1 band passes because 1 - x^2/2 sits inside it.";

const NOTE_5: &str = "the continuity-corrected estimate should match erf(x/sqrt 2)^2; a failure here
means the barrier shift or the sample size is off.";

const NOTE_8: &str = "the coupled ratio approaches its limit from below with a correction of order
b^2/t in the typical barrier level b; at t in {4, 6, 8} it sits near 1.10-1.17, rising
monotonically, and reaches the band only for t well beyond desk scale.";

const NOTE_9: &str = "the one-point slope carries finite-t corrections of relative order 1/t; the
log-log fit over t in {4..10} absorbs them into the slope.";

const NOTE_10: &str = "the plateau needs b^2 much smaller than t; at t = 8 the factor b^2 E[.|A] is
still rising between b = 3 and b = 4 (about 50%) because the conditioned walk has not
forgotten the barrier. For the same reason E[.|A] itself falls more like a power of b
than exponentially over b in 1..4, so its fitted log slope (about -0.2) is shallower
than -r gamma / 2.";

fn main() {
    let g = |v: &str| cfg(Experiment::UpsilonCheck, &[("gamma", v)]);
    let d = |v: &str| cfg(Experiment::DozzTable, &[("gamma", v)]);
    let mut all = vec![
        criterion(1, "upsilon reflection", None, vec![g("0.5"), g("1.0"), g("1.5")]),
        criterion(2, "DOZZ permutation and mu-scaling", None, vec![d("0.8"), d("1.2")]),
        criterion(
            3,
            "Bessel time-1 densities",
            None,
            vec![cfg(Experiment::BesselDensity, &[("x", "0,0.5,1,2")])],
        ),
        criterion(
            4,
            "torus barrier constant g(x)/x^2",
            Some(NOTE_4),
            vec![cfg(Experiment::Lemma33, &[("n", "1000000"), ("steps", "4096"), ("x", "0.05,0.1,0.2")])],
        ),
        criterion(
            5,
            "Brownian barrier f(x)^2/x^2",
            Some(NOTE_5),
            vec![cfg(Experiment::SupRatio, &[("n", "1000000"), ("steps", "4096"), ("x", "0.1")])],
        ),
        criterion(6, "Green kernel decay", None, vec![cfg(Experiment::GreenDecay, &[("t", "2,3,4,5")])]),
        criterion(
            7,
            "spectral GFF covariance",
            None,
            vec![cfg(Experiment::SpectralCov, &[("n", "100000"), ("cutoff", "64")])],
        ),
        criterion(
            8,
            "torus/cylinder ratio",
            Some(NOTE_8),
            vec![cfg(Experiment::Ratio32, &[("t", "4,6,8"), ("n", "20000"), ("r", "0.5"), ("alpha", "1.2")])],
        ),
        criterion(
            9,
            "one-point slope in t",
            Some(NOTE_9),
            vec![cfg(Experiment::SlopeTheorem, &[("t", "4,6,8,10"), ("n", "20000"), ("alpha", "1.2")])],
        ),
        criterion(
            10,
            "conditioned-moment plateau",
            Some(NOTE_10),
            vec![cfg(Experiment::Plateau, &[("t", "8"), ("b", "1,2,3,4"), ("n", "40000"), ("r", "0.5")])],
        ),
    ];
    all.push(determinism());
    for c in &all {
        c.print();
    }
    let passed = all.iter().filter(|c| c.pass()).count();
    println!("acceptance: {passed}/{} criteria pass", all.len());
}

fn scratch(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("liouville-acceptance-{}-{tag}", std::process::id()))
}

fn determinism() -> Criterion {
    let start = Instant::now();
    let configs = [
        cfg(Experiment::SupRatio, &[("n", "20000")]),
        cfg(Experiment::Ratio32, &[("t", "4"), ("n", "500")]),
        cfg(Experiment::WilliamsCheck, &[("n", "2000")]),
    ];
    let mut verdicts = Vec::new();
    for c in &configs {
        let (a_dir, b_dir) = (scratch("a"), scratch("b"));
        let (a, art_a) = run_to_dir(c, &a_dir).expect("first run");
        let (b, art_b) = run_to_dir(c, &b_dir).expect("second run");
        let bytes_a = std::fs::read(&art_a.ledger).expect("ledger a");
        let bytes_b = std::fs::read(&art_b.ledger).expect("ledger b");
        let same = bytes_a == bytes_b && a.config_digest == b.config_digest;
        // the in-memory rendering is what was written
        let rendered = ledger_csv(&a).expect("render") == bytes_a;
        let _ = std::fs::remove_dir_all(&a_dir);
        let _ = std::fs::remove_dir_all(&b_dir);
        verdicts.push(Verdict::check(
            format!("{} byte-identical ledger", c.experiment),
            bytes_a.len() as f64,
            bytes_b.len() as f64,
            "identical bytes",
            same && rendered,
        ));
    }
    Criterion {
        id: 11,
        title: "determinism of the CSV ledger",
        verdicts,
        note: None,
        seconds: start.elapsed().as_secs_f64(),
    }
}
