use std::fs;
use std::path::Path;

use coset_cli::config::{DecoderChoice, Dims, ExperimentConfig, HashEnsemble, Kind};
use proptest::prelude::*;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["coset"];
    full.extend_from_slice(args);
    let code = coset_cli::run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_column(path: &Path, column: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn gen_matrix_is_reproducible_and_reports_rate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "g.cfg", "n = 8\nl = 4\nk = 1\ntau = 4\n");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let (code, out) = run(&["gen-matrix", "--config", &cfg, "--seed", "5", "--out", a.to_str().unwrap()]);
    assert_eq!(code, 0);
    run(&["gen-matrix", "--config", &cfg, "--seed", "5", "--out", b.to_str().unwrap()]);
    let fa = fs::read(a.join("matrix.gfmat")).unwrap();
    assert_eq!(fa, fs::read(b.join("matrix.gfmat")).unwrap());

    let m = coset::linear::read_gfmat(std::str::from_utf8(&fa).unwrap()).unwrap();
    let rk = coset::linear::rank(&m);
    assert!(out.contains(&format!("rank = {rk}, r = {}", rk as f64 / 8.0)), "{out}");
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let odd = write_config(d.path(), "odd.cfg", "tau = 5\n");
    assert_eq!(run(&["gen-matrix", "--config", &odd, "--out", out]).0, 2);
    let typo = write_config(d.path(), "typo.cfg", "q = 2\ntrails = 10\n");
    assert_eq!(run(&["channel", "--config", &typo, "--out", out]).0, 2);
    let wrong_kind = write_config(d.path(), "kind.cfg", "kind = lossy\n");
    assert_eq!(run(&["channel", "--config", &wrong_kind, "--out", out]).0, 2);
    assert_eq!(run(&["channel", "--exact-caps", "crng=zero", "--out", out]).0, 2);
    assert_eq!(run(&["derandomize", "--out", out]).0, 2);
    assert_eq!(run(&["nonsense"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn noiseless_channel_has_zero_error_rate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "c.cfg",
        "n = 8, 16\nl = 3\nk = 2\nchannel = noiseless(2)\ndecoder = map\ntrials = 100\n",
    );
    let (code, _) = run(&["channel", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = d.path().join("channel.csv");
    assert_eq!(csv_column(&csv, "error_rate"), vec!["0", "0"]);
    assert_eq!(csv_column(&csv, "ci_lo"), vec!["0", "0"]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("channel.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["sweep"].as_array().unwrap().len(), 2);
    assert_eq!(json["version"], env!("CARGO_PKG_VERSION"));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.contains(json["config_sha256"].as_str().unwrap()));
}

#[test]
fn rate_violations_are_flagged() {
    let d = tempfile::tempdir().unwrap();
    // r = 0.3 is below h(0.11) = 0.4999.
    let cfg = write_config(d.path(), "c.cfg", "n = 20\nr = 0.3\nR = 0.2\nchannel = bsc(0.11)\ntrials = 20\n");
    let (code, out) = run(&["channel", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("rate condition violated: r > H(X|Y)"), "{out}");
    assert_eq!(csv_column(&d.path().join("channel.csv"), "rate_conditions_ok"), vec!["false"]);
}

#[test]
fn verify_hash_passes_and_catches_corrupted_constants() {
    let d = tempfile::tempdir().unwrap();
    let out_dir = d.path().to_str().unwrap();
    let (code, out) = run(&["verify-hash", "--out", out_dir]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("(alpha, beta) = (1, 0)"));
    let bad = write_config(d.path(), "bad.cfg", "hash.alpha = 0.5\nhash.beta = 0\n");
    let (code, out) = run(&["verify-hash", "--config", &bad, "--out", out_dir]);
    assert_eq!(code, 1);
    assert!(out.contains("violation: H3"), "{out}");

    let sparse = write_config(d.path(), "s.cfg", "hash.ensemble = sparse\nhash.n = 4\nhash.l = 2\nhash.tau = 2\nq = 3\nchannel = qsc(3,0.1)\ninstances = 30\n");
    let (code, out) = run(&["verify-hash", "--config", &sparse, "--out", out_dir]);
    assert_eq!(code, 0, "{out}");
}

#[test]
fn crng_test_passes_at_n_8() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.cfg", "max_n = 8\ninstances = 40\n");
    let (code, out) = run(&["crng-test", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("max TV = "));
    assert!(out.contains("crng-test: pass"));
}

#[test]
fn derandomize_is_deterministic_and_decodes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "d.cfg", "n = 12\nl = 4\nk = 3\nchannel = noiseless(2)\ndecoder = map\n");
    let read = |sub: &str, omega: &str| {
        let dir = d.path().join(sub);
        let (code, _) = run(&["derandomize", "--config", &cfg, "--omega", omega, "--out", dir.to_str().unwrap()]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("derandomize.json")).unwrap()).unwrap();
        v["result"].clone()
    };
    let a = read("a", "5ac3e1");
    let b = read("b", "5ac3e1");
    assert_eq!(a, b);
    let c = read("c", "0f0f0f");
    for r in [&a, &c] {
        assert_eq!(r["decoded"], true);
        assert_eq!(r["message"], a["message"]);
        // Uniform prior: every drawn step is a fair binary choice, so the
        // interval algorithm reads exactly log2 |coset| bits.
        assert_eq!(r["bits_consumed"].as_f64().unwrap(), r["log2_coset_size"].as_f64().unwrap());
    }

    let dir = d.path().join("short");
    let mut out = Vec::new();
    let code = coset_cli::run(
        ["coset", "derandomize", "--config", &cfg, "--omega", "", "--out", dir.to_str().unwrap()],
        &mut out,
    );
    assert_eq!(code, 1);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.cfg", "n = 24, 48\nr = 0.5\nR = 0.3\nchannel = bsc(0.05)\ntrials = 60\n");
    let lossy = write_config(d.path(), "l.cfg", "n = 12\nl = 7\nk = 6\ntrials = 30\ncrng.engine = exact\n");
    let mut reference: Option<Vec<Vec<u8>>> = None;
    for threads in ["1", "2", "8"] {
        let dir = d.path().join(threads);
        let o = dir.to_str().unwrap();
        assert_eq!(run(&["channel", "--config", &cfg, "--threads", threads, "--out", o]).0, 0);
        assert_eq!(run(&["lossy", "--config", &lossy, "--threads", threads, "--out", o]).0, 0);
        assert_eq!(run(&["verify-hash", "--threads", threads, "--out", o]).0, 0);
        let files: Vec<Vec<u8>> = ["channel.csv", "channel.json", "lossy.csv", "lossy.json", "verify_hash.csv", "verify_hash.json"]
            .iter()
            .map(|f| fs::read(dir.join(f)).unwrap())
            .collect();
        match &reference {
            None => reference = Some(files),
            Some(r) => assert!(r == &files, "outputs differ at {threads} threads"),
        }
    }
}

fn preset() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("bsc(0.02)".to_string()),
        (0.0f64..0.5).prop_map(|p| format!("bsc({p})")),
        Just("noiseless(2)".to_string()),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        (
            prop::option::of(prop::sample::select(Kind::ALL.to_vec())),
            prop::collection::vec(1usize..500, 1..4),
            (1usize..6).prop_map(|t| 2 * t),
            prop_oneof![
                (0.0f64..1.0, 0.0f64..1.0).prop_map(|(r, big_r)| Dims::Rates { r, big_r }),
                (0usize..40, 0usize..40).prop_map(|(l, k)| Dims::Rows { l, k }),
            ],
            preset(),
            prop_oneof![Just("uniform".to_string()), (0.01f64..0.99).prop_map(|p| format!("bernoulli({p})"))],
        ),
        (
            0.0f64..1.0,
            1u64..100_000,
            any::<u64>(),
            prop_oneof![Just(DecoderChoice::Bp), Just(DecoderChoice::Map)],
            (1usize..1000, 0.0f64..0.99, 0.0f64..1e-3),
            any::<bool>(),
            prop::option::of(0.0f64..10.0),
            prop::option::of("[0-9a-f]{0,8}".prop_map(|s| if s.len() % 2 == 1 { format!("{s}0") } else { s })),
            prop_oneof![Just(HashEnsemble::AllLinear), Just(HashEnsemble::Sparse)],
        ),
    )
        .prop_map(|((kind, n, tau, dims, channel, prior), (d_max, trials, seed, decoder, bp, es, alpha, omega, he))| {
            let mut c = ExperimentConfig {
                kind,
                n,
                tau,
                dims,
                channel,
                prior,
                d_max,
                trials,
                seed,
                decoder,
                hash_alpha: alpha,
                omega,
                hash_ensemble: he,
                ..ExperimentConfig::default()
            };
            c.bp.max_iters = bp.0;
            c.bp.damping = bp.1;
            c.bp.tol = bp.2;
            c.crng.early_stop = es;
            c
        })
}

proptest! {
    #[test]
    fn config_round_trips(c in config()) {
        let text = c.serialize();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
    }
}
