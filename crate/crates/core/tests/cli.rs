mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use cryoinr::codec::Archive;
use cryoinr::mrc::{read_mrc, write_mrc};
use flate2::write::GzEncoder;
use tempfile::TempDir;

fn cryoinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cryoinr")).args(args).env_remove("CRYOINR_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cryoinr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

const FAST: [&str; 8] = ["--epochs", "2", "--arch", "127-8-Re1-4-1", "--batch", "256", "--seed", "3"];

fn synth_pair(dir: &TempDir) -> (String, String) {
    let a = p(dir, "a.mrc");
    let b = p(dir, "b.mrc");
    ok(&["synth", "--shape", "12,10,8", "--blobs", "2", "--seed", "1", "-o", &a]);
    ok(&["synth", "--shape", "9", "--blobs", "3", "--seed", "2", "-o", &b]);
    (a, b)
}

#[test]
fn compress_decompress_round_trip() {
    let dir = TempDir::new().unwrap();
    let (a, b) = synth_pair(&dir);
    let archive = p(&dir, "out.cemz");
    let mut args = vec!["compress", &a, &b, "-o", &archive];
    args.extend(FAST);
    let stdout = ok(&args);
    assert!(stdout.contains("aggregate ratio"), "{stdout}");
    assert!(Path::new(&format!("{archive}.train.csv")).exists());

    let parsed = Archive::parse(&std::fs::read(&archive).unwrap()).unwrap();
    assert_eq!(parsed.names().collect::<Vec<_>>(), ["a.mrc", "b.mrc"]);
    assert_eq!(parsed.model.latents.len(), 2);

    // same seed, same bytes
    let again = p(&dir, "again.cemz");
    let mut args = vec!["compress", &a, &b, "-o", &again];
    args.extend(FAST);
    ok(&args);
    assert_eq!(std::fs::read(&archive).unwrap(), std::fs::read(&again).unwrap());

    let all = p(&dir, "all");
    ok(&["decompress", &archive, "-o", &all]);
    for name in ["a.mrc", "b.mrc"] {
        let orig = read_mrc(&std::fs::read(dir.path().join(name)).unwrap()).unwrap();
        let rec = read_mrc(&std::fs::read(dir.path().join("all").join(name)).unwrap()).unwrap();
        assert_eq!(rec.dims(), orig.dims());
    }

    let one = p(&dir, "one");
    ok(&["decompress", &archive, "-o", &one, "--file", "b.mrc"]);
    assert!(dir.path().join("one/b.mrc").exists());
    assert!(!dir.path().join("one/a.mrc").exists());

    let out = cryoinr(&["decompress", &archive, "-o", &one, "--file", "c.mrc"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("c.mrc") && err.contains("a.mrc, b.mrc"), "{err}");
}

#[test]
fn missing_input_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "nope.mrc");
    let out = cryoinr(&["compress", &missing, "-o", &p(&dir, "x.cemz")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.mrc"));
    assert!(!dir.path().join("x.cemz").exists());
}

#[test]
fn corrupt_input_is_reported_per_file() {
    let dir = TempDir::new().unwrap();
    let bad = p(&dir, "bad.mrc");
    std::fs::write(&bad, b"not an mrc file").unwrap();
    let out = cryoinr(&["compress", &bad, "-o", &p(&dir, "x.cemz")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.mrc"));
}

#[test]
fn evaluate_reports_bands_and_csv() {
    let dir = TempDir::new().unwrap();
    let (o, r) = common::six_point_pair();
    let orig = p(&dir, "orig.mrc");
    let rec = p(&dir, "rec.mrc");
    std::fs::write(&orig, write_mrc(&o)).unwrap();
    std::fs::write(&rec, write_mrc(&r)).unwrap();

    let text = ok(&["evaluate", &orig, &rec]);
    assert!(text.contains("high (>=0.15)"), "{text}");
    assert!(text.contains("35.00") && text.contains("18.75"), "{text}");

    let same = ok(&["evaluate", &orig, &orig]);
    assert!(same.contains("PSNR ∞ dB"), "{same}");

    let relabeled = ok(&["evaluate", &orig, &rec, "--bands", "0.05,0.2"]);
    assert!(relabeled.contains("medium (0.05-0.2)") && relabeled.contains("high (>=0.2)"), "{relabeled}");

    let csv = p(&dir, "report.csv");
    ok(&["evaluate", &orig, &rec, "--csv", &csv]);
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("file,band,mean_pct,median_pct,within20_pct,count,value\n"));
    assert!(body.contains("orig.mrc,MSE,"));

    let out = cryoinr(&["evaluate", &orig, &rec, "--bands", "0.2,0.1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_shows_defaults() {
    let help = ok(&["compress", "--help"]);
    for needle in
        ["--epochs", "[default: 100]", "[default: 0.001]", "[default: 1024]", "[default: 10]", "[default: 0.01]"]
    {
        assert!(help.contains(needle), "missing {needle}");
    }
    assert_eq!(code(&cryoinr(&["compress"])), 1);
    assert_eq!(code(&cryoinr(&["--version"])), 0);
}

/// Answers exactly one HTTP request with `status` and `body`.
fn serve_once(status: &'static str, body: Vec<u8>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap() > 0 && line != "\r\n" {
            line.clear();
        }
        let head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
        stream.write_all(head.as_bytes()).unwrap();
        stream.write_all(&body).unwrap();
    });
    format!("http://{addr}/emdb")
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut e = GzEncoder::new(Vec::new(), flate2::Compression::fast());
    e.write_all(bytes).unwrap();
    e.finish().unwrap()
}

#[test]
fn fetch_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out_path = p(&dir, "emd.mrc");

    assert_eq!(code(&cryoinr(&["fetch", "EMD-x1", "-o", &out_path])), 1);

    let mirror = serve_once("404 Not Found", b"missing".to_vec());
    assert_eq!(code(&cryoinr(&["fetch", "EMD-1234", "-o", &out_path, "--mirror", &mirror])), 3);

    let mirror = serve_once("200 OK", b"definitely not gzip".to_vec());
    assert_eq!(code(&cryoinr(&["fetch", "EMD-1234", "-o", &out_path, "--mirror", &mirror])), 4);

    let mirror = serve_once("200 OK", gzip(b"gzip but not an mrc"));
    assert_eq!(code(&cryoinr(&["fetch", "EMD-1234", "-o", &out_path, "--mirror", &mirror])), 4);
    assert!(!Path::new(&out_path).exists());

    // nothing listens on a freshly released port
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dead = format!("http://127.0.0.1:{port}/emdb");
    assert_eq!(code(&cryoinr(&["fetch", "EMD-1234", "-o", &out_path, "--mirror", &dead])), 2);

    let (grid, _) = common::six_point_pair();
    let mrc = write_mrc(&grid);
    let mirror = serve_once("200 OK", gzip(&mrc));
    ok(&["fetch", "emd_1234", "-o", &out_path, "--mirror", &mirror]);
    assert_eq!(std::fs::read(&out_path).unwrap(), mrc);
}
