use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shfront::geometry::{builtin_geometry, GeometryKind};
use shfront::io::{load_sht1, write_wav, WavAudio, WavSampleFormat};
use tempfile::TempDir;

fn shfront(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shfront"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(len: usize, freq: f64, fs: f64) -> Vec<f64> {
    (0..len).map(|i| 0.3 * (2.0 * PI * freq * i as f64 / fs).sin()).collect()
}

/// Scene directory with an 8-mic circular array and one 1 s source.
fn scene_dir() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let g = builtin_geometry(GeometryKind::UniformCircular { count: 8, radius: 0.05 }).unwrap();
    g.save(dir.path().join("array.json")).unwrap();
    let src = WavAudio { sample_rate: 16000, channels: vec![tone(16000, 440.0, 16000.0)] };
    write_wav(dir.path().join("speech.wav"), &src, WavSampleFormat::Float32).unwrap();
    let scene = dir.path().join("scene.json");
    fs::write(
        &scene,
        r#"{"sources":[{"direction":[90,30],"wav":"speech.wav"}],
            "geometry":"array.json","fs":16000,"snr_db":20,"seed":7}"#,
    )
    .unwrap();
    (dir, scene)
}

fn simulated(dir: &TempDir, scene: &Path) -> PathBuf {
    let wav = dir.path().join("mix.wav");
    let out = shfront(&["simulate", s(scene), s(&wav)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    wav
}

fn transformed(dir: &TempDir, wav: &Path) -> PathBuf {
    let sht = dir.path().join("mix.sht1");
    let geom = dir.path().join("array.json");
    let out = shfront(&["transform", s(wav), s(&sht), "--geometry", s(&geom), "--order", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    sht
}

fn manifest_of(p: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", p.display()))
}

#[test]
fn simulate_writes_all_channels_and_manifest() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let audio = shfront::io::read_wav(&wav).unwrap();
    assert_eq!(audio.channels.len(), 8);
    assert!(manifest_of(&wav).exists());
}

#[test]
fn simulate_missing_geometry_is_user_error() {
    let (dir, scene) = scene_dir();
    fs::remove_file(dir.path().join("array.json")).unwrap();
    let out = shfront(&["simulate", s(&scene), s(&dir.path().join("x.wav"))]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn simulate_malformed_scene_is_user_error() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("bad.json");
    fs::write(&scene, "{\"sources\": 3}").unwrap();
    assert_eq!(code(&shfront(&["simulate", s(&scene), s(&dir.path().join("x.wav"))])), 2);
}

#[test]
fn same_scene_and_seed_are_byte_identical() {
    let (dir, scene) = scene_dir();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    assert_eq!(code(&shfront(&["simulate", s(&scene), s(&a), "--seed", "3"])), 0);
    assert_eq!(code(&shfront(&["simulate", s(&scene), s(&b), "--seed", "3"])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.wav");
    assert_eq!(code(&shfront(&["simulate", s(&scene), s(&c), "--seed", "4"])), 0);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn replay_reproduces_every_subcommand() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let sht = transformed(&dir, &wav);
    let weights = dir.path().join("w.ssaf");
    assert_eq!(code(&shfront(&["weights", "init", s(&weights), "--seed", "5"])), 0);
    let enh = dir.path().join("enh.sht1");
    assert_eq!(code(&shfront(&["enhance", s(&sht), s(&enh), "--weights", s(&weights)])), 0);
    let csv = dir.path().join("cost.csv");
    assert_eq!(code(&shfront(&["profile", "--output", s(&csv)])), 0);

    for (i, out) in [&wav, &sht, &weights, &enh, &csv].into_iter().enumerate() {
        let again = dir.path().join(format!("replay{i}"));
        let r = shfront(&["replay", s(&manifest_of(out)), "--output", s(&again)]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        assert_eq!(fs::read(out).unwrap(), fs::read(&again).unwrap(), "{}", out.display());
    }
}

#[test]
fn replay_rejects_garbage_manifest() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("m.json");
    fs::write(&m, "not json").unwrap();
    assert_eq!(code(&shfront(&["replay", s(&m)])), 2);
}

#[test]
fn transform_dims_and_channel_mismatch() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let sht = transformed(&dir, &wav);
    let t = load_sht1(&sht).unwrap();
    assert_eq!(t.shape(), [25, 98, 257]);

    let two = dir.path().join("two.wav");
    let audio = WavAudio { sample_rate: 16000, channels: vec![tone(4000, 300.0, 16000.0); 2] };
    write_wav(&two, &audio, WavSampleFormat::Pcm16).unwrap();
    let out = shfront(&[
        "transform",
        s(&two),
        s(&dir.path().join("two.sht1")),
        "--geometry",
        s(&dir.path().join("array.json")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("channels"));
}

#[test]
fn transform_subset_matches_explicit_subset_geometry() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let out_path = dir.path().join("sub.sht1");
    let geom = dir.path().join("array.json");
    let out = shfront(&["transform", s(&wav), s(&out_path), "--geometry", s(&geom), "--subset", "0,2,4,6"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let audio = shfront::io::read_wav(&wav).unwrap();
    let g = shfront::geometry::ArrayGeometry::load(&geom).unwrap();
    let idx = [0, 2, 4, 6];
    let sub = shfront::geometry::subset_geometry(&g, &idx).unwrap();
    let chans: Vec<Vec<f64>> = idx.iter().map(|&i| audio.channels[i].clone()).collect();
    let cfg = shfront::stft::StftConfig::for_sample_rate(16000);
    let want = shfront::sht_frontend::frontend(&chans, &sub, 4, &cfg).unwrap().into_tensor();
    let got = load_sht1(&out_path).unwrap();
    assert_eq!(got.shape(), want.shape());
    for (a, b) in got.data().iter().zip(want.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let bad = shfront(&["transform", s(&wav), s(&out_path), "--geometry", s(&geom), "--subset", "0,9"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn random_subset_is_recorded_and_seeded() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let geom = dir.path().join("array.json");
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let o = shfront(&["transform", s(&wav), s(&p), "--geometry", s(&geom), "--random-subset", "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        p
    };
    let a = run("r1.sht1", "11");
    let b = run("r2.sht1", "11");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest_of(&a)).unwrap()).unwrap();
    let subset = m["job"]["subset"].as_array().expect("subset recorded");
    assert!(subset.len() >= 2 && subset.len() <= 8);
}

#[test]
fn enhance_shapes_errors_and_job_determinism() {
    let (dir, scene) = scene_dir();
    let wav = simulated(&dir, &scene);
    let sht = transformed(&dir, &wav);
    let weights = dir.path().join("w.ssaf");
    assert_eq!(code(&shfront(&["weights", "init", s(&weights), "--seed", "1"])), 0);

    let sht2 = dir.path().join("mix2.sht1");
    fs::copy(&sht, &sht2).unwrap();
    let (e1, e2) = (dir.path().join("e1.sht1"), dir.path().join("e2.sht1"));
    let o = shfront(&["enhance", s(&sht), s(&e1), s(&sht2), s(&e2), "--weights", s(&weights), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_sht1(&e1).unwrap().shape(), [98, 257]);
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&e2).unwrap());

    let serial = dir.path().join("serial.sht1");
    assert_eq!(code(&shfront(&["enhance", s(&sht), s(&serial), "--weights", s(&weights), "--jobs", "1"])), 0);
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&serial).unwrap());

    let mut bytes = fs::read(&weights).unwrap();
    bytes[1] = b'X';
    let corrupt = dir.path().join("bad.ssaf");
    fs::write(&corrupt, &bytes).unwrap();
    let o = shfront(&["enhance", s(&sht), s(&dir.path().join("x.sht1")), "--weights", s(&corrupt)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("weights"));

    let truncated = dir.path().join("short.ssaf");
    fs::write(&truncated, &fs::read(&weights).unwrap()[..100]).unwrap();
    let o = shfront(&["enhance", s(&sht), s(&dir.path().join("y.sht1")), "--weights", s(&truncated)]);
    assert_eq!(code(&o), 2);

    let small = dir.path().join("small.ssaf");
    assert_eq!(code(&shfront(&["weights", "init", s(&small), "--channels", "9"])), 0);
    let o = shfront(&["enhance", s(&sht), s(&dir.path().join("z.sht1")), "--weights", s(&small)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn profile_csv_json_parity_and_reduction() {
    let out = shfront(&["profile"]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,seconds,gflops"));
    let rows: Vec<(String, f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 20);

    let stderr = String::from_utf8(out.stderr).unwrap();
    let pct: f64 = stderr
        .split_whitespace()
        .find_map(|w| w.strip_suffix('%').and_then(|v| v.parse().ok()))
        .expect("reduction printed");
    assert!(pct >= 90.0, "{stderr}");

    let out = shfront(&["profile", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), rows.len());
    for (p, (model, sec, gf)) in points.iter().zip(&rows) {
        assert_eq!(p["model"].as_str().unwrap(), model);
        assert_eq!(p["seconds"].as_f64().unwrap(), *sec);
        assert!((p["gflops"].as_f64().unwrap() - gf).abs() < 1e-6);
    }

    let out = shfront(&["profile", "--seconds", "2,5", "--models", "shtnet"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
    assert_eq!(code(&shfront(&["profile", "--seconds", "5..2"])), 2);
}

#[test]
fn unwritable_output_is_io_error() {
    let (dir, scene) = scene_dir();
    let missing = dir.path().join("no/such/dir/out.wav");
    assert_eq!(code(&shfront(&["simulate", s(&scene), s(&missing)])), 3);
    let csv = dir.path().join("no/such/cost.csv");
    assert_eq!(code(&shfront(&["profile", "--output", s(&csv)])), 3);
}

#[test]
fn inputs_are_not_mutated() {
    let (dir, scene) = scene_dir();
    let snapshot = |paths: &[&Path]| paths.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>();
    let geom = dir.path().join("array.json");
    let src = dir.path().join("speech.wav");
    let before = snapshot(&[&scene, &geom, &src]);
    let wav = simulated(&dir, &scene);
    assert_eq!(before, snapshot(&[&scene, &geom, &src]));

    let wav_before = fs::read(&wav).unwrap();
    let sht = transformed(&dir, &wav);
    assert_eq!(wav_before, fs::read(&wav).unwrap());

    let weights = dir.path().join("w.ssaf");
    assert_eq!(code(&shfront(&["weights", "init", s(&weights)])), 0);
    let ins = snapshot(&[&sht, &weights]);
    let enh = dir.path().join("enh.sht1");
    assert_eq!(code(&shfront(&["enhance", s(&sht), s(&enh), "--weights", s(&weights)])), 0);
    assert_eq!(ins, snapshot(&[&sht, &weights]));
}

#[test]
fn geometry_validate_and_builtin() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("ring.json");
    assert_eq!(code(&shfront(&["geometry", "builtin", "circular", s(&g), "--count", "8"])), 0);
    let out = shfront(&["geometry", "validate", s(&g)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mics"], 8);
    assert_eq!(v["channels"], 25);
    assert_eq!(v["planar"], true);
    assert!(!v["zero_channels"].as_array().unwrap().is_empty());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"name":"x","unit":"m","mics":[]}"#).unwrap();
    assert_eq!(code(&shfront(&["geometry", "validate", s(&bad)])), 2);
}
