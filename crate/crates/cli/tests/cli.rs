use std::process::Command;

fn zsvc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zsvc"))
}

#[test]
fn help_lists_every_command() {
    let out = zsvc().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["preprocess", "train-encoder", "train", "train-baseline", "convert", "evaluate", "bench"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_manifest_exits_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let out = zsvc()
        .args(["train-encoder", "--data-root"])
        .arg(tmp.path())
        .arg("--work-dir")
        .arg(tmp.path().join("work"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn bad_config_values_exit_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[training]\nfixed_crop_k = 100\n").unwrap();
    let out = zsvc().arg("--config").arg(&cfg).arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_prints_the_split() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    for spk in ["a", "b"] {
        std::fs::create_dir_all(data.join(spk)).unwrap();
        for u in 0..3 {
            let mut w = hound::WavWriter::create(
                data.join(spk).join(format!("u{u}.wav")),
                hound::WavSpec {
                    channels: 1,
                    sample_rate: 22050,
                    bits_per_sample: 16,
                    sample_format: hound::SampleFormat::Int,
                },
            )
            .unwrap();
            for i in 0..4410 {
                w.write_sample(((i as f32 * 0.05).sin() * 8000.0) as i16).unwrap();
            }
            w.finalize().unwrap();
        }
    }
    let out = zsvc()
        .arg("--data-root")
        .arg(&data)
        .arg("--work-dir")
        .arg(tmp.path().join("work"))
        .args(["preprocess", "--unseen", "b", "--test-fraction", "0.34"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("a\tseen\ttrain 2\ttest 1"), "{text}");
    assert!(text.contains("b\tunseen\ttrain 2\ttest 1"), "{text}");
    assert!(data.join("manifest.json").is_file());
}
