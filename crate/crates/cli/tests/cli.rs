use std::fs;
use std::path::Path;
use std::process::Command;

fn mcnet(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_mcnet"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "mcnet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn phantom_index_train_eval_infer_tsne() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (train_imgs, val_imgs) = (d.join("train_imgs"), d.join("val_imgs"));
    mcnet(&["phantom", "--out", p(&train_imgs), "--count", "2", "--seed", "0"]);
    mcnet(&["phantom", "--out", p(&val_imgs), "--count", "1", "--seed", "50"]);
    assert!(train_imgs.join("phantom_0001_mask.pgm").exists());
    assert!(train_imgs.join("phantom_0001.txt").exists());

    let (train_set, val_set) = (d.join("train_set"), d.join("val_set"));
    for (imgs, set) in [(&train_imgs, &train_set), (&val_imgs, &val_set)] {
        let out = mcnet(&["index", "--data", p(imgs), "--out", p(set), "--patch-size", "15"]);
        assert!(out.contains("C1"), "{out}");
    }

    let settings = d.join("train.cfg");
    fs::write(
        &settings,
        "# tiny run\nbatch_size = 8\nbatches_per_epoch = 3\nmax_epochs = 2\n",
    )
    .unwrap();
    let mut weights = Vec::new();
    for target in ["detector", "segmentator"] {
        let w = d.join(format!("{target}.bin"));
        let log = d.join(format!("{target}.tsv"));
        mcnet(&[
            "train",
            "--target",
            target,
            "--train",
            p(&train_set),
            "--val",
            p(&val_set),
            "--out",
            p(&w),
            "--patch-size",
            "15",
            "--config",
            p(&settings),
            "--set",
            "validation_size=32",
            "--log",
            p(&log),
        ]);
        assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 3);
        weights.push(w);
    }

    let table = mcnet(&[
        "eval",
        "--weights",
        p(&weights[0]),
        "--set",
        p(&val_set),
        "--target",
        "detector",
        "--per-class",
        "20",
    ]);
    assert!(table.contains("Detector"), "{table}");

    let out_dir = d.join("infer");
    let report = mcnet(&[
        "infer",
        "--image",
        p(&val_imgs.join("phantom_0050.pgm")),
        "--detector",
        p(&weights[0]),
        "--segmentator",
        p(&weights[1]),
        "--out",
        p(&out_dir),
        "--set",
        "patch_size=15",
    ]);
    assert!(report.contains("clusters"), "{report}");
    for f in ["mask.pgm", "report.txt", "overlay.ppm"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }

    let tsne_dir = d.join("tsne");
    mcnet(&[
        "tsne",
        "--weights",
        p(&weights[1]),
        "--set",
        p(&val_set),
        "--target",
        "segmentator",
        "--points",
        "40",
        "--perplexity",
        "5",
        "--out",
        p(&tsne_dir),
    ]);
    let tsv = fs::read_to_string(tsne_dir.join("projection.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 41);
    assert!(tsne_dir.join("misclassified.txt").exists());
}

#[test]
fn unknown_setting_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_mcnet"))
        .args([
            "infer",
            "--image",
            "x.pgm",
            "--detector",
            "a",
            "--segmentator",
            "b",
            "--out",
            "o",
            "--set",
            "speed=11",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown setting"));
}

#[test]
fn missing_index_names_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mcnet"))
        .args([
            "eval",
            "--weights",
            "w.bin",
            "--set",
            dir.path().to_str().unwrap(),
            "--target",
            "detector",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
