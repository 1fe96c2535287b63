import json
import random
import zipfile

import pytest

from prepatch import cli, inject, synth


def run(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# scan


def test_scan_single_apps(tmp_path, capsys):
    files, _ = synth.build_app_files("s2", 2, random.Random(1))
    apk = tmp_path / "one.apk"
    apk.write_bytes(synth.zip_app(files))
    code, out, _ = run(["scan", str(apk)], capsys)
    assert code == 0
    assert "one: DL" in out
    assert "services=face_detection" in out


def test_scan_corpus_with_report(corpus, tmp_path, capsys):
    root, entries = corpus
    report = tmp_path / "scan.json"
    code, out, _ = run(["scan", str(root), "--corpus",
                        "--report", str(report)], capsys)
    assert code == 0
    assert "total=23 dl=15" in out
    payload = json.loads(report.read_text())
    assert payload["stats"]["unscannable"] == 3
    assert len(payload["verdicts"]) == 23


def test_scan_report_to_stdout(tmp_path, capsys):
    files, _ = synth.build_app_files("nondl", 15, random.Random(2))
    tree = tmp_path / "plain"
    synth.write_tree(files, tree)
    code, out, _ = run(["scan", str(tree), "--report", "-"], capsys)
    assert code == 0
    payload = json.loads(out[out.index("{"):])
    assert payload["verdicts"][0]["is_dl"] is False


# ---------------------------------------------------------------------------
# locate


def test_locate_tree(tmp_path, capsys):
    files, truth = synth.build_app_files("s3", 4, random.Random(3))
    tree = tmp_path / truth.name
    synth.write_tree(files, tree)
    code, out, _ = run(["locate", str(tree)], capsys)
    assert code == 0
    assert "1 anchors, 1 matches" in out
    assert "S3_media_image" in out
    assert "createScaledBitmap" in out


def test_locate_apk_with_workdir(tmp_path, capsys):
    files, _ = synth.build_app_files("s1", 0, random.Random(4))
    apk = tmp_path / "packed.apk"
    apk.write_bytes(synth.zip_app(files))
    code, out, _ = run(["locate", str(apk), "--workdir", str(tmp_path / "w")],
                       capsys)
    assert code == 0
    assert "S1_buffer" in out


def test_locate_missing_path(tmp_path, capsys):
    code, _, err = run(["locate", str(tmp_path / "gone")], capsys)
    assert code == cli.EXIT_USAGE
    assert "does not exist" in err


# ---------------------------------------------------------------------------
# inject


@pytest.fixture
def tree(tmp_path):
    files, truth = synth.build_app_files("s2", 2, random.Random(5))
    tree = tmp_path / truth.name
    synth.write_tree(files, tree)
    return tree


def test_inject_dry_run_then_apply(tree, capsys):
    code, out, _ = run(["inject", str(tree), "--rotation-delta", "90",
                        "--dry-run"], capsys)
    assert code == 0
    assert "+    const/16 p2, 0x10e" in out
    assert not any("injecting" in p.name for p in tree.parent.iterdir())

    code, out, _ = run(["inject", str(tree), "--rotation-delta", "90"], capsys)
    assert code == 0
    assert "applied 1 patches" in out

    code, _, err = run(["inject", str(tree), "--rotation-delta", "90"], capsys)
    assert code == cli.EXIT_BLOCKED
    assert "marker" in err


def test_inject_no_matches_exit_code(tmp_path, capsys):
    files, _ = synth.build_app_files("nondl", 16, random.Random(6))
    tree = tmp_path / "plain"
    synth.write_tree(files, tree)
    code, _, err = run(["inject", str(tree), "--rotation-delta", "90"], capsys)
    assert code == cli.EXIT_NO_TARGETS
    assert "nothing to patch" in err


def test_inject_without_perturbation_flags(tree, capsys):
    code, _, err = run(["inject", str(tree)], capsys)
    assert code == cli.EXIT_USAGE
    assert "no perturbation requested" in err


def test_inject_conflicting_rotation_flags(tree, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["inject", str(tree), "--rotation-delta", "90",
                  "--rotation-override", "45"])
    assert exc.value.code == cli.EXIT_USAGE


def test_inject_repack_failure_exit_code(tree, capsys):
    code, _, err = run(["inject", str(tree), "--rotation-delta", "90",
                        "--repack", "false"], capsys)
    assert code == cli.EXIT_REPACK
    assert "repack failed" in err


def test_inject_repack_success(tree, tmp_path, capsys):
    out_path = tmp_path / "patched.tar"
    code, out, _ = run(["inject", str(tree), "--rotation-delta", "90",
                        "--repack", "tar -cf {out} -C {in} .",
                        "--repack-out", str(out_path)], capsys)
    assert code == 0
    assert out_path.exists()
    assert "repacked to" in out


def test_inject_report_payload(tree, tmp_path, capsys):
    report = tmp_path / "plan.json"
    code, _, _ = run(["inject", str(tree), "--rotation-override", "270",
                      "--report", str(report)], capsys)
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["result"]["applied"] == 1
    assert payload["plan"]["spec"]["rotation_override"] == 270


def test_inject_stale_tree_blocked(tree, capsys, monkeypatch):
    real_plan = inject.plan_injection

    def plan_then_mutate(root, spec, matches=None):
        plan = real_plan(root, spec, matches)
        target = root / plan.patches[0].unit_path
        target.write_text(target.read_text().replace("0xb4", "0x2d"))
        return plan

    monkeypatch.setattr(inject, "plan_injection", plan_then_mutate)
    code, _, err = run(["inject", str(tree), "--rotation-delta", "90"], capsys)
    assert code == cli.EXIT_BLOCKED
    assert "changed since planning" in err


# ---------------------------------------------------------------------------
# simulate


def test_simulate_outputs_rates(capsys):
    code, out, _ = run(["simulate", "--rotation-delta", "90",
                        "--images", "20"], capsys)
    assert code == 0
    assert "baseline: rotation=0 rate=1.00" in out
    assert "perturbed: rotation=90 rate=0.00" in out
    assert "rate drop: 1.00" in out


def test_simulate_latency_profile(capsys):
    code, out, _ = run(["simulate", "--latency-profile"], capsys)
    assert code == 0
    lines = [l for l in out.split("\n") if "pixel ops" in l]
    assert len(lines) == 4
    costs = [int(l.split(":")[1].split()[0]) for l in lines]
    assert costs == sorted(costs) and len(set(costs)) == 4


def test_simulate_report(tmp_path, capsys):
    report = tmp_path / "sim.json"
    code, _, _ = run(["simulate", "--rotation-override", "180",
                      "--images", "10", "--report", str(report)], capsys)
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["baseline"]["detection_rate"] == 1.0
    assert payload["perturbed"]["rotation"] == 180


# ---------------------------------------------------------------------------
# pipeline


def test_pipeline_end_to_end(corpus, tmp_path, capsys):
    root, _ = corpus
    report = tmp_path / "pipe.json"
    code, out, _ = run(["pipeline", str(root), "--workdir", str(tmp_path / "w"),
                        "--rotation-delta", "90", "--report", str(report)],
                       capsys)
    assert code == 0
    assert "matched=12 injected=12" in out
    payload = json.loads(report.read_text())
    assert payload["injected_apps"] == 12
    assert payload["stats"]["dl"] == 15


def test_pipeline_reports_are_deterministic(corpus, tmp_path, capsys):
    root, _ = corpus
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for target in (a, b):
        code, _, _ = run(["pipeline", str(root),
                          "--workdir", str(tmp_path / "w"),
                          "--rotation-delta", "90",
                          "--report", str(target)], capsys)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()


def test_pipeline_no_matches_exit_code(tmp_path, capsys):
    corpus_dir = tmp_path / "plainapps"
    corpus_dir.mkdir()
    for index in (15, 16):
        files, truth = synth.build_app_files("nondl", index, random.Random(7))
        (corpus_dir / f"{truth.name}.apk").write_bytes(synth.zip_app(files))
    code, out, _ = run(["pipeline", str(corpus_dir),
                        "--workdir", str(tmp_path / "w")], capsys)
    assert code == cli.EXIT_NO_TARGETS
    assert "matched=0" in out


def test_pipeline_rejects_missing_corpus(tmp_path, capsys):
    code, _, err = run(["pipeline", str(tmp_path / "nope")], capsys)
    assert code == cli.EXIT_USAGE


# ---------------------------------------------------------------------------
# report and config


def test_report_renders_pipeline_json(corpus, tmp_path, capsys):
    root, _ = corpus
    report = tmp_path / "pipe.json"
    run(["pipeline", str(root), "--workdir", str(tmp_path / "w"),
         "--rotation-delta", "90", "--report", str(report)], capsys)
    code, out, _ = run(["report", str(report)], capsys)
    assert code == 0
    assert "apps=23 dl=15 matched=12 injected=12" in out


def test_report_renders_experiment_json(tmp_path, capsys):
    report = tmp_path / "sim.json"
    run(["simulate", "--rotation-delta", "90", "--images", "10",
         "--report", str(report)], capsys)
    code, out, _ = run(["report", str(report)], capsys)
    assert code == 0
    assert "rate drop" in out


def test_config_file_overrides(tmp_path):
    from prepatch.config import Config
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"slice_depth": 0, "image_count": 5}))
    loaded = Config.from_file(config_path)
    assert loaded.slice_depth == 0 and loaded.image_count == 5
    merged = loaded.merged(slice_depth=2, workers=None)
    assert merged.slice_depth == 2 and merged.workers == loaded.workers


def test_config_unknown_key_rejected(tmp_path):
    from prepatch.config import Config
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"slice_depht": 1}))
    with pytest.raises(ValueError, match="slice_depht"):
        Config.from_file(bad)


def test_cli_config_reaches_simulate(tmp_path, capsys):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"image_count": 7}))
    report = tmp_path / "out.json"
    code, _, _ = run(["simulate", "--rotation-delta", "90",
                      "--config", str(config_path),
                      "--report", str(report)], capsys)
    assert code == 0
    assert json.loads(report.read_text())["baseline"]["total"] == 7


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
