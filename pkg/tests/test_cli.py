import json

import numpy as np
import pytest

import tscalib.evaluate
from tscalib.cli import main
from tscalib.data import load_dataset
from tscalib.train import read_history


def _synth_args(out, per_class=12, length=24):
    return [
        "synth",
        "--classes",
        "3",
        "--per-class",
        str(per_class),
        "--length",
        str(length),
        "--features",
        "1",
        "--seed",
        "7",
        "--out",
        str(out),
    ]


FAST = [
    "--epochs",
    "5",
    "--t-warmup",
    "1",
    "--t-corr",
    "3",
    "--folds",
    "2",
    "--batch-size",
    "16",
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "synth"
    assert main(_synth_args(out)) == 0
    return out


def test_synth_creates_valid_directory(data_dir):
    ds = load_dataset(data_dir)
    assert ds.n_instances == 36
    assert np.array_equal(ds.true_labels, ds.noisy_labels)


def test_synth_rerun_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(_synth_args(a)) == 0
    assert main(_synth_args(b)) == 0
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
    assert (a / "meta.json").read_bytes() == (b / "meta.json").read_bytes()


def test_synth_usage_errors(tmp_path):
    args = _synth_args(tmp_path / "c")
    args[args.index("--classes") + 1] = "1"
    assert main(args) == 1
    assert main(["synth", "--bogus-flag", "1"]) == 1


def test_inject_writes_sidecar(data_dir, tmp_path):
    out = tmp_path / "noisy"
    rc = main(
        ["inject", "--data", str(data_dir), "--kind", "sym", "--tau", "0.4", "--seed", "3", "--out", str(out)]
    )
    assert rc == 0
    payload = json.loads((out / "noise.json").read_text())
    assert payload["kind"] == "symmetric"
    assert payload["tau"] == 0.4
    assert 0.0 <= payload["achieved_rate"] <= 1.0
    noisy = load_dataset(out)
    assert (noisy.noisy_labels != noisy.true_labels).mean() == pytest.approx(
        payload["achieved_rate"]
    )


def test_inject_idn_records_protocol(data_dir, tmp_path):
    out = tmp_path / "idn"
    rc = main(["inject", "--data", str(data_dir), "--kind", "idn", "--tau", "0.3", "--out", str(out)])
    assert rc == 0
    payload = json.loads((out / "noise.json").read_text())
    assert payload["protocol"] == "instance-random-projection-v1"


def test_inject_tau_out_of_range(data_dir):
    assert main(["inject", "--data", str(data_dir), "--kind", "sym", "--tau", "1.5"]) == 1


def test_train_run_directory(data_dir, tmp_path):
    out = tmp_path / "run"
    rc = main(
        ["train", "--data", str(data_dir), "--kind", "sym", "--tau", "0.3", "--out", str(out), *FAST]
    )
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["scores"]) == 2
    assert (out / "report.md").is_file()
    assert (out / "config.json").is_file()
    history = read_history(out / "fold0_seed0" / "history.csv")
    assert len(history) == 5


def test_train_reproducible_from_config_echo(data_dir, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    args = ["train", "--data", str(data_dir), "--kind", "sym", "--tau", "0.3", "--out", str(out1), *FAST]
    assert main(args) == 0
    # replay from the emitted config alone; only the output dir is overridden
    assert main(["train", "--config", str(out1 / "config.json"), "--out", str(out2)]) == 0
    a = json.loads((out1 / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    assert a["scores"] == b["scores"]


def test_train_ablation_history_terms(data_dir, tmp_path):
    out = tmp_path / "ablate"
    rc = main(
        [
            "train",
            "--data",
            str(data_dir),
            "--kind",
            "sym",
            "--tau",
            "0.3",
            "--no-aug",
            "--no-corr",
            "--out",
            str(out),
            *FAST,
        ]
    )
    assert rc == 0
    for rec in read_history(out / "fold0_seed0" / "history.csv"):
        assert rec.loss_aug is None
        assert rec.loss_corr is None
        if rec.phase != "warmup":
            assert rec.loss_ce is not None and rec.loss_recon is not None


def test_train_sloss_dumps_empty_uncertain(data_dir, tmp_path):
    out = tmp_path / "sloss"
    rc = main(
        [
            "train",
            "--data",
            str(data_dir),
            "--kind",
            "sym",
            "--tau",
            "0.3",
            "--selector",
            "sloss",
            "--dump-selection",
            "--out",
            str(out),
            *FAST,
        ]
    )
    assert rc == 0
    dumps = sorted((out / "fold0_seed0").glob("selection_epoch_*.json"))
    assert dumps
    for dump in dumps:
        payload = json.loads(dump.read_text())
        assert payload["set_sizes"]["uncertain"] == 0
        assert payload["uncertain_ids"] == []


def test_train_baseline_vanilla(data_dir, tmp_path):
    out = tmp_path / "vanilla"
    rc = main(
        [
            "train",
            "--data",
            str(data_dir),
            "--kind",
            "sym",
            "--tau",
            "0.3",
            "--baseline",
            "vanilla",
            "--out",
            str(out),
            *FAST,
        ]
    )
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["method"] == "vanilla"


def test_sweep_single_cell_matches_train(data_dir, tmp_path):
    sweep_out = tmp_path / "sweep"
    rc = main(
        [
            "sweep",
            "--data",
            str(data_dir),
            "--taus-sym",
            "0.3",
            "--taus-idn",
            "",
            "--methods",
            "full",
            "--out",
            str(sweep_out),
            *FAST,
        ]
    )
    assert rc == 0
    table = (sweep_out / "report.md").read_text()
    assert "sym 0.3" in table
    train_out = tmp_path / "single"
    assert (
        main(
            [
                "train",
                "--data",
                str(data_dir),
                "--kind",
                "sym",
                "--tau",
                "0.3",
                "--out",
                str(train_out),
                *FAST,
            ]
        )
        == 0
    )
    cell = json.loads((sweep_out / "full_sym_0.3" / "report.json").read_text())
    single = json.loads((train_out / "report.json").read_text())
    assert cell["scores"] == single["scores"]


def test_sweep_failed_cell_marked_err(data_dir, tmp_path, monkeypatch):
    real = tscalib.evaluate.run_cv

    def flaky(dataset, noise_spec, cfg, k, seeds, **kwargs):
        if noise_spec is not None and noise_spec.tau == 0.4:
            raise RuntimeError("boom")
        return real(dataset, noise_spec, cfg, k, seeds, **kwargs)

    monkeypatch.setattr(tscalib.evaluate, "run_cv", flaky)
    out = tmp_path / "sweep_err"
    rc = main(
        [
            "sweep",
            "--data",
            str(data_dir),
            "--taus-sym",
            "0.3,0.4",
            "--taus-idn",
            "",
            "--methods",
            "full",
            "--out",
            str(out),
            *FAST,
        ]
    )
    assert rc == 0
    table = (out / "report.md").read_text()
    row = [line for line in table.splitlines() if line.startswith("| full")][0]
    assert "ERR" in row
    cells = [c.strip() for c in row.split("|")[2:-1]]
    assert cells[1] == "ERR" and cells[0] != "ERR"


def test_report_renders_markdown_and_plots(data_dir, tmp_path):
    out = tmp_path / "run_for_report"
    # correction crosses its midpoint inside the run: t_corr=3, midpoint 10 -> epoch 13
    rc = main(
        [
            "train",
            "--data",
            str(data_dir),
            "--kind",
            "sym",
            "--tau",
            "0.3",
            "--out",
            str(out),
            "--epochs",
            "14",
            "--t-warmup",
            "1",
            "--t-corr",
            "3",
            "--folds",
            "2",
            "--batch-size",
            "16",
        ]
    )
    assert rc == 0
    history = read_history(out / "fold0_seed0" / "history.csv")
    crossing = [r for r in history if r.epoch == 13]
    assert crossing[0].correction_weight == 0.5
    for rec in history:
        if rec.phase != "warmup":
            assert rec.n_certain + rec.n_uncertain + rec.n_hard == 18  # train split size

    assert main(["report", "--run", str(out)]) == 0
    assert (out / "report.md").is_file()
    for sub in ["fold0_seed0", "fold1_seed0"]:
        for plot in ["loss_curves.png", "correction_weight.png", "partition_sizes.png"]:
            assert (out / sub / plot).is_file()


def test_report_without_flip_mask_omits_diagnostics(data_dir, tmp_path):
    out = tmp_path / "clean_run"
    rc = main(["train", "--data", str(data_dir), "--kind", "none", "--baseline", "vanilla", "--out", str(out), *FAST])
    assert rc == 0
    assert main(["report", "--run", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "Selection diagnostics" not in text


def test_report_missing_run_directory(tmp_path):
    assert main(["report", "--run", str(tmp_path / "nowhere")]) == 2


def test_config_file_precedence(data_dir, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"epochs": 5, "t_warmup": 1, "t_corr": 3, "folds": 2, "seed": 9}))
    out = tmp_path / "prec"
    rc = main(
        [
            "train",
            "--data",
            str(data_dir),
            "--config",
            str(cfg_file),
            "--kind",
            "none",
            "--seed",
            "5",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["seed"] == 5  # flag beats file
    assert echoed["epochs"] == 5  # file beats default
    assert echoed["folds"] == 2
