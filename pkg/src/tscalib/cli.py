"""Command-line surface: synth, inject, train, sweep, report.

Every option can also be supplied through a JSON config file (``--config``)
keyed by the option's dest name; explicit flags win over the file, the file
wins over built-in defaults. Exit codes: 0 success, 1 usage error, 2 runtime
failure. ``TSCALIB_OUT_ROOT`` sets the default output root (else ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

OUT_ROOT_ENV = "TSCALIB_OUT_ROOT"

ENCODER_CHOICES = {"lg": "local_global", "cnn": "cnn_only"}
KIND_CHOICES = {"sym": "symmetric", "idn": "instance"}

DEFAULT_SYM_TAUS = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_IDN_TAUS = (0.3, 0.4)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_root() -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV, "runs"))


def _load_file_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    with open(p) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


class _Options:
    """flag > config file > default resolution."""

    def __init__(self, args, file_cfg):
        self._args = args
        self._file = file_cfg
        self.resolved = {}

    def get(self, name, default=None, cast=None):
        value = getattr(self._args, name, None)
        if value is None:
            value = self._file.get(name, default)
        if cast is not None and value is not None:
            value = cast(value)
        self.resolved[name] = value
        return value


def _parse_taus(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(part) for part in str(text).split(",") if part.strip() != ""]


def _add_train_options(parser):
    parser.add_argument("--data", help="dataset directory")
    parser.add_argument("--out", help="run directory (default under the output root)")
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--selector", choices=["bmm", "gmm", "sloss"])
    parser.add_argument("--encoder", choices=sorted(ENCODER_CHOICES))
    parser.add_argument("--no-aug", action="store_true", default=None)
    parser.add_argument("--no-corr", action="store_true", default=None)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--t-warmup", type=int)
    parser.add_argument("--t-corr", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--repeats", type=int, help="number of seeded repetitions")
    parser.add_argument("--folds", type=int)
    parser.add_argument("--kind", choices=["none", *sorted(KIND_CHOICES)])
    parser.add_argument("--tau", type=float)
    parser.add_argument("--noise-seed", type=int)
    parser.add_argument("--dump-selection", action="store_true", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="tscalib", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p_synth.add_argument("--classes", type=int)
    p_synth.add_argument("--per-class", type=int)
    p_synth.add_argument("--length", type=int)
    p_synth.add_argument("--features", type=int)
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--name")
    p_synth.add_argument("--out", help="target directory")
    p_synth.add_argument("--config")

    p_inject = sub.add_parser("inject", help="inject label noise into a dataset directory")
    p_inject.add_argument("--data")
    p_inject.add_argument("--kind", choices=sorted(KIND_CHOICES))
    p_inject.add_argument("--tau", type=float)
    p_inject.add_argument("--seed", type=int)
    p_inject.add_argument("--out", help="output directory (default: in place)")
    p_inject.add_argument("--config")

    p_train = sub.add_parser("train", help="cross-validated training run")
    _add_train_options(p_train)
    p_train.add_argument("--baseline", choices=["vanilla"])

    p_sweep = sub.add_parser("sweep", help="noise grid x methods, one table")
    _add_train_options(p_sweep)
    p_sweep.add_argument("--taus-sym", help="comma list (default 0.1,0.2,0.3,0.4,0.5)")
    p_sweep.add_argument("--taus-idn", help="comma list (default 0.3,0.4)")
    p_sweep.add_argument("--methods", help="comma list from {full,vanilla}")

    p_report = sub.add_parser("report", help="render tables and plots for a run directory")
    p_report.add_argument("--run")
    p_report.add_argument("--out")
    p_report.add_argument("--config")

    return parser


def cmd_synth(args) -> int:
    from .data import save_dataset, synth_dataset

    opts = _Options(args, _load_file_config(args.config))
    n_classes = opts.get("classes", 3, int)
    per_class = opts.get("per_class", 100, int)
    length = opts.get("length", 50, int)
    features = opts.get("features", 1, int)
    seed = opts.get("seed", 0, int)
    name = opts.get("name", "synthetic")
    out = opts.get("out")
    if out is None:
        raise UsageError("synth requires --out")
    if n_classes < 2:
        raise UsageError("--classes must be >= 2")
    if min(per_class, length, features) < 1:
        raise UsageError("--per-class, --length and --features must be >= 1")
    dataset = synth_dataset(per_class, n_classes, length, features, seed, name=name)
    save_dataset(dataset, out)
    print(f"wrote {dataset.n_instances} instances to {out}")
    return 0


def cmd_inject(args) -> int:
    from .data import load_dataset, save_dataset
    from .noise import NoiseSpec, inject, write_noise_sidecar

    opts = _Options(args, _load_file_config(args.config))
    data = opts.get("data")
    if data is None:
        raise UsageError("inject requires --data")
    kind_flag = opts.get("kind")
    if kind_flag not in KIND_CHOICES:
        raise UsageError("inject requires --kind sym|idn")
    tau = opts.get("tau", None, float)
    if tau is None or not 0.0 <= tau <= 1.0:
        raise UsageError("inject requires --tau in [0, 1]")
    seed = opts.get("seed", 0, int)
    out = opts.get("out", data)

    dataset = load_dataset(data)
    spec = NoiseSpec(kind=KIND_CHOICES[kind_flag], tau=tau, seed=seed)
    noisy, mask = inject(dataset, spec)
    save_dataset(noisy, out)
    write_noise_sidecar(out, spec, mask)
    print(f"injected {spec.kind} noise tau={tau} (achieved {mask.achieved_rate:.4f}) into {out}")
    return 0


def _resolve_train_inputs(args):
    from .model import EncoderConfig
    from .noise import NoiseSpec
    from .train import TrainConfig

    opts = _Options(args, _load_file_config(args.config))
    data = opts.get("data")
    if data is None:
        raise UsageError("--data is required")

    encoder_flag = opts.get("encoder", "lg")
    if encoder_flag not in ENCODER_CHOICES:
        raise UsageError("--encoder must be lg or cnn")
    defaults = TrainConfig()
    cfg = TrainConfig(
        max_epochs=opts.get("epochs", defaults.max_epochs, int),
        warmup_epochs=opts.get("t_warmup", defaults.warmup_epochs, int),
        correction_start=opts.get("t_corr", defaults.correction_start, int),
        learning_rate=opts.get("lr", defaults.learning_rate, float),
        batch_size=opts.get("batch_size", defaults.batch_size, int),
        seed=opts.get("seed", defaults.seed, int),
        selector=opts.get("selector", defaults.selector),
        encoder=EncoderConfig(variant=ENCODER_CHOICES[encoder_flag]),
        disable_aug=bool(opts.get("no_aug", False)),
        disable_corr=bool(opts.get("no_corr", False)),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    kind_flag = opts.get("kind", "none")
    noise_spec = None
    if kind_flag != "none":
        if kind_flag not in KIND_CHOICES:
            raise UsageError("--kind must be none, sym, or idn")
        tau = opts.get("tau", None, float)
        if tau is None or not 0.0 <= tau <= 1.0:
            raise UsageError("--tau in [0, 1] is required when --kind is sym or idn")
        noise_spec = NoiseSpec(
            kind=KIND_CHOICES[kind_flag], tau=tau, seed=opts.get("noise_seed", 0, int)
        )
    else:
        opts.get("tau")
        opts.get("noise_seed", 0, int)

    k = opts.get("folds", 5, int)
    repeats = opts.get("repeats", 1, int)
    if repeats < 1:
        raise UsageError("--repeats must be >= 1")
    seeds = [cfg.seed + i for i in range(repeats)]
    dump = bool(opts.get("dump_selection", False))
    out = opts.get("out")
    return opts, data, cfg, noise_spec, k, seeds, dump, out


def _write_config_echo(out_path: Path, command: str, opts: _Options) -> None:
    payload = {"command": command} | opts.resolved
    out_path.mkdir(parents=True, exist_ok=True)
    with open(out_path / "config.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_train(args) -> int:
    from .data import load_dataset
    from .evaluate import run_baseline_vanilla, run_cv
    from .report import REPORT_MD, run_report_markdown

    opts, data, cfg, noise_spec, k, seeds, dump, out = _resolve_train_inputs(args)
    baseline = opts.get("baseline") if hasattr(args, "baseline") else None
    out_path = Path(out) if out else _out_root() / "train"
    dataset = load_dataset(data)
    _write_config_echo(out_path, "train", opts)
    if baseline == "vanilla":
        report = run_baseline_vanilla(dataset, noise_spec, cfg, k, seeds, out_dir=out_path)
    else:
        report = run_cv(dataset, noise_spec, cfg, k, seeds, out_dir=out_path, dump_selection=dump)
    (out_path / REPORT_MD).write_text(run_report_markdown(report))
    print(f"{report.method}: weighted F1 {report.mean_f1:.4f} ({report.std_f1:.4f}) -> {out_path}")
    return 0


def cmd_sweep(args) -> int:
    from .data import load_dataset
    from .evaluate import run_baseline_vanilla, run_cv, save_report
    from .noise import NoiseSpec
    from .report import sweep_markdown

    opts, data, cfg, _, k, seeds, dump, out = _resolve_train_inputs(args)
    taus_sym = _parse_taus(opts.get("taus_sym", list(DEFAULT_SYM_TAUS)))
    taus_idn = _parse_taus(opts.get("taus_idn", list(DEFAULT_IDN_TAUS)))
    methods_raw = opts.get("methods", "full,vanilla")
    methods = [m.strip() for m in str(methods_raw).split(",") if m.strip()]
    for m in methods:
        if m not in ("full", "vanilla"):
            raise UsageError(f"unknown method {m!r} (choose from full, vanilla)")
    noise_seed = opts.get("noise_seed", 0, int) or 0

    out_path = Path(out) if out else _out_root() / "sweep"
    dataset = load_dataset(data)
    _write_config_echo(out_path, "sweep", opts)

    settings = [("symmetric", t) for t in taus_sym] + [("instance", t) for t in taus_idn]
    labels = [f"{'sym' if kind == 'symmetric' else 'idn'} {tau:g}" for kind, tau in settings]
    grid = {}
    failures = 0
    for (kind, tau), label in zip(settings, labels):
        spec = NoiseSpec(kind=kind, tau=tau, seed=noise_seed)
        for method in methods:
            cell_dir = out_path / f"{method}_{label.replace(' ', '_')}"
            try:
                if method == "vanilla":
                    report = run_baseline_vanilla(dataset, spec, cfg, k, seeds, out_dir=cell_dir)
                else:
                    report = run_cv(dataset, spec, cfg, k, seeds, out_dir=cell_dir, dump_selection=dump)
                save_report(report, cell_dir / "report.json")
                grid[(method, label)] = report
            except Exception as exc:  # keep sweeping; mark the cell
                failures += 1
                grid[(method, label)] = None
                print(f"cell {method}/{label} failed: {exc}", file=sys.stderr)

    table = sweep_markdown(grid, methods, labels)
    (out_path / "report.md").write_text(table)
    print(table)
    print(f"sweep written to {out_path}" + (f" ({failures} failed cells)" if failures else ""))
    return 0


def cmd_report(args) -> int:
    from .evaluate import REPORT_FILE, load_report
    from .report import REPORT_MD, run_report_markdown, save_history_plots
    from .train import HISTORY_FILE, read_history

    opts = _Options(args, _load_file_config(args.config))
    run_dir = opts.get("run")
    if run_dir is None:
        raise UsageError("report requires --run")
    run_path = Path(run_dir)
    report_json = run_path / REPORT_FILE
    if not report_json.is_file():
        raise FileNotFoundError(f"no {REPORT_FILE} under {run_path}")
    out_path = Path(opts.get("out", run_path))
    out_path.mkdir(parents=True, exist_ok=True)

    report = load_report(report_json)
    (out_path / REPORT_MD).write_text(run_report_markdown(report))
    plotted = []
    for history in sorted(run_path.glob(f"*/{HISTORY_FILE}")):
        records = read_history(history)
        plotted += save_history_plots(records, out_path / history.parent.name)
    print(f"rendered {REPORT_MD} and {len(plotted)} plots under {out_path}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "inject": cmd_inject,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        traceback.print_exception(type(exc), exc, exc.__traceback__, limit=2, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
