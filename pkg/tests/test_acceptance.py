"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines. The end-to-end trend criteria (7 and 8) share one cross-validated
experiment on the frozen synthetic benchmark and dominate the runtime.
"""

import json
import math
import time

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

import tscalib.select as sel
from tscalib.cli import main as cli_main
from tscalib.data import save_dataset, synth_dataset
from tscalib.evaluate import run_baseline_vanilla, run_cv
from tscalib.model import TimeSeriesNet, reconstruction_loss
from tscalib.noise import NoiseSpec, inject_symmetric
from tscalib.select import fit_bmm, normalize_losses_per_class, partition
from tscalib.train import TrainConfig, corrected_target, correction_weight, read_history

from conftest import small_encoder

# Frozen synthetic benchmark: 3 classes x 200 instances, 50 timesteps.
BENCH = dict(n_per_class=200, n_classes=3, series_length=50, n_features=1, seed=2024)

# Reduced-epoch schedule for desk-scale end-to-end runs: every epoch count is
# scaled to 40% of the full-scale defaults (300/30/200 -> 120/15/80) and the
# ramp constants are rescaled by the same factor (midpoint 10 -> 4, steepness
# 0.1 -> 0.25) so the correction coefficient traces the same curve in
# rescaled time.
E2E_CFG = dict(
    max_epochs=120,
    warmup_epochs=15,
    correction_start=80,
    correction_steepness=0.25,
    correction_midpoint=4.0,
    batch_size=32,
    seed=0,
)
E2E_SEEDS = [0, 1, 2]
E2E_FOLDS = 2
E2E_TAU = 0.4
E2E_BUDGET_SECONDS = 900.0


def _report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {number} {name}: {detail}"


@pytest.fixture(scope="module")
def benchmark_dataset():
    return synth_dataset(**BENCH)


@pytest.fixture(scope="module")
def e2e_results(benchmark_dataset):
    """One shared end-to-end experiment for criteria 7 and 8."""
    spec = NoiseSpec("symmetric", E2E_TAU, seed=0)
    cfg = TrainConfig(**E2E_CFG)
    start = time.monotonic()
    full = run_cv(benchmark_dataset, spec, cfg, k=E2E_FOLDS, seeds=E2E_SEEDS)
    vanilla = run_baseline_vanilla(benchmark_dataset, spec, cfg, k=E2E_FOLDS, seeds=E2E_SEEDS)
    elapsed = time.monotonic() - start
    return full, vanilla, elapsed


def test_criterion_1_mixture_recovery():
    start = time.monotonic()
    hits = 0
    worst = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        draws = np.concatenate([rng.beta(2, 8, 1200), rng.beta(8, 2, 800)])
        fit = fit_bmm(draws)
        ok = (
            abs(fit.component_means[0] - 0.2) <= 0.05
            and abs(fit.component_means[1] - 0.8) <= 0.05
            and abs(fit.weights[0] - 0.6) <= 0.07
        )
        hits += ok
        worst.append((round(fit.component_means[0], 3), round(fit.component_means[1], 3)))
    elapsed = time.monotonic() - start
    _report(
        1,
        "mixture-recovery",
        hits >= 9 and elapsed < 5.0,
        f"{hits}/10 seeds within tolerance, {elapsed:.2f}s; means per seed {worst}",
    )


def test_criterion_2_partition_oracle_equivalence():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(6, 60))
        losses = rng.gamma(2.0, 1.0, n)
        labels = rng.integers(0, 3, n)
        stats = normalize_losses_per_class(losses, labels, 3)
        fits = sel.fit_class_mixtures(stats, "bmm")
        part = partition(stats, fits)

        certain, uncertain, hard = set(), set(), set()
        for st in stats:
            fit = fits.get(st.label)
            if st.degenerate or fit is None:
                certain.update(st.member_ids.tolist())
                continue
            mu_clean, mu_noisy = fit.component_means
            for pos, value in zip(st.member_ids, st.normalized):
                if value <= mu_clean:
                    certain.add(int(pos))
                elif value >= mu_noisy:
                    hard.add(int(pos))
                else:
                    uncertain.add(int(pos))
        same = (
            set(part.certain_ids.tolist()) == certain
            and set(part.uncertain_ids.tolist()) == uncertain
            and set(part.hard_ids.tolist()) == hard
        )
        mismatches += not same
    _report(2, "partition-oracle-equivalence", mismatches == 0, f"{mismatches}/100 fixtures mismatched")


def test_criterion_3_schedule_arithmetic():
    cfg = TrainConfig()  # correction_start 200, steepness 0.1, midpoint 10, max 1
    midpoint = correction_weight(210, cfg)
    at_start = correction_weight(200, cfg)
    late = correction_weight(300, cfg)
    # Direct-evaluation oracle of the ramp formula at 100 epochs past the
    # start: 1/(1 + e^-9), which sits 1.234e-4 below the cap -- the exact
    # saturation gap of the formula (e^-9), so that is what is asserted.
    late_oracle = 1.0 / (1.0 + math.exp(-9.0))
    ok = (
        midpoint == 0.5
        and abs(at_start - 1.0 / (1.0 + math.e)) <= 1e-9
        and abs(late - late_oracle) <= 1e-12
        and abs(late - cfg.correction_max) < 1.3e-4
    )
    _report(
        3,
        "schedule-arithmetic",
        ok,
        f"midpoint={midpoint}, start={at_start:.10f}, "
        f"cap gap at +100 epochs = {cfg.correction_max - late:.6e} (= e^-9/(1+e^-9))",
    )


def test_criterion_4_correction_rule_properties():
    rng = np.random.default_rng(11)
    failures = 0
    for p_clean in (0.0, 0.25, 0.5, 0.75, 1.0):
        for _ in range(50):
            n_classes = int(rng.integers(2, 6))
            onehot = np.zeros(n_classes)
            onehot[rng.integers(0, n_classes)] = 1.0
            soft = rng.dirichlet(np.ones(n_classes))
            out = corrected_target(p_clean, onehot, soft)
            if not ((out >= -1e-12).all() and abs(out.sum() - 1.0) <= 1e-9):
                failures += 1
            if p_clean == 1.0 and not np.array_equal(out, onehot):
                failures += 1
            if p_clean == 0.0 and not np.array_equal(out, soft):
                failures += 1
    _report(4, "correction-rule", failures == 0, f"{failures} violations over 250 cases")


def test_criterion_5_noise_injection_statistics():
    ds = synth_dataset(1250, 4, 6, 1, seed=5)  # N = 5000
    details = []
    ok = True
    for tau in (0.1, 0.4):
        noisy, mask = inject_symmetric(ds, tau, seed=31)
        rate = mask.achieved_rate
        bound = 3.0 * math.sqrt(tau * (1 - tau) / ds.n_instances)
        ok &= abs(rate - tau) <= bound
        pvals = []
        for c in range(4):
            selmask = mask.flipped & (ds.true_labels == c)
            dests = noisy.noisy_labels[selmask]
            counts = [int((dests == d).sum()) for d in range(4) if d != c]
            pvals.append(chisquare(counts).pvalue)
        ok &= min(pvals) > 0.01
        details.append(f"tau={tau}: rate={rate:.4f} (+-{bound:.4f}), min chi2 p={min(pvals):.3f}")
    _report(5, "noise-injection-statistics", ok, "; ".join(details))


def test_criterion_6_gradient_check():
    torch.manual_seed(3)
    net = TimeSeriesNet(1, 3, small_encoder(dropout=0.0)).double()
    net.eval()
    x = torch.randn(2, 10, 1, dtype=torch.float64)
    labels = torch.tensor([0, 2])

    def composite():
        out = net(x)
        ce = torch.nn.functional.cross_entropy(out.logits, labels, reduction="sum")
        return reconstruction_loss(x, out.reconstruction) + ce

    composite().backward()
    h = 1e-5
    rng = np.random.default_rng(0)
    worst = 0.0
    checked = 0
    for _, param in net.named_parameters():
        flat = param.detach().view(-1)
        grads = param.grad.view(-1)
        for j in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            original = flat[j].item()
            with torch.no_grad():
                flat[j] = original + h
                up = composite().item()
                flat[j] = original - h
                down = composite().item()
                flat[j] = original
            numeric = (up - down) / (2 * h)
            analytic = grads[j].item()
            gap = abs(numeric - analytic)
            rel = gap / max(abs(numeric), abs(analytic), 1e-8)
            if gap >= 1e-7:  # below: rounding noise around exactly-zero gradients
                worst = max(worst, rel)
            checked += 1
    _report(6, "gradient-check", worst < 1e-4, f"max relative error {worst:.2e} over {checked} entries")


def test_criterion_7_end_to_end_robustness_trend(e2e_results):
    full, vanilla, elapsed = e2e_results
    gap = full.mean_f1 - vanilla.mean_f1
    ok = gap >= 0.03 and elapsed < E2E_BUDGET_SECONDS
    _report(
        7,
        "end-to-end-robustness-trend",
        ok,
        f"full={full.mean_f1:.4f}({full.std_f1:.4f}) vanilla={vanilla.mean_f1:.4f}"
        f"({vanilla.std_f1:.4f}) gap={gap:.4f} (need >= 0.03), {elapsed:.0f}s of "
        f"{E2E_BUDGET_SECONDS:.0f}s budget",
    )


def test_criterion_8_selection_quality_trend(e2e_results):
    full, _, _ = e2e_results
    purities = []
    for records in full.histories.values():
        values = [r.certain_purity for r in records if r.certain_purity is not None]
        assert values, "no post-warmup selection diagnostics recorded"
        purities.append(float(np.mean(values)))
    mean_purity = float(np.mean(purities))
    base_clean_rate = 1.0 - E2E_TAU
    ok = mean_purity >= base_clean_rate + 0.1
    _report(
        8,
        "selection-quality-trend",
        ok,
        f"mean certain-set purity {mean_purity:.4f} vs base clean rate {base_clean_rate:.2f} + 0.1",
    )


def test_criterion_9_ablation_wiring(benchmark_dataset, tmp_path):
    data_dir = tmp_path / "bench"
    save_dataset(benchmark_dataset, data_dir)
    common = [
        "--data",
        str(data_dir),
        "--kind",
        "sym",
        "--tau",
        "0.3",
        "--epochs",
        "12",
        "--t-warmup",
        "2",
        "--t-corr",
        "6",
        "--folds",
        "2",
    ]
    variants = {
        "no_aug": ["--no-aug"],
        "no_corr": ["--no-corr"],
        "gmm": ["--selector", "gmm"],
        "sloss": ["--selector", "sloss", "--dump-selection"],
        "cnn": ["--encoder", "cnn"],
    }
    problems = []
    for name, extra in variants.items():
        out = tmp_path / name
        rc = cli_main(["train", *common, "--out", str(out), *extra])
        if rc != 0:
            problems.append(f"{name}: exit {rc}")
            continue
        records = read_history(out / "fold0_seed0" / "history.csv")
        post = [r for r in records if r.phase in ("select", "correct")]
        corr_phase = [r for r in records if r.phase == "correct"]
        if name == "no_aug":
            if any(r.loss_aug is not None for r in records):
                problems.append("no_aug: augmentation term present")
            if not any(r.loss_corr is not None for r in corr_phase):
                problems.append("no_aug: correction term missing")
        if name == "no_corr":
            if any(r.loss_corr is not None for r in records):
                problems.append("no_corr: correction term present")
            if not all(r.loss_aug is not None for r in post):
                problems.append("no_corr: augmentation term missing")
        if name in ("gmm", "cnn"):
            if not all(r.loss_aug is not None for r in post):
                problems.append(f"{name}: augmentation term missing")
            if not all(r.loss_corr is not None for r in corr_phase):
                problems.append(f"{name}: correction term missing")
        if name == "sloss":
            if not all(r.n_uncertain == 0 for r in post):
                problems.append("sloss: uncertain set not empty")
            if not all(r.loss_corr == 0.0 for r in corr_phase):
                problems.append("sloss: correction term not vacuous")
            dumps = sorted((out / "fold0_seed0").glob("selection_epoch_*.json"))
            if not dumps or any(
                json.loads(d.read_text())["set_sizes"]["uncertain"] != 0 for d in dumps
            ):
                problems.append("sloss: dumps show non-empty uncertain sets")
        for rec in post:
            if rec.n_certain + rec.n_uncertain + rec.n_hard != 300:
                problems.append(f"{name}: partition does not cover the training split")
                break
    _report(9, "ablation-wiring", not problems, "; ".join(problems) or "all 5 variants structurally clean")
