"""Acceptance gate: one test per headline requirement.

Each test prints a single PASS/FAIL line (visible under `pytest -s`) and then
asserts the same condition, so the gate fails loudly either way. Budgeted
tests are self-contained and time their own work instead of leaning on the
shared session fixtures.
"""

import json
import math
import time

import numpy as np
import pytest

import vunlearn as vu
from conftest import (
    SWEEP_SEED,
    onehot,
    reference_generator_spec,
    reference_train_config,
    rng_systems,
    sample_chain,
)
from vunlearn.cli import main as cli_main

FACTORS = ("task", "nuisance", "sensitive", "attribute")


def _line(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"{'PASS' if ok else 'FAIL'}: {name}{suffix}")


def _attack(model, dataset, attribute=0):
    config = vu.AttackerConfig(steps=800, learning_rate=0.01, seed=0)
    return vu.train_attacker(model, dataset, attribute, config).accuracy


def test_detachment_inequality_on_random_systems():
    start = time.perf_counter()
    rng = np.random.default_rng(20240817)
    worst_slack = math.inf
    worst_margin = math.inf
    for _ in range(200):
        system = vu.random_factor_system(rng)
        worst_slack = min(worst_slack, vu.verify_detachment_inequality(system).slack)
        beta = float(rng.uniform(0.0, 1.0))
        coeffs = vu.derive_coefficients(
            float(rng.uniform(0.0, 2.0)), beta, (float(rng.uniform(0.0, beta)),)
        )
        exact = vu.exact_detachment_loss(system, coeffs)
        bound = vu.exact_surrogate_on_system(system, coeffs).surrogate_total
        worst_margin = min(worst_margin, bound - exact)
    elapsed = time.perf_counter() - start
    ok = worst_slack >= -1e-10 and worst_margin >= -1e-10 and elapsed < 60
    _line(
        "detachment inequality on 200 random systems",
        ok,
        f"min slack {worst_slack:.2e}, min surrogate margin {worst_margin:.2e}, {elapsed:.1f}s",
    )
    assert worst_slack >= -1e-10
    assert worst_margin >= -1e-10
    assert elapsed < 60


def test_representation_never_gains_information():
    worst = math.inf
    for system in rng_systems(seed=31, count=40):
        joint = vu.compose_markov_chain(system)
        for factor in FACTORS:
            gap = vu.mutual_information(joint, "obs", factor) - vu.mutual_information(
                joint, "repr", factor
            )
            worst = min(worst, gap)
    ok = worst >= -1e-10
    _line("processing never adds information about any factor", ok, f"min gap {worst:.2e}")
    assert worst >= -1e-10


def test_classifier_estimates_respect_oracle():
    start = time.perf_counter()
    config = vu.EstimatorConfig(steps=600, learning_rate=0.01, seed=0)
    rng = np.random.default_rng(77)
    checked = 0
    worst_excess = -math.inf
    while checked < 20:
        system = vu.random_factor_system(rng)
        cols = sample_chain(system, n=2500, seed=500 + checked)
        if np.unique(cols["sensitive"]).size < 2:
            continue
        exact = vu.mutual_information(vu.compose_markov_chain(system), "repr", "sensitive")
        est = vu.fit_classifier(
            onehot(cols["repr"], system.cardinalities["repr"]),
            cols["sensitive"],
            config,
            n_classes=system.cardinalities["sensitive"],
        )
        worst_excess = max(worst_excess, est.estimate - exact)
        checked += 1

    toy = np.random.default_rng(3)
    labels = toy.integers(0, 2, size=4000)
    separable = vu.fit_classifier(onehot(labels, 2), labels, config).estimate
    independent = vu.fit_classifier(
        toy.standard_normal((4000, 4)), toy.integers(0, 2, size=4000), config
    ).estimate
    elapsed = time.perf_counter() - start

    ok = (
        worst_excess <= 0.05
        and abs(separable - math.log(2)) <= 0.05
        and abs(independent) <= 0.05
        and elapsed < 300
    )
    _line(
        "classifier estimates bounded by the exact oracle",
        ok,
        f"20 fixtures, max excess {worst_excess:.3f}, separable {separable:.3f}, "
        f"independent {independent:.3f}, {elapsed:.0f}s",
    )
    assert worst_excess <= 0.05
    assert separable == pytest.approx(math.log(2), abs=0.05)
    assert independent == pytest.approx(0.0, abs=0.05)
    assert elapsed < 300


def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    spec = vu.ModelSpec(input_dim=6, hidden=(8, 6), n_classes=2, split_index=1)
    model = vu.SplitModel(spec, np.random.default_rng(1))
    aux = vu.AuxiliaryHead.build(
        h_dim=model.h_dim,
        obs_dim=6,
        task_classes=2,
        sensitive_cards=(2,),
        hidden=(8,),
        rng=np.random.default_rng(2),
    )
    total = model.param_count + aux.param_count
    batch = (
        rng.standard_normal((16, 6)),
        rng.integers(0, 2, size=16),
        rng.integers(0, 2, size=(16, 1)),
    )
    coeffs = vu.derive_coefficients(1.0, 0.75, [0.5])
    report = vu.gradient_check(model, aux, batch, coeffs, n_params=total)
    ok = total <= 500 and report["checked"] == total and report["max_rel_error"] <= 1e-4
    _line(
        "analytic gradients match finite differences",
        ok,
        f"{total} params, max rel error {report['max_rel_error']:.2e}",
    )
    assert total <= 500
    assert report["checked"] == total
    assert report["max_rel_error"] <= 1e-4


def test_reference_run_unlearns_without_losing_utility():
    start = time.perf_counter()
    dataset = vu.generate_dataset(reference_generator_spec(), 4000)
    spec = vu.ModelSpec(
        input_dim=dataset.observation_dim, hidden=(16, 16), n_classes=2, split_index=1
    )
    b_model, _ = vu.train_baseline(dataset, spec, reference_train_config(gamma=0.0))
    u_model, _, _ = vu.train_unlearn(dataset, spec, reference_train_config(gamma=1.0))
    b_eff, u_eff = _attack(b_model, dataset), _attack(u_model, dataset)
    b_util, u_util = vu.measure_utility(b_model, dataset), vu.measure_utility(u_model, dataset)
    elapsed = time.perf_counter() - start
    ok = (
        b_eff >= 0.90
        and b_util >= 0.99
        and u_eff <= 0.60
        and u_util >= b_util - 0.05
        and elapsed < 300
    )
    _line(
        "reference run strips the attribute and keeps the task",
        ok,
        f"efficacy {b_eff:.3f} -> {u_eff:.3f}, utility {b_util:.3f} -> {u_util:.3f}, "
        f"{elapsed:.0f}s",
    )
    assert b_eff >= 0.90
    assert b_util >= 0.99
    assert u_eff <= 0.60
    assert u_util >= b_util - 0.05
    assert elapsed < 300


def test_gamma_sweep_monotone_and_ablation_parity():
    dataset = vu.generate_dataset(reference_generator_spec(), 4000)
    spec = vu.ModelSpec(
        input_dim=dataset.observation_dim, hidden=(16, 16), n_classes=2, split_index=1
    )
    sweep = []
    for gamma in (0.0, 0.5, 1.0):
        config = reference_train_config(gamma=gamma, seed=SWEEP_SEED)
        model, _, _ = vu.train_unlearn(dataset, spec, config)
        sweep.append(_attack(model, dataset))
    monotone = all(b <= a for a, b in zip(sweep, sweep[1:]))

    # same recipe with the roles of two attributes swapped between runs
    pair = vu.generate_dataset(reference_generator_spec(sensitive_classes=(2, 2)), 4000)
    pair_spec = vu.ModelSpec(
        input_dim=pair.observation_dim, hidden=(16, 16), n_classes=2, split_index=1
    )
    b_model, _ = vu.train_baseline(pair, pair_spec, reference_train_config(gamma=0.0))
    b_util = vu.measure_utility(b_model, pair)
    parity = []
    for target in (0, 1):
        gammas = tuple(1.0 if k == target else 0.0 for k in range(2))
        model, _, _ = vu.train_unlearn(
            pair, pair_spec, reference_train_config(gamma=gammas, epochs=80)
        )
        parity.append((_attack(model, pair, target), vu.measure_utility(model, pair)))
    parity_ok = all(eff <= 0.60 and util >= b_util - 0.05 for eff, util in parity)

    ok = monotone and parity_ok
    swept = ", ".join(f"{v:.3f}" for v in sweep)
    swapped = ", ".join(f"eff {e:.3f}/util {u:.3f}" for e, u in parity)
    _line(
        "efficacy monotone in gamma and ablation parity",
        ok,
        f"sweep [{swept}], swapped targets [{swapped}], baseline util {b_util:.3f}",
    )
    assert monotone, f"efficacy increased along the sweep: {sweep}"
    assert parity_ok, f"swapped-attribute runs out of bounds: {parity}"


def test_parallel_mode_equals_sequential(small_dataset):
    spec = vu.ModelSpec(
        input_dim=small_dataset.observation_dim, hidden=(16, 16), n_classes=2, split_index=1
    )
    base = dict(epochs=3, gamma=0.75, beta=0.75, seed=4, refresh_period=2)
    m_seq, aux_seq, _ = vu.train_unlearn(
        small_dataset, spec, vu.TrainConfig(mode="sequential", **base)
    )
    m_par, aux_par, _ = vu.train_unlearn(
        small_dataset, spec, vu.TrainConfig(mode="parallel", **base)
    )
    gap = max(
        np.abs(m_seq.front.get_flat() - m_par.front.get_flat()).max(),
        np.abs(m_seq.back.get_flat() - m_par.back.get_flat()).max(),
    )
    b_model, _ = vu.train_baseline(small_dataset, spec, vu.TrainConfig(epochs=1))
    delta = (vu.count_params(m_par) + aux_par.param_count) - vu.count_params(b_model)
    ok = gap <= 1e-10 and delta == aux_par.param_count
    _line(
        "parallel mode reproduces sequential training",
        ok,
        f"max weight gap {gap:.2e}, param delta {delta} == auxiliary {aux_par.param_count}",
    )
    assert gap <= 1e-10
    assert delta == aux_par.param_count
    assert aux_seq.param_count == aux_par.param_count


def test_identical_config_reproduces_artifacts_bit_for_bit(tmp_path):
    cfg = tmp_path / "run.cfg"
    ds = tmp_path / "ds"
    cfg.write_text(
        "\n".join(
            [
                f"dataset={ds}",
                "task_classes=2",
                "sensitive_classes=2",
                "nuisance_kind=uniform",
                "nuisance_dim=4",
                "embed_dim_per_factor=2",
                "mixing=orthogonal",
                "mixing_seed=3",
                "n=800",
                "hidden=8,8",
                "split_index=1",
                "epochs=10",
                "attacker_steps=400",
                "seed=9",
            ]
        )
        + "\n"
    )

    def run_all(out, force):
        argv = ["generate", "--config", str(cfg)] + (["--force"] if force else [])
        assert cli_main(argv) == 0
        data = (ds / "data.bin").read_bytes()
        for which in ("--baseline", "--unlearn"):
            assert cli_main(["train", which, "--config", str(cfg), "--out", str(out)]) == 0
        code = cli_main(
            [
                "evaluate", "--config", str(cfg), "--out", str(out),
                str(out / "unlearned.ckpt"), str(out / "baseline.ckpt"),
            ]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        return data, report

    data_a, report_a = run_all(tmp_path / "a", force=False)
    data_b, report_b = run_all(tmp_path / "b", force=True)

    same_data = data_a == data_b
    same_ckpts = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("baseline.ckpt", "unlearned.ckpt", "auxiliary.ckpt")
    )
    same_traces = all(
        vu.TrainTrace.from_jsonl(tmp_path / "a" / name).core_dicts()
        == vu.TrainTrace.from_jsonl(tmp_path / "b" / name).core_dicts()
        for name in ("baseline_trace.jsonl", "unlearned_trace.jsonl")
    )
    for report in (report_a, report_b):
        report.pop("train_seconds_per_epoch")
        report.pop("inference_seconds_per_epoch")
    same_reports = report_a == report_b

    ok = same_data and same_ckpts and same_traces and same_reports
    _line(
        "identical config and seed reproduce artifacts bit for bit",
        ok,
        f"dataset {same_data}, checkpoints {same_ckpts}, traces {same_traces}, "
        f"reports {same_reports}",
    )
    assert same_data
    assert same_ckpts
    assert same_traces
    assert same_reports
