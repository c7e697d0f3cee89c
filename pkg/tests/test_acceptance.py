"""Acceptance suite: one test per release criterion, stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Timing bounds are asserted where the criterion states one.
"""

import json
import math
import time

import numpy as np
import pytest

from colearn import (
    Anchor,
    BBox,
    ClassVocabulary,
    Dataset,
    DetectorNoise,
    Detection,
    GroundTruthBox,
    ImageInfo,
    ParamVector,
    SimConfig,
    align_dataset,
    assign_topk,
    average_precision,
    default_lexicon,
    ema_update,
    evaluate_dataset,
    fit_gmm,
    hungarian_assign,
    iou,
    matching_cost,
    parse_description,
    run_colearning_sim,
)
from colearn.align import Attributes, canonicalize_class
from colearn.cli import main as cli_main
from colearn.errors import DegenerateInputError

import oracles
from corpus import CORPUS
from test_geometry import IOU_VECTORS, random_boxes
from test_metrics import random_instance
from test_pseudo import fuzz_scores


def _pass(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def test_simulator_reproduces_alignment_direction():
    """Aligned mAP beats unaligned mAP at synonym-split 0.5, 5 seeds, <1 min."""
    start = time.perf_counter()
    for seed in (101, 202, 303, 404, 505):
        cfg = SimConfig(
            seed=seed,
            iterations=8,
            images_per_iteration=6,
            objects_min=1,
            objects_max=5,
            window_size=1024,
            holdout_images=12,
            noise=DetectorNoise(synonym_split=0.5),
        )
        report = run_colearning_sim(cfg)
        aligned = report.final_map("aligned")
        unaligned = report.final_map("unaligned")
        assert aligned > unaligned, f"seed {seed}: {aligned} vs {unaligned}"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    _pass(f"alignment direction on 5 seeds (aligned > unaligned) in {elapsed:.1f}s")


def test_geometry_vectors_and_fuzz():
    """>=20 hand-computed IoU cases at 1e-9; symmetry/self-IoU fuzz 1e4 pairs."""
    assert len(IOU_VECTORS) >= 20
    for a, b, expected in IOU_VECTORS:
        assert abs(iou(BBox(*a), BBox(*b)) - expected) <= 1e-9
    rng = np.random.default_rng(424242)
    pairs = list(zip(random_boxes(rng, 10_000), random_boxes(rng, 10_000)))
    for a, b in pairs:
        assert iou(a, b) == iou(b, a)
        assert abs(iou(a, a) - 1.0) <= 1e-12
        assert 0.0 <= iou(a, b) <= 1.0
    _pass(f"geometry: {len(IOU_VECTORS)} hand vectors at 1e-9 plus 10^4-pair fuzz")


def test_evaluator_matches_oracle():
    """500 seeded instances (<=10 detections) vs PR-table oracle at 1e-9, <10 s."""
    start = time.perf_counter()
    assert average_precision([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-9)
    rng = np.random.default_rng(55555)
    for _ in range(500):
        dataset, dets = random_instance(rng)
        assert len(dets) <= 10
        report = evaluate_dataset(dataset, dets)
        oracle_ap, oracle_map = oracles.evaluate(dataset, dets, 0.5)
        for name, want in oracle_ap.items():
            got = report.per_class_ap[name]
            if want is None:
                assert got is None
            else:
                assert abs(got - want) <= 1e-9
        assert abs(report.map_score - oracle_map) <= 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _pass(f"evaluator vs brute-force oracle on 500 instances in {elapsed:.1f}s")


def test_hungarian_matches_permutation_minimum():
    """Exact equality with exhaustive permutation minimum, n<=7, 200 seeds, <10 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(321)
    for trial in range(200):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        if trial % 4 == 0:
            matrix = rng.integers(0, 5, size=(n, m)).astype(float)
        else:
            matrix = rng.uniform(0, 10, size=(n, m))
        rows = [list(map(float, row)) for row in matrix]
        got = hungarian_assign(rows)
        want_vector, want_total = oracles.hungarian(rows)
        assert got.row_to_col == want_vector
        assert got.total_cost == want_total
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _pass(f"hungarian equals exhaustive optimum on 200 seeded matrices in {elapsed:.1f}s")


def test_topk_assignment_optimality_exhaustive():
    """No background anchor strictly cheaper than an assigned one, <=6x3 exhaustive."""
    rng = np.random.default_rng(999)
    checked = 0
    for n_anchors in range(1, 7):
        for n_labels in range(1, 4):
            for k in (1, 2, 3):
                for _ in range(8):
                    anchors = [
                        Anchor(
                            BBox(float(rng.uniform(0, 50)), float(rng.uniform(0, 50)), 10, 10),
                            float(rng.uniform(0, 1)),
                        )
                        for _ in range(n_anchors)
                    ]
                    targets = [
                        Detection(0, BBox(float(rng.uniform(0, 50)), float(rng.uniform(0, 50)), 10, 10), 0, 1.0)
                        for _ in range(n_labels)
                    ]
                    result = assign_topk(anchors, targets, k=k)
                    for li, tgt in enumerate(targets):
                        assigned = result.positives(li)
                        assert len(assigned) <= k
                        if not assigned:
                            continue
                        worst = max(matching_cost(anchors[ai], tgt) for ai in assigned)
                        for ai, lab in enumerate(result.labels):
                            if lab is None:
                                assert matching_cost(anchors[ai], tgt) >= worst - 1e-12
                    if any(len(result.positives(li)) < k for li in range(n_labels)):
                        assert all(lab is not None for lab in result.labels)
                    checked += 1
    _pass(f"top-k assignment optimality on {checked} exhaustive instances")


def test_gmm_monotonicity_and_recovery():
    """LL monotone within 1e-9 on 100 fuzzed inputs; 4-sigma means within 0.02; <5 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(777)
    fitted = 0
    for _ in range(100):
        scores = fuzz_scores(rng)
        try:
            model = fit_gmm(scores)
        except DegenerateInputError:
            continue
        fitted += 1
        assert (np.diff(model.ll_trace) >= -1e-9).all()
    assert fitted >= 90
    for seed in range(20):
        gen = np.random.default_rng(5000 + seed)
        sigma = float(gen.uniform(0.02, 0.05))
        mu1 = float(gen.uniform(0.10, 0.30))
        mu2 = mu1 + max(4 * sigma, float(gen.uniform(0.30, 0.50)))
        data = np.clip(
            np.concatenate([gen.normal(mu1, sigma, 500), gen.normal(mu2, sigma, 500)]),
            0, 1,
        )
        model = fit_gmm(data)
        assert abs(model.means[0] - mu1) <= 0.02
        assert abs(model.means[1] - mu2) <= 0.02
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    _pass(f"EM monotonicity (100 inputs) and mean recovery (20 seeds) in {elapsed:.1f}s")


def test_threshold_dynamics_stationary_teacher():
    """|delta smoothed threshold| < 0.01 over the last 50 of 200 iterations."""
    cfg = SimConfig(seed=11, iterations=200, ema_momentum=1.0)
    report = run_colearning_sim(cfg)
    tail = report.records[-50:]
    checked = 0
    for name in cfg.classes:
        if min(r.window_sizes[name] for r in tail) < 100:
            continue
        checked += 1
        series = [r.thresholds[name] for r in tail]
        deltas = [abs(b - a) for a, b in zip(series, series[1:])]
        assert max(deltas) < 0.01, f"{name}: max delta {max(deltas):.4f}"
    assert checked >= 1
    _pass(f"threshold stability over final 50 iterations for {checked} classes")


def test_annotation_alignment_corpus():
    """>=50 descriptions map exactly; idempotence; color invariance."""
    lexicon = default_lexicon()
    assert len(CORPUS) >= 50
    texts = {text for text, *_ in CORPUS}
    assert "The red van is heading forward." in texts
    assert "A van is moving straight" in texts
    for text, color, vtype, motion, label in CORPUS:
        parsed = parse_description(text, lexicon)
        assert (parsed.color, parsed.vehicle_type, parsed.motion) == (color, vtype, motion)
        assert lexicon.vocabulary.name(parsed.canonical_class) == label

    images = (ImageInfo(0, 5000, 5000),)
    gts = tuple(
        GroundTruthBox(0, BBox(11.0 * i, 7.0 * i, 10, 10), 0, text)
        for i, (text, *_rest) in enumerate(CORPUS)
    )
    dataset = Dataset(lexicon.vocabulary, images, gts)
    once = align_dataset(dataset, lexicon)
    twice = align_dataset(once.dataset, lexicon)
    assert twice.dataset == once.dataset
    assert twice.issues == once.issues

    for vtype in set(lexicon.type_terms.values()):
        base = canonicalize_class(Attributes(None, vtype, None), lexicon)
        for color in set(lexicon.color_terms.values()):
            assert canonicalize_class(Attributes(color, vtype, None), lexicon) == base
    _pass(f"annotation alignment corpus of {len(CORPUS)} descriptions, idempotent, color-invariant")


def test_ema_convergence_bound():
    """|teacher_n - student| <= m^n * |teacher_0 - student| at m=0.9, n=100, 1e-9."""
    teacher = ParamVector(("a", "b"), (10.0, -4.0))
    student = ParamVector(("a", "b"), (1.0, 2.0))
    gaps = [abs(t - s) for t, s in zip(teacher.values, student.values)]
    current = teacher
    for n in range(1, 101):
        current = ema_update(current, student, 0.9)
        for gap0, t, s in zip(gaps, current.values, student.values):
            assert abs(t - s) <= 0.9 ** n * gap0 + 1e-9
    assert ema_update(teacher, student, 1.0).values == teacher.values
    assert ema_update(teacher, student, 0.0).values == student.values
    _pass("EMA convergence bound (m=0.9, n=100) and identity cases")


def test_simulate_cli_byte_identical(tmp_path):
    """`simulate` twice with the same config and seed: byte-identical reports."""
    config = tmp_path / "sim.toml"
    config.write_text(
        "iterations = 4\nimages_per_iteration = 3\n"
        "[loop]\nwindow_size = 256\nholdout_images = 5\n",
        encoding="utf-8",
    )
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert cli_main(["simulate", "--config", str(config), "--seed", "42", "--out", str(out1)]) == 0
    assert cli_main(["simulate", "--config", str(config), "--seed", "42", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    json.loads(out1.read_text())  # well-formed
    _pass("simulate re-run is byte-identical")
