"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""

import subprocess
import sys
import time

import numpy as np

from conftest import disk_image, random_mask, save_image, save_tensor
from oracles import (
    asymmetry_loops,
    border_band_loops,
    class_prob,
    gradcampp_loops,
    mec_brute,
    region_mean_loops,
)

from lesionlens.abcde import analyze_abcde, asymmetry_score, min_enclosing_circle, risk_stratify
from lesionlens.attention import AttentionMap, ConvDump, border_alignment, gradcampp, lesion_alignment
from lesionlens.fastcav import ConceptVector, LinearHead, concept_sensitivity, save_cav, train_cav
from lesionlens.imgio import write_tensor
from lesionlens.pipeline import derive_seed
from lesionlens.segmentation import segment_lesion
from lesionlens.uncertainty import UncertaintyReport, decompose, is_reliable


def verdict(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_1_risk_stratification():
    start = time.perf_counter()
    first = risk_stratify(0.026, 0.116, 6, 213)
    second = risk_stratify(0.12, 0.26, 6, 409)
    elapsed = (time.perf_counter() - start) / 2
    ok = all(flags == {"C", "D"} and risk == "medium" for flags, risk in (first, second)) and elapsed < 1e-3
    verdict(1, ok, f"{sorted(first[0])} {first[1]}, {sorted(second[0])} {second[1]}, {elapsed * 1e6:.0f} us/call")


def test_criterion_2_reliability_flags():
    start = time.perf_counter()
    low, high = is_reliable(0.088, 0.5), is_reliable(0.76, 0.5)
    elapsed = (time.perf_counter() - start) / 2
    flag = lambda ok: "RELIABLE" if ok else "UNCERTAIN"  # noqa: E731
    ok = flag(low) == "RELIABLE" and flag(high) == "UNCERTAIN" and elapsed < 1e-3
    rep = UncertaintyReport(0.76, 0.0, 0.75, 0.01, (1.0,), 0, 1.0, high)
    ok = ok and rep.flag == "UNCERTAIN"
    verdict(2, ok, f"0.088 -> {flag(low)}, 0.76 -> {flag(high)}, {elapsed * 1e6:.0f} us/call")


def _random_simplex_matrix(rng):
    t, c = int(rng.integers(2, 21)), int(rng.integers(2, 11))
    kind = rng.integers(3)
    if kind == 0:
        rows = np.eye(c)[rng.integers(c, size=t)]  # one-hot passes, the extreme-disagreement corner
    else:
        rows = rng.dirichlet(np.full(c, (0.05, 5.0)[kind - 1]), size=t)
    return rows


def test_criterion_3_uncertainty_properties():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst_gap, worst_epi, bad = np.inf, 0.0, 0
    for _ in range(1000):
        m = _random_simplex_matrix(rng)
        rep = decompose(m)
        worst_gap = min(worst_gap, rep.predictive - rep.aleatoric)
        worst_epi = max(worst_epi, rep.epistemic)
        if not (0 <= rep.predictive <= 1 and 0 <= rep.aleatoric <= 1 and 0 <= rep.mutual_information + 1e-9):
            bad += 1
        perm = rng.permutation(m.shape[1])
        moved = decompose(m[:, perm])
        same = all(
            abs(getattr(moved, k) - getattr(rep, k)) <= 1e-12 for k in ("predictive", "aleatoric", "epistemic", "confidence")
        )
        mean = np.asarray(rep.mean_prediction)
        same = same and np.allclose(moved.mean_prediction, mean[perm], atol=1e-15, rtol=0)
        same = same and mean[perm[moved.predicted_class]] == rep.confidence
        bad += not same
    elapsed = time.perf_counter() - start
    ok = worst_gap >= -1e-9 and worst_epi <= 0.25 and bad == 0 and elapsed < 5
    verdict(3, ok, f"min gap {worst_gap:.3g}, max epistemic {worst_epi:.4f}, {bad} violations, {elapsed:.2f} s")


def test_criterion_4_alignment_oracle():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        mask = random_mask(rng, 16, smooth=rng.choice([None, 1.5]))
        heat = AttentionMap(rng.random((16, 16)))
        grid, hv = mask.bits.tolist(), heat.values.tolist()
        worst = max(
            worst,
            abs(lesion_alignment(heat, mask) - region_mean_loops(hv, grid)),
            abs(border_alignment(heat, mask) - region_mean_loops(hv, border_band_loops(grid, 5))),
        )
    elapsed = time.perf_counter() - start
    verdict(4, worst <= 1e-9 and elapsed < 5, f"max error {worst:.3g}, {elapsed:.2f} s")


def test_criterion_5_gradcampp_oracle():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        k, h, w = int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 9))
        a, g = rng.normal(size=(k, h, w)), rng.normal(size=(k, h, w))
        ref = np.array(gradcampp_loops(a.tolist(), g.tolist()))
        worst = max(worst, float(np.abs(gradcampp(ConvDump(a, g)) - ref).max()))
    hand = gradcampp(ConvDump(np.ones((1, 2, 2)), np.ones((1, 2, 2))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and np.allclose(hand, 2 / 3, atol=1e-6, rtol=0) and elapsed < 5
    verdict(5, ok, f"max error {worst:.3g}, uniform K=1 value {hand[0, 0]:.9f}, {elapsed:.2f} s")


def test_criterion_6_geometry_oracles():
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        pts = rng.random((30, 2)) * 100
        if i % 4 == 0:
            pts = np.round(pts / 10)  # lattice points, many cocircular and collinear ties
        _, r = min_enclosing_circle(pts.tolist(), seed=i)
        worst = max(worst, abs(r - mec_brute(pts.tolist())[1]))
    mismatches = 0
    for _ in range(100):
        mask = random_mask(rng, 16, smooth=rng.choice([None, 1.5]))
        mismatches += asymmetry_score(mask) != asymmetry_loops(mask.bits.tolist())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and mismatches == 0 and elapsed < 30
    verdict(6, ok, f"max radius error {worst:.3g}, {mismatches} asymmetry mismatches, {elapsed:.2f} s")


def test_criterion_7_synthetic_lesion():
    img, truth = disk_image(256, 40)
    start = time.perf_counter()
    mask = segment_lesion(img)
    rep = analyze_abcde(img, mask, seed=derive_seed(42, "kmeans"), welzl_seed=derive_seed(42, "welzl"))
    elapsed = time.perf_counter() - start
    iou = (mask.bits & truth).sum() / (mask.bits | truth).sum()
    ok = (
        iou >= 0.95
        and rep.asymmetry <= 0.05
        and rep.border <= 0.15
        and abs(rep.diameter_px - 80) <= 2
        and rep.risk == "low"
        and elapsed < 2
    )
    detail = (
        f"IoU {iou:.4f}, asymmetry {rep.asymmetry:.4f}, border {rep.border:.4f}, "
        f"diameter {rep.diameter_px:.2f}, risk {rep.risk}, {elapsed:.2f} s"
    )
    verdict(7, ok, detail)


def test_criterion_8_cav_recovery():
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    pos = rng.normal((3.0, 0.0), 0.5, (100, 2))
    neg = rng.normal((-3.0, 0.0), 0.5, (100, 2))
    cav = train_cav(pos, neg)
    cosine = float(cav.v @ np.array([1.0, 0.0]))
    h, worst = 1e-4, 0.0
    for _ in range(100):
        c, f_dim = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        W, b = rng.normal(size=(c, f_dim)), rng.normal(size=c)
        v = ConceptVector("x", rng.normal(size=f_dim), 1.0, 0)
        f = rng.normal(size=f_dim)
        cls = int(rng.integers(c))
        fd = (class_prob(W.tolist(), b.tolist(), (f + h * v.v).tolist(), cls)
              - class_prob(W.tolist(), b.tolist(), (f - h * v.v).tolist(), cls)) / (2 * h)
        s = concept_sensitivity(f, LinearHead(W, b), cls, v)
        worst = max(worst, abs(s - fd) / max(abs(fd), 1e-12))
    elapsed = time.perf_counter() - start
    ok = cosine >= 0.95 and cav.train_accuracy >= 0.95 and worst <= 1e-4 and elapsed < 10
    verdict(8, ok, f"cosine {cosine:.4f}, accuracy {cav.train_accuracy:.3f}, max rel error {worst:.3g}, {elapsed:.2f} s")


def test_criterion_9_deterministic_report(tmp_path):
    rng = np.random.default_rng(9)
    img, _ = disk_image(96, 24)
    image = save_image(tmp_path, "lesion.ppm", img.to_array())
    acts = save_tensor(tmp_path, "acts.mnt", np.abs(rng.normal(size=(4, 6, 6))))
    grads = save_tensor(tmp_path, "grads.mnt", rng.normal(size=(4, 6, 6)))
    mc = save_tensor(tmp_path, "mc.mnt", rng.dirichlet(np.ones(8), size=10))
    feats = save_tensor(tmp_path, "feats.mnt", rng.normal(size=(6, 3)))
    write_tensor(LinearHead(rng.normal(size=(8, 3)), rng.normal(size=8)).to_tensor(), tmp_path / "head.mnt")
    save_cav(train_cav(rng.normal(1, 1, (20, 3)), rng.normal(-1, 1, (20, 3)), concept_name="c"), tmp_path / "c")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.json"
        cmd = [sys.executable, "-m", "lesionlens.cli", "analyze", "--image", image, "--activations", acts,
               "--gradients", grads, "--mc-samples", mc, "--features", feats, "--head", str(tmp_path / "head.mnt"),
               "--cav", str(tmp_path / "c.mnt"), "--seed", "42", "--out", str(out)]
        proc = subprocess.run(cmd, capture_output=True, text=True, check=False)
        outputs.append((proc.returncode, out.read_bytes() if out.exists() else b""))
    ok = outputs[0][0] == outputs[1][0] == 0 and outputs[0][1] == outputs[1][1] and len(outputs[0][1]) > 0
    verdict(9, ok, f"exit codes {outputs[0][0]}/{outputs[1][0]}, {len(outputs[0][1])} bytes, identical={outputs[0][1] == outputs[1][1]}")
