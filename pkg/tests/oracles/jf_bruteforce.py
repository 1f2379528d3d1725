"""Per-pixel reference for the J/F evaluation on a small hand-drawn fixture.

Pure Python, no numpy/scipy. Run as a script to print the frozen values:

    python tests/oracles/jf_bruteforce.py > tests/data/jf_fixture_expected.txt
"""

import itertools
import math

TOLERANCE = 1

# 4 frames, 10x8; digits are instance ids, '.' is background
GT = [
    [
        "..........",
        ".111......",
        ".111......",
        ".111...22.",
        ".......22.",
        ".......22.",
        "..........",
        "..........",
    ],
    [
        "..........",
        "..111.....",
        "..111.....",
        "..111..22.",
        "......222.",
        "......22..",
        "..........",
        "..........",
    ],
    [
        "..........",
        "...111....",
        "...111....",
        "...111....",
        "......22..",
        "......22..",
        "......22..",
        "..........",
    ],
    [
        "..........",
        "....111...",
        "....111...",
        "....111...",
        ".....22...",
        ".....22...",
        ".....22...",
        "..........",
    ],
]

PRED = [
    [
        "..........",
        ".777......",
        ".777......",
        ".777...33.",
        ".......33.",
        ".......3..",
        "..........",
        "..........",
    ],
    [
        "..........",
        "..777.....",
        "..7777....",
        "..777..33.",
        "......333.",
        "..........",
        "..........",
        "..........",
    ],
    [
        "..........",
        "..........",
        "...77.....",
        "...77.....",
        "......333.",
        "......333.",
        "..........",
        "..........",
    ],
    [
        "..........",
        ".....77...",
        "....777...",
        "..........",
        "..........",
        ".....33...",
        ".....33...",
        ".....33...",
    ],
]


def parse(grid):
    return [[0 if ch == "." else int(ch) for ch in row] for row in grid]


def pixels(labels, iid):
    return {(r, c) for r, row in enumerate(labels) for c, v in enumerate(row) if v == iid}


def boundary(pix, height, width):
    out = set()
    for r, c in pix:
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if not (0 <= rr < height and 0 <= cc < width) or (rr, cc) not in pix:
                out.add((r, c))
                break
    return out


def j_measure(p, g):
    union = p | g
    return 1.0 if not union else len(p & g) / len(union)


def f_measure(p, g, height, width, tol):
    bp, bg = boundary(p, height, width), boundary(g, height, width)
    if not bp and not bg:
        return 1.0
    if not bp or not bg:
        return 0.0

    def near(a, pts):
        return any(math.hypot(a[0] - b[0], a[1] - b[1]) <= tol for b in pts)

    precision = sum(near(a, bg) for a in bp) / len(bp)
    recall = sum(near(b, bp) for b in bg) / len(bg)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def quarters(values):
    n = len(values)
    sizes = [n // 4 + (1 if i < n % 4 else 0) for i in range(4)]
    out, pos = [], 0
    for s in sizes:
        out.append(values[pos : pos + s])
        pos += s
    return [q for q in out if q]


def stats(values):
    mean = sum(values) / len(values)
    recall = sum(1 for v in values if v > 0.5) / len(values)
    qs = quarters(values)
    decay = sum(qs[0]) / len(qs[0]) - sum(qs[-1]) / len(qs[-1])
    return mean, recall, decay


def evaluate(pred_frames, gt_frames, tol=TOLERANCE):
    height, width = len(gt_frames[0]), len(gt_frames[0][0])
    gt_ids = sorted({v for f in gt_frames for row in f for v in row if v})
    pred_ids = sorted({v for f in pred_frames for row in f for v in row if v})
    series = {}
    for p in pred_ids:
        for g in gt_ids:
            js, fs = [], []
            for pf, gf in zip(pred_frames, gt_frames):
                gp = pixels(gf, g)
                if not gp:
                    continue
                pp = pixels(pf, p)
                js.append(j_measure(pp, gp))
                fs.append(f_measure(pp, gp, height, width, tol))
            series[(p, g)] = (js, fs)

    def pair_score(p, g):
        js, fs = series[(p, g)]
        return (sum(js) / len(js) + sum(fs) / len(fs)) / 2

    best, best_total = {}, -1.0
    slots = pred_ids + [None] * len(gt_ids)
    for perm in itertools.permutations(slots, len(gt_ids)):
        total = sum(pair_score(p, g) for p, g in zip(perm, gt_ids) if p is not None)
        if total > best_total + 1e-15:
            best_total, best = total, dict(zip(gt_ids, perm))

    rows = []
    for g in gt_ids:
        p = best[g]
        life = sum(1 for gf in gt_frames if pixels(gf, g))
        js, fs = series[(p, g)] if p is not None else ([0.0] * life, [0.0] * life)
        rows.append(stats(js) + stats(fs))
    keys = ("j_mean", "j_recall", "j_decay", "f_mean", "f_recall", "f_decay")
    report = {k: sum(r[i] for r in rows) / len(rows) for i, k in enumerate(keys)}
    report["global_mean"] = (report["j_mean"] + report["f_mean"]) / 2
    return report


if __name__ == "__main__":
    for tol in (0, 1):
        result = evaluate([parse(f) for f in PRED], [parse(f) for f in GT], tol)
        for key in ("global_mean", "j_mean", "j_recall", "j_decay", "f_mean", "f_recall", "f_decay"):
            print(f"tol{tol}.{key}: {result[key]!r}")
