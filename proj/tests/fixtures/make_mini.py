"""Generates the mini fixture dataset (24 designs over 2 kernels), its
embedding file, and the expected nn-baseline score used by the tests.

Run from this directory: python3 make_mini.py (add --expected to only
recompute the expected scores).
The QoR values come from a small analytic model of the pragmas; they are
synthetic and only need to be plausible and deterministic.
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
OUT = HERE / "mini"

KERNELS = {
    "spmv_ellpack": {
        "slots": {
            "__PIPE__L0": ["off", "pipeline", "flatten"],
            "__TILE__L0": [1, 2, 4],
            "__PARA__L0": [1, 2, 4, 8],
            "__PARA__L1": [1, 2, 5, 10],
        },
        "outer": 494,
        "inner": 10,
    },
    "stencil2d": {
        "slots": {
            "__PIPE__L0": ["off", "pipeline"],
            "__TILE__L0": [1, 2],
            "__PIPE__L1": ["off", "pipeline", "flatten"],
            "__TILE__L1": [1, 2],
            "__PARA__L2": [1, 3],
            "__PARA__L3": [1, 3],
        },
        "outer": 126 * 62,
        "inner": 9,
    },
}

PER_KERNEL = 12
EMBED_DIM = 8


def qor(kernel, pragmas):
    kdef = KERNELS[kernel]
    para = 1
    for slot, v in pragmas.items():
        if slot.startswith("__PARA__"):
            para *= v
    tile = 1
    for slot, v in pragmas.items():
        if slot.startswith("__TILE__"):
            tile *= v
    pipes = [v for s, v in pragmas.items() if s.startswith("__PIPE__")]
    pipelined = any(p != "off" for p in pipes)
    flattened = any(p == "flatten" for p in pipes)

    lut = 0.05 * para * (2.0 if pipelined else 1.0) * (1.3 if flattened else 1.0)
    if lut > 0.8:
        return {"valid": False}
    ii = 1.0 if pipelined else 4.0
    latency = kdef["outer"] * (kdef["inner"] * ii / para + 3.0) / (1.5 if flattened else 1.0) + 20 * tile
    return {
        "valid": True,
        "latency_cycles": float(round(latency)),
        "util_bram": round(0.02 * tile + 0.01, 6),
        "util_lut": round(lut, 6),
        "util_ff": round(0.6 * lut + 0.01, 6),
        "util_dsp": round(0.01 * para, 6),
    }


def embedding(kernel, pragmas, rng):
    k = 0.0 if kernel == "spmv_ellpack" else 3.0
    vals = []
    for slot in sorted(pragmas):
        v = pragmas[slot]
        if isinstance(v, str):
            vals.append({"off": 0.0, "pipeline": 1.0, "flatten": 2.0}[v])
        else:
            vals.append(math.log2(v))
    vals = (vals + [0.0] * EMBED_DIM)[: EMBED_DIM - 1]
    return [k] + [round(x + rng.uniform(-0.05, 0.05), 6) for x in vals]


def main():
    rng = random.Random(7)
    records, embeds = [], []
    for kernel, kdef in KERNELS.items():
        seen = set()
        while len(seen) < PER_KERNEL:
            pragmas = {s: rng.choice(choices) for s, choices in kdef["slots"].items()}
            key = tuple(sorted(pragmas.items()))
            if key in seen:
                continue
            seen.add(key)
            design_id = f"{kernel}-{len(seen):02d}"
            records.append({"design_id": design_id, "kernel": kernel, "pragmas": pragmas,
                            "targets": qor(kernel, pragmas)})
            embeds.append((design_id, embedding(kernel, pragmas, rng)))

    OUT.mkdir(exist_ok=True)
    with open(OUT / "mini.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    with open(OUT / "mini.emb", "w") as f:
        for design_id, v in embeds:
            f.write(design_id + "," + ",".join(repr(x) for x in v) + "\n")




# ---------------------------------------------------------------------------
# Expected scores of the leave-one-out inverse-distance kNN baseline, computed
# here independently of the C++ code.

def load_embeddings(path):
    out = {}
    for line in open(path):
        parts = line.strip().split(",")
        if parts[0]:
            out[parts[0]] = [float(x) for x in parts[1:]]
    return out


def baseline_predictions(records, emb, k):
    preds = {}
    for r in records:
        q = emb[r["design_id"]]
        cands = []
        for o in records:
            if o["design_id"] == r["design_id"]:
                continue
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(q, emb[o["design_id"]])))
            cands.append((d, o["design_id"], o))
        cands.sort(key=lambda c: (c[0], c[1]))
        near = cands[:k]
        weights = [1.0 / (d + 1e-9) for d, _, _ in near]
        total = sum(weights)
        valid_w = sum(w for w, (_, _, o) in zip(weights, near) if o["targets"]["valid"])
        pred = {"valid": valid_w >= total - valid_w}
        for key in NUMERIC:
            pred[key] = sum(w * o["targets"].get(key, 0.0) for w, (_, _, o) in zip(weights, near)) / total
        preds[r["design_id"]] = pred
    return preds


NUMERIC = ["latency_cycles", "util_bram", "util_lut", "util_ff", "util_dsp"]


def score(records, preds, transform):
    cols = {"validity": [], **{k: [] for k in NUMERIC}}
    for r in records:
        t, p = r["targets"], preds[r["design_id"]]
        cols["validity"].append((float(p["valid"]) - float(t["valid"])) ** 2)
        for key in NUMERIC:
            a, b = p[key], t.get(key, 0.0)
            if key == "latency_cycles" and transform == "log2p1":
                a, b = math.log2(1 + a), math.log2(1 + b)
            cols[key].append((a - b) ** 2)
    per = {k: math.sqrt(sum(v) / len(v)) for k, v in cols.items()}
    return {"per_target_rmse": per, "aggregate": sum(per.values()) / 6}


def expected():
    records = [json.loads(l) for l in open(OUT / "mini.jsonl")]
    emb = load_embeddings(OUT / "mini.emb")
    out = {}
    for k in (5, 8):
        preds = baseline_predictions(records, emb, k)
        for transform in ("log2p1", "identity"):
            out[f"k{k}_{transform}"] = score(records, preds, transform)
    with open(OUT / "expected_baseline_scores.json", "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    import sys

    if "--expected" not in sys.argv:
        main()
    expected()
