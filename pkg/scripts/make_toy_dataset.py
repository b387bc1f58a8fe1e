#!/usr/bin/env python3
"""Generate the bundled toy dataset under data/toy/ (deterministic).

Thirty synthetic scenes, each an (agent, object) pairing with a few
extra binary context features.  Captions are short templated sentences
about the pairing.  Feature layout (dim 40):

    0..2    agent one-hot (mike, jenny, bear)
    3..7    object one-hot (ball, kite, pizza, dog, hat)
    8..22   agent x object pair indicator
    23..29  random binary context features (seeded)
    30..39  reserved, never fired (exercises dropped-coordinate handling)
"""

import argparse
from pathlib import Path

import numpy as np

AGENTS = ["mike", "jenny", "bear"]
OBJECTS = ["ball", "kite", "pizza", "dog", "hat"]
FEATURE_DIM = 40
SEED = 20240611


def scene_features(a: int, o: int, rng: np.random.Generator) -> list[int]:
    fired = [a, 3 + o, 8 + a * len(OBJECTS) + o]
    fired += [23 + k for k in range(7) if rng.random() < 0.3]
    return sorted(fired)


def scene_captions(agent: str, obj: str, rng: np.random.Generator) -> list[str]:
    templates = [
        f"{agent} is holding the {obj}",
        f"{agent} is near the {obj}",
        f"the {obj} is next to {agent}",
        f"{agent} is looking at the {obj}",
    ]
    k = 2 + int(rng.integers(2))  # 2 or 3 captions
    picks = rng.choice(len(templates), size=k, replace=False)
    return [templates[int(p)] for p in sorted(picks)]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=str(Path(__file__).resolve().parent.parent
                                                 / "data" / "toy"))
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)

    scenes = []
    for replica in range(2):
        for a in range(len(AGENTS)):
            for o in range(len(OBJECTS)):
                scenes.append((a, o))
    feature_lines = []
    caption_lines = []
    ids = []
    for k, (a, o) in enumerate(scenes):
        sid = f"scene{k:03d}"
        ids.append(sid)
        feats = scene_features(a, o, rng)
        feature_lines.append(sid + "\t" + " ".join(f"{i}:1.0" for i in feats))
        for caption in scene_captions(AGENTS[a], OBJECTS[o], rng):
            caption_lines.append(f"{sid}\t{caption}")

    order = rng.permutation(len(ids))
    split_of = {}
    for rank, idx in enumerate(order):
        split_of[ids[idx]] = "train" if rank < 20 else ("dev" if rank < 25 else "test")
    manifest_lines = [f"{sid}\t{split_of[sid]}" for sid in ids]

    (out / "features.tsv").write_text("\n".join(feature_lines) + "\n")
    (out / "captions.tsv").write_text("\n".join(caption_lines) + "\n")
    (out / "manifest.tsv").write_text("\n".join(manifest_lines) + "\n")
    print(f"wrote {len(ids)} scenes, {len(caption_lines)} captions, "
          f"dim {FEATURE_DIM} -> {out}")


if __name__ == "__main__":
    main()
