"""Command-line pipeline: build-q, train, decode, eval, sweep, inspect.

Every run that produces a file also writes a JSON metadata file (by
default alongside the primary output) holding the fully resolved
configuration, the seed, the RNG identity, and sha256 checksums of all
inputs, which is enough to reproduce the output byte for byte.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .cca_model import CcaModel, load_model, save_model, train
from .decoder import (
    RNG_KIND,
    DecoderConfig,
    decode_batch,
    greedy_init,
    write_decode_output,
)
from .evaluate import (
    corpus_bleu,
    format_report,
    reference_self_bleu,
    unique_caption_count,
    write_report_kv,
    write_scatter,
)
from .ingest import (
    TextFeaturizer,
    build_training_pairs,
    load_captions,
    load_manifest,
    load_visual_features,
)
from .phrase_table import (
    estimate_context_table,
    extract_phrases,
    load_context_table,
    load_phrase_inventory,
    save_context_table,
)

log = logging.getLogger(__name__)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_metadata(args: argparse.Namespace, inputs: list[str],
                    outputs: list[str], default_anchor: str | None) -> None:
    meta_path = getattr(args, "meta_out", None)
    if meta_path is None:
        if default_anchor is None:
            log.info("no metadata file written (no --meta-out and no primary output)")
            return
        meta_path = default_anchor + ".meta.json"
    payload = {
        "tool": "ccadecode",
        "version": __version__,
        "command": args.command,
        "rng": RNG_KIND,
        "args": {k: v for k, v in sorted(vars(args).items())
                 if k not in ("func", "command") and not callable(v)},
        "inputs": {p: _sha256(p) for p in sorted(set(inputs))},
        "outputs": sorted(set(outputs)),
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _restrict_to_split(mapping: dict, args) -> dict:
    if args.manifest is None:
        return mapping
    ids = set(load_manifest(args.manifest).ids(args.split))
    return {k: v for k, v in mapping.items() if k in ids}


def _load_inventory(args, corpus) -> set:
    if args.inventory is not None:
        inventory = load_phrase_inventory(args.inventory)
        log.info("loaded %d inventory phrases from %s", len(inventory), args.inventory)
        return inventory
    inventory = extract_phrases(corpus, args.max_phrase_len)
    log.info("extracted %d phrases (max length %d)", len(inventory), args.max_phrase_len)
    return inventory


def cmd_build_q(args) -> int:
    captions = _restrict_to_split(load_captions(args.captions, strict=args.strict), args)
    corpus = [c for caps in captions.values() for c in caps]
    inventory = _load_inventory(args, corpus)
    table = estimate_context_table(corpus, inventory)
    save_context_table(table, args.output)
    print(f"inventory size: {len(inventory)}")
    print(f"q contexts: {table.num_contexts}")
    print(f"q domain size: {table.domain_size}")
    inputs = [args.captions] + ([args.inventory] if args.inventory else []) \
        + ([args.manifest] if args.manifest else [])
    _write_metadata(args, inputs, [args.output], args.output)
    return 0


def cmd_train(args) -> int:
    features = load_visual_features(args.features, args.feature_dim, strict=args.strict)
    captions = load_captions(args.captions, strict=args.strict)
    features = _restrict_to_split(features, args)
    captions = {k: v for k, v in captions.items() if k in features}
    corpus = [c for caps in captions.values() for c in caps]
    inventory = _load_inventory(args, corpus)
    featurizer = TextFeaturizer(inventory)
    pairs = build_training_pairs(features, captions, featurizer, strict=args.strict)
    model = train(pairs, args.m, args.seed)
    save_model(model, args.output)
    print(f"trained m={model.m} retained_dims="
          f"{model.retained_input_idx.size}x{model.retained_output_idx.size}")
    print("sigma: " + " ".join(f"{s:.6f}" for s in model.sigma))
    inputs = [args.features, args.captions] \
        + ([args.inventory] if args.inventory else []) \
        + ([args.manifest] if args.manifest else [])
    _write_metadata(args, inputs, [args.output], args.output)
    return 0


def _decoder_config(args) -> DecoderConfig:
    return DecoderConfig(
        eta=args.eta,
        start_temp=args.start_temp,
        cooling=args.tau,
        min_temp=args.min_temp,
        seed=args.seed,
        max_len=args.max_len,
        reverse_epsilon=args.reverse_epsilon,
        eta_inside_temperature=args.eta_inside_temperature,
        keep_trace=args.trace_out is not None,
    )


def _decode_shard(payload):
    model, shard, table, config, featurizer, init_pool, init = payload
    return decode_batch(model, shard, table, config, featurizer,
                        init_pool=init_pool, init=init)


def _run_decode(model, inputs, table, config, featurizer, init_pool, init, jobs):
    if jobs <= 1:
        return decode_batch(model, inputs, table, config, featurizer,
                            init_pool=init_pool, init=init)
    shards = [inputs[k::jobs] for k in range(jobs)]
    results = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        payloads = [(model, shard, table, config, featurizer, init_pool, init)
                    for shard in shards if shard]
        for part in pool.map(_decode_shard, payloads):
            results.extend(part)
    return results


def _collect_traces(model, inputs, table, config, featurizer, init_pool):
    """Sequential re-run with tracing enabled; same seeds, same outputs."""
    from .decoder import choose_init, decode, derive_scene_seed

    rows = []
    for scene_id, phi in sorted(inputs):
        scene_config = replace(config, seed=derive_scene_seed(config.seed, scene_id),
                               keep_trace=True)
        start = choose_init(init_pool, config.seed, scene_id)
        result = decode(model, phi, table, start, scene_config, featurizer)
        for ts in result.trace:
            rows.append((scene_id, ts.step, ts.temp, ts.score, ts.best_score,
                         int(ts.accepted)))
    return rows


def cmd_decode(args) -> int:
    model = load_model(args.model)
    features = load_visual_features(args.features, args.feature_dim, strict=args.strict)
    features = _restrict_to_split(features, args)
    table = load_context_table(args.q)
    inventory = load_phrase_inventory(args.inventory)
    featurizer = TextFeaturizer(inventory)
    if featurizer.dim != model.output_dim:
        raise ValueError(f"inventory size {featurizer.dim} does not match "
                         f"model output dim {model.output_dim}")
    config = _decoder_config(args)
    init_pool = None
    init = None
    if args.init_captions is not None:
        caption_map = load_captions(args.init_captions)
        init_pool = [c for caps in caption_map.values() for c in caps]
    else:
        init = greedy_init(table)
    inputs = sorted(features.items())
    results = _run_decode(model, inputs, table, config, featurizer,
                          init_pool, init, args.jobs)
    write_decode_output(results, args.output)
    print(f"decoded {len(results)} scenes -> {args.output}")
    outputs = [args.output]
    if args.trace_out is not None:
        if init_pool is None:
            raise ValueError("--trace-out requires --init-captions")
        rows = _collect_traces(model, inputs, table, config, featurizer, init_pool)
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write("scene_id\tstep\ttemp\tscore\tbest_score\taccepted\n")
            for row in rows:
                fh.write("\t".join(str(x) for x in row) + "\n")
        outputs.append(args.trace_out)
    in_files = [args.model, args.features, args.q, args.inventory] \
        + ([args.init_captions] if args.init_captions else []) \
        + ([args.manifest] if args.manifest else [])
    _write_metadata(args, in_files, outputs, args.output)
    return 0


def cmd_eval(args) -> int:
    refs = load_captions(args.refs)
    if args.self_bleu_batch is not None:
        report, skipped = reference_self_bleu(refs, args.self_bleu_batch)
        unique = None
        print(format_report(report))
        print(f"scenes skipped (no caption {args.self_bleu_batch}): {skipped}")
        extra = {"self_bleu_batch": args.self_bleu_batch, "scenes_skipped": skipped}
        hyps = None
    else:
        from .decoder import load_decode_output

        rows = load_decode_output(args.hyps)
        hyps = {sid: caption for sid, caption, _ in rows}
        report = corpus_bleu(hyps, refs)
        unique = unique_caption_count(hyps)
        print(format_report(report, unique=unique))
        extra = {}
    outputs = []
    if args.report_out is not None:
        write_report_kv(report, args.report_out, unique=unique, extra=extra)
        outputs.append(args.report_out)
    if args.scatter_out is not None:
        if hyps is None:
            raise ValueError("--scatter-out requires hypothesis mode, not self-BLEU")
        write_scatter(hyps, refs, args.scatter_out)
        outputs.append(args.scatter_out)
    in_files = [args.refs] + ([args.hyps] if args.hyps else [])
    _write_metadata(args, in_files, outputs,
                    args.report_out if args.report_out else None)
    return 0


def cmd_sweep(args) -> int:
    features = load_visual_features(args.features, args.feature_dim, strict=args.strict)
    captions = load_captions(args.captions, strict=args.strict)
    manifest = load_manifest(args.manifest)
    train_ids = set(manifest.ids("train"))
    dev_ids = set(manifest.ids("dev"))
    train_feats = {k: v for k, v in features.items() if k in train_ids}
    train_caps = {k: v for k, v in captions.items() if k in train_feats}
    dev_feats = sorted((k, v) for k, v in features.items() if k in dev_ids)
    dev_refs = {k: v for k, v in captions.items() if k in dev_ids}
    corpus = [c for caps in train_caps.values() for c in caps]
    inventory = _load_inventory(args, corpus)
    featurizer = TextFeaturizer(inventory)
    table = load_context_table(args.q) if args.q else \
        estimate_context_table(corpus, inventory)
    init_pool = corpus
    config = _decoder_config(args)

    ms = list(range(args.m_min, args.m_max + 1, args.m_step))
    rows: list[tuple[int, float]] = []
    for m in ms:
        try:
            pairs = build_training_pairs(train_feats, train_caps, featurizer,
                                         strict=args.strict)
            model = train(pairs, m, args.seed)
            results = _run_decode(model, dev_feats, table, config, featurizer,
                                  init_pool, None, args.jobs)
            hyps = {sid: caption for sid, caption, _ in results}
            report = corpus_bleu(hyps, dev_refs)
            rows.append((m, report.bleu))
            print(f"m={m}\tbleu={report.bleu:.3f}")
        except Exception as exc:
            if not args.continue_on_error:
                raise
            log.error("sweep m=%d failed: %s", m, exc)
            print(f"m={m}\tbleu=failed")
    if not rows:
        raise RuntimeError("sweep produced no successful rows")
    best_m, best_bleu = max(rows, key=lambda r: (r[1], -r[0]))
    print(f"best: m={best_m} bleu={best_bleu:.3f}")
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("m\tbleu\n")
        for m, b in rows:
            fh.write(f"{m}\t{b!r}\n")
    in_files = [args.features, args.captions, args.manifest] \
        + ([args.inventory] if args.inventory else []) \
        + ([args.q] if args.q else [])
    _write_metadata(args, in_files, [args.output], args.output)
    return 0


def cmd_inspect(args) -> int:
    if args.model is None and args.q is None:
        raise ValueError("nothing to inspect: give --model and/or --q")
    if args.model is not None:
        model = load_model(args.model)
        print(f"model: m={model.m} input_dim={model.input_dim} "
              f"output_dim={model.output_dim} "
              f"retained={model.retained_input_idx.size}x{model.retained_output_idx.size}")
        print("sigma: " + " ".join(f"{s:.6f}" for s in model.sigma))
    if args.q is not None:
        table = load_context_table(args.q)
        print(f"q: contexts={table.num_contexts} domain_size={table.domain_size} "
              f"phrases={len(table.phrases())}")
        triples = []
        for (left, right), entry in table.entries.items():
            for k, phrase in enumerate(entry.phrases):
                triples.append((-float(entry.probs[k]), left, " ".join(phrase), right,
                                int(entry.counts[k])))
        triples.sort()
        for negp, left, phrase, right, count in triples[:5]:
            print(f"  {left} | {phrase} | {right}  prob={-negp:.3f} count={count}")
    inputs = [p for p in (args.model, args.q) if p]
    _write_metadata(args, inputs, [], None)
    return 0


def _add_common_io(sub, features=True):
    if features:
        sub.add_argument("--features", required=True, help="feature TSV path")
        sub.add_argument("--feature-dim", type=int, required=True,
                         help="declared visual feature dimensionality")
    sub.add_argument("--manifest", help="split manifest TSV")
    sub.add_argument("--strict", action="store_true",
                     help="turn loader warnings into errors")


def _add_inventory(sub):
    sub.add_argument("--inventory", help="phrase inventory file (one phrase per line)")
    sub.add_argument("--max-phrase-len", type=int, default=5,
                     help="n-gram extraction bound when no inventory is given")


def _add_decoder_flags(sub):
    sub.add_argument("--eta", type=float, default=0.05, help="length-bonus weight")
    sub.add_argument("--start-temp", type=float, default=10_000.0)
    sub.add_argument("--tau", type=float, default=0.995, help="cooling factor")
    sub.add_argument("--min-temp", type=float, default=0.1)
    sub.add_argument("--max-len", type=int, default=50)
    sub.add_argument("--reverse-epsilon", type=float, default=0.0)
    sub.add_argument("--eta-inside-temperature", action=argparse.BooleanOptionalAction,
                     default=True,
                     help="anneal the full score (default) or only the cosine term")
    sub.add_argument("--jobs", type=int, default=1, help="parallel decode workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccadecode",
        description="canonical-correlation projections with an annealed "
                    "Metropolis-Hastings caption decoder")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("build-q", help="estimate the context phrase table")
    p.add_argument("--captions", required=True)
    _add_inventory(p)
    p.add_argument("--split", default="train", choices=("train", "dev", "test"))
    p.add_argument("--output", required=True)
    p.add_argument("--meta-out")
    _add_common_io(p, features=False)
    p.set_defaults(func=cmd_build_q)

    p = subs.add_parser("train", help="fit the projection pair")
    p.add_argument("--captions", required=True)
    _add_inventory(p)
    p.add_argument("--m", type=int, required=True, help="latent dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train", choices=("train", "dev", "test"))
    p.add_argument("--output", required=True)
    p.add_argument("--meta-out")
    _add_common_io(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("decode", help="decode captions for scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--q", required=True, help="context table file")
    p.add_argument("--inventory", required=True)
    p.add_argument("--init-captions",
                   help="caption TSV; inits are drawn uniformly from it per scene")
    p.add_argument("--init-greedy", action="store_true",
                   help="use the most frequent whole-sentence phrase as init")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--output", required=True)
    p.add_argument("--trace-out", help="per-step trace TSV")
    p.add_argument("--meta-out")
    _add_decoder_flags(p)
    _add_common_io(p)
    p.set_defaults(func=cmd_decode)

    p = subs.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--hyps", help="decode output TSV")
    p.add_argument("--refs", required=True, help="reference caption TSV")
    p.add_argument("--self-bleu-batch", type=int,
                   help="evaluate reference batch b against the other references")
    p.add_argument("--report-out", help="machine-readable key=value report")
    p.add_argument("--scatter-out", help="per-scene scene_id/score TSV")
    p.add_argument("--meta-out")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("sweep", help="train/decode/eval across latent dimensions")
    p.add_argument("--captions", required=True)
    _add_inventory(p)
    p.add_argument("--q", help="context table file (default: estimate from train split)")
    p.add_argument("--m-min", type=int, default=30)
    p.add_argument("--m-max", type=int, default=300)
    p.add_argument("--m-step", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--continue-on-error", action="store_true")
    p.add_argument("--output", required=True, help="TSV of (m, bleu) rows")
    p.add_argument("--meta-out")
    _add_decoder_flags(p)
    _add_common_io(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("inspect", help="summarize a model or context table file")
    p.add_argument("--model")
    p.add_argument("--q")
    p.add_argument("--meta-out")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "decode" and bool(args.init_captions) == bool(args.init_greedy):
        parser.error("decode requires exactly one of --init-captions / --init-greedy")
    if args.command == "eval" and args.hyps is None and args.self_bleu_batch is None:
        parser.error("eval requires --hyps unless --self-bleu-batch is given")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
