"""Command-line entry points wiring the pipeline end to end.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 undefined
metric. A fixed root seed makes synth -> train -> eval bit-reproducible.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluate, fileio
from .config import RunConfig, derive_seed, load_config
from .corpus import Waveform, build_corpus, load_split
from .errors import ConfigError, IoError, UndefinedMetricError
from .mixup import materialize_eval_set
from .model import Model, ModelConfig
from .training import VARIANTS, train

logger = logging.getLogger(__name__)


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="root seed override")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="localdeg",
        description="Local speech degradation detection and identification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic parallel corpus")
    _add_common(p)
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--ood", action="store_true",
                   help="hold out degradation kinds for a test-only track")
    p.add_argument("--rescore-with", default=None, metavar="CHECKPOINT",
                   help="replace oracle frame scores with a trained model's estimates")

    p = sub.add_parser("train", help="train one model variant")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    p.add_argument("--out", required=True, help="run output directory")

    p = sub.add_parser("eval-detect", help="detection metrics on the test set")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embedding", default=None,
                   choices=["x", "zmos", "zscl", "ztilde"],
                   help="restrict to one embedding kind (default: all)")
    p.add_argument("--out", required=True, help="report path (JSON)")

    p = sub.add_parser("eval-embed", help="embedding verification/clustering metrics")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--detection", default="oracle",
                   help='"oracle" or a checkpoint path used for detection')
    p.add_argument("--out", required=True, help="report path (JSON)")

    p = sub.add_parser("export-trace", help="per-frame score trace as CSV")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--utterance", required=True, help="test mix-up utterance id")
    p.add_argument("--embedding", default="zscl",
                   choices=["x", "zmos", "zscl", "ztilde"])
    p.add_argument("--out", required=True)
    return parser


def _load_model(path):
    model = Model.load(path)
    config, _ = fileio.read_checkpoint(path)
    return model, config.get("variant", "unknown"), config.get("config_digest", "")


def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.seed)
    if args.ood and not cfg.corpus.ood_holdout:
        cfg.corpus.ood_holdout = tuple(cfg.corpus.kinds[-2:])
    out_dir = Path(args.out)
    build_corpus(cfg.corpus, out_dir)
    if args.rescore_with:
        model, _, _ = _load_model(args.rescore_with)
        rescore_corpus(out_dir, model)
    meta = evaluate.read_meta(out_dir)
    for split in ("val", "test"):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"mixeval/{split}"))
        materialize_eval_set(
            load_split(out_dir, split, cfg.corpus.vad_theta),
            out_dir / "mixeval" / split,
            rng,
            meta["clean_label"],
        )
    print(f"corpus ready at {out_dir} (digest {cfg.digest()})")
    return 0


def rescore_corpus(corpus_dir, model: Model):
    """Bootstrap mode: overwrite oracle frame scores with model estimates."""
    from .corpus import sidecar_path

    corpus_dir = Path(corpus_dir)
    records = fileio.read_manifest(corpus_dir / "manifest.jsonl")
    for rec in records:
        for side, y_key in (("ref_path", "y_ref"), ("deg_path", "y_deg")):
            wav = fileio.read_wav(corpus_dir / rec[side])
            out = evaluate.forward_utterances(model, [Waveform(wav)])[0]
            q = np.clip(out.q_hat.data, 1.0, 5.0)
            fileio.write_frame_scores(corpus_dir / sidecar_path(rec[side]), q)
            rec[y_key] = float(q.mean())
    fileio.write_manifest(corpus_dir / "manifest.jsonl", records)
    logger.info("rescored %d utterances with model estimates", len(records))


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    utterances = load_split(args.corpus, "train", cfg.corpus.vad_theta)
    if not utterances:
        raise IoError(f"no training utterances in {args.corpus}")
    meta = evaluate.read_meta(args.corpus)
    model = Model(cfg.model, seed=derive_seed(cfg.seed, f"init/{args.variant}"))
    train(
        model, utterances, args.variant, cfg.train, cfg.loss,
        clean_class=meta["clean_label"],
        log_path=out_dir / f"train_{args.variant}.csv",
    )
    ckpt = out_dir / f"model_{args.variant}.ldm"
    blobs = [(name, t.data) for name, t in model.parameters()]
    blobs += [(f"state.{name}", arr) for name, arr in model.states()]
    fileio.write_checkpoint(
        ckpt,
        {"model": cfg.model.to_dict(), "variant": args.variant,
         "config_digest": cfg.digest()},
        blobs,
    )
    print(f"checkpoint written to {ckpt}")
    return 0


def cmd_eval_detect(args) -> int:
    cfg = load_config(args.config, args.seed)
    model, variant, _ = _load_model(args.checkpoint)
    kinds = [args.embedding] if args.embedding else None
    report = evaluate.detection_report(model, args.corpus, cfg, variant, kinds)
    fileio.write_report(args.out, report)
    print(f"detection report written to {args.out}")
    return 0


def cmd_eval_embed(args) -> int:
    cfg = load_config(args.config, args.seed)
    model, variant, digest = _load_model(args.checkpoint)
    det_model, det_variant = None, ""
    if args.detection != "oracle":
        det_model, det_variant, det_digest = _load_model(args.detection)
        if det_digest and digest and det_digest != digest:
            logger.warning(
                "config digests differ between embed (%s) and detect (%s) checkpoints",
                digest, det_digest,
            )
    report = evaluate.embedding_report(
        model, args.corpus, cfg, variant,
        detection="oracle" if args.detection == "oracle" else det_variant,
        det_model=det_model, det_variant=det_variant,
    )
    fileio.write_report(args.out, report)
    print(f"embedding report written to {args.out}")
    return 0


def cmd_export_trace(args) -> int:
    cfg = load_config(args.config, args.seed)
    model, _, _ = _load_model(args.checkpoint)
    n = evaluate.export_trace(
        model, args.corpus, cfg, args.utterance, args.out, args.embedding
    )
    print(f"wrote {n} frames to {args.out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval-detect": cmd_eval_detect,
    "eval-embed": cmd_eval_embed,
    "export-trace": cmd_export_trace,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (IoError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except UndefinedMetricError as e:
        print(f"undefined metric: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
