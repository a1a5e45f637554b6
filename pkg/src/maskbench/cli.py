"""Command-line entry point: ``maskbench <command> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from maskbench import classifiers
from maskbench.dataset import (
    CorpusError,
    MaskState,
    build_splits,
    generate_fixture_corpus,
    load_corpus,
    save_corpus,
    split_manifest_csv,
)
from maskbench.evaluation import (
    TABLE_NAMES,
    evaluate,
    feature_cache,
    render_reports,
    run_experiment_matrix,
    split_features,
)
from maskbench.features import LbpConfig, extract_matrix, features_csv
from maskbench.masker import default_templates, mask_corpus

log = logging.getLogger("maskbench")

DEFAULT_SEED = 0


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class RunConfig:
    data_root: str
    output_root: str
    master_seed: int = DEFAULT_SEED
    mask_seed: int | None = None
    mask_top: float = 0.55
    mask_bottom: float = 0.95
    lbp: LbpConfig = field(default_factory=LbpConfig)
    hyper: dict = field(default_factory=dict)
    holdout_index: int | None = None
    formats: tuple = ("csv", "markdown")
    jobs: int = 1

    @property
    def effective_mask_seed(self) -> int:
        return self.master_seed if self.mask_seed is None else self.mask_seed

    def resolved(self) -> dict:
        """Everything that can change results; paths and ``jobs`` are excluded."""
        hyper = {
            name: {**classifiers.DEFAULT_HYPERPARAMETERS[name], **self.hyper.get(name, {})}
            for name in classifiers.MODEL_NAMES
        }
        return {
            "master_seed": self.master_seed,
            "mask_seed": self.effective_mask_seed,
            "mask_top": self.mask_top,
            "mask_bottom": self.mask_bottom,
            "lbp": asdict(self.lbp),
            "hyperparameters": hyper,
            "holdout_index": self.holdout_index,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            return int(parts[0]), int(parts[0])
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"grid must look like 4 or 4x4, got {text!r}")


def _data_root(args) -> Path:
    root = args.data or os.environ.get("MASKBENCH_DATA")
    if not root:
        raise StageError("load", "corpus not found: pass --data or set MASKBENCH_DATA")
    return Path(root)


def _add_data(p):
    p.add_argument("--data", help="unmasked corpus root (s<k>/<i>.pgm); falls back to $MASKBENCH_DATA")


def _add_mask(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    p.add_argument("--mask-seed", type=int, default=None, help="mask seed (default: --seed)")
    p.add_argument("--mask-top", type=float, default=0.55)
    p.add_argument("--mask-bottom", type=float, default=0.95)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def _add_lbp(p):
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--neighbors", type=int, default=24)
    p.add_argument("--grid", type=_grid, default=(4, 4), help="cells, e.g. 4x4")


def _add_hyper(p):
    p.add_argument("--knn-k", type=int, default=None)
    p.add_argument("--knn-metric", choices=("euclidean", "chi2"), default=None)
    p.add_argument("--lr-l2", type=float, default=None)
    p.add_argument("--svc-c", type=float, default=None)
    p.add_argument("--lda-shrinkage", type=float, default=None)


def _lbp_from(args) -> LbpConfig:
    gx, gy = args.grid
    return LbpConfig(radius=args.radius, neighbors=args.neighbors, grid_x=gx, grid_y=gy)


def _hyper_from(args) -> dict:
    hyper = {}
    pairs = [
        ("KNN", "k", args.knn_k),
        ("KNN", "metric", args.knn_metric),
        ("LR", "l2", args.lr_l2),
        ("SVC", "cost", args.svc_c),
        ("LDA", "shrinkage", args.lda_shrinkage),
    ]
    for model, key, value in pairs:
        if value is not None:
            hyper.setdefault(model, {})[key] = value
    return hyper


def _templates(args):
    return default_templates(top_fraction=args.mask_top, bottom_fraction=args.mask_bottom)


def _mask_seed(args) -> int:
    return args.seed if args.mask_seed is None else args.mask_seed


def _load(root: Path, state=MaskState.UNMASKED):
    try:
        return load_corpus(root, state)
    except CorpusError as exc:
        raise StageError("load", str(exc)) from exc


def _corpora(args):
    unmasked = _load(_data_root(args))
    if getattr(args, "masked", None):
        masked = _load(Path(args.masked), MaskState.MASKED)
    else:
        masked = mask_corpus(unmasked, _mask_seed(args), _templates(args), args.jobs)
    return unmasked, masked


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fixtures(seed: int, subjects: int, per_subject: int, out, width: int = 92, height: int = 112) -> list[Path]:
    corpus = generate_fixture_corpus(seed, subjects, per_subject, width, height)
    return save_corpus(corpus, out)


def cmd_mask(data_root, seed: int, out, templates=None, jobs: int = 1) -> list[Path]:
    corpus = _load(Path(data_root))
    return save_corpus(mask_corpus(corpus, seed, templates, jobs), out)


def _feature_cache_path(out: Path, cfg: RunConfig, unmasked_hash: str, masked_hash: str) -> Path:
    key = hashlib.sha256(
        json.dumps(
            [asdict(cfg.lbp), unmasked_hash, masked_hash, cfg.holdout_index], sort_keys=True
        ).encode()
    ).hexdigest()[:16]
    return out / "cache" / f"features-{key}.npz"


def _load_or_compute_features(path: Path, splits, cfg: RunConfig) -> dict:
    if path.exists():
        with np.load(path) as npz:
            keys = npz["keys"]
            vectors = npz["vectors"]
        return {(int(s), int(i), MaskState(st)): v for (s, i, st), v in zip(keys, vectors)}
    feats = feature_cache(splits, cfg.lbp, cfg.jobs)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = np.array([(s, i, st.value) for s, i, st in feats], dtype=object)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, keys=keys.astype(str), vectors=np.vstack(list(feats.values())))
    tmp.replace(path)
    return feats


def cmd_reproduce(cfg: RunConfig) -> dict[str, Path]:
    """Mask, split, extract, run the full matrix and write every report table."""
    return run_reproduce(cfg)[1]


def run_reproduce(cfg: RunConfig):
    """Like :func:`cmd_reproduce` but also returns the :class:`ReportBundle`."""
    out = Path(cfg.output_root)
    unmasked = _load(Path(cfg.data_root))
    try:
        templates = default_templates(top_fraction=cfg.mask_top, bottom_fraction=cfg.mask_bottom)
        masked = mask_corpus(unmasked, cfg.effective_mask_seed, templates, cfg.jobs)
        save_corpus(masked, out / "masked")
    except (ValueError, OSError) as exc:
        raise StageError("mask", str(exc)) from exc
    try:
        splits = build_splits(unmasked, masked, cfg.holdout_index)
        (out / "splits.csv").write_text(split_manifest_csv(splits, cfg.data_root, out / "masked"))
    except (ValueError, OSError) as exc:
        raise StageError("split", str(exc)) from exc

    u_hash, m_hash = unmasked.digest(), masked.digest()
    try:
        feats = _load_or_compute_features(_feature_cache_path(out, cfg, u_hash, m_hash), splits, cfg)
    except (ValueError, OSError) as exc:
        raise StageError("features", str(exc)) from exc

    provenance = {
        "seed": cfg.master_seed,
        "mask_seed": cfg.effective_mask_seed,
        "config_hash": cfg.fingerprint(),
        "corpus_hash": u_hash,
        "masked_corpus_hash": m_hash,
        "run_config": json.dumps(cfg.resolved(), sort_keys=True),
        "subjects": unmasked.subject_count,
        "images_per_subject": unmasked.images_per_subject,
    }
    try:
        bundle = run_experiment_matrix(
            splits, cfg.lbp, cfg.hyper, jobs=cfg.jobs, features=feats, provenance=provenance
        )
    except Exception as exc:
        raise StageError("experiments", str(exc)) from exc

    written = {}
    report_dir = out / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    for fmt in cfg.formats:
        ext = "csv" if fmt == "csv" else "md"
        for table, data in render_reports(bundle, fmt).items():
            path = report_dir / f"{table}.{ext}"
            path.write_bytes(data)
            written[f"{table}.{ext}"] = path
    return bundle, written


def _run_config(args) -> RunConfig:
    formats = ("csv", "markdown") if args.format == "both" else (args.format,)
    return RunConfig(
        data_root=str(_data_root(args)),
        output_root=args.out,
        master_seed=args.seed,
        mask_seed=args.mask_seed,
        mask_top=args.mask_top,
        mask_bottom=args.mask_bottom,
        lbp=_lbp_from(args),
        hyper=_hyper_from(args),
        holdout_index=args.holdout,
        formats=formats,
        jobs=args.jobs,
    )


def _main_fixtures(args):
    paths = cmd_fixtures(args.seed, args.subjects, args.per_subject, args.out, args.width, args.height)
    print(f"wrote {len(paths)} images to {args.out}")


def _main_mask(args):
    paths = cmd_mask(_data_root(args), _mask_seed(args), args.out, _templates(args), args.jobs)
    print(f"wrote {len(paths)} masked images to {args.out}")


def _main_split(args):
    unmasked, masked = _corpora(args)
    splits = build_splits(unmasked, masked, args.holdout)
    text = split_manifest_csv(splits, _data_root(args), args.masked)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _main_features(args):
    state = MaskState.MASKED if args.masked_input else MaskState.UNMASKED
    corpus = _load(_data_root(args), state)
    matrix = extract_matrix([r.image for r in corpus.records], _lbp_from(args), args.jobs)
    text = features_csv(corpus.records, matrix)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _main_train(args):
    unmasked, masked = _corpora(args)
    splits = build_splits(unmasked, masked, args.holdout)
    cfg = _lbp_from(args)
    split = splits.training[args.train_set]
    ds = classifiers.LabeledDataset(split_features(split, cfg), split.labels)
    model = classifiers.train(args.model, ds, **_hyper_from(args).get(args.model, {}))
    model.meta["lbp_config"] = cfg.fingerprint()
    classifiers.save_model(model, args.out)
    print(f"wrote {args.model} model trained on {split.name} to {args.out}")


def _main_eval(args):
    unmasked, masked = _corpora(args)
    splits = build_splits(unmasked, masked, args.holdout)
    model = classifiers.load_model(args.model_file)
    m = evaluate(model, splits.testing[args.test_set], _lbp_from(args))
    print(
        json.dumps(
            {
                "n_test": m.n_test,
                "misses": m.misses,
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
            },
            sort_keys=True,
        )
    )


def _main_reproduce(args):
    written = cmd_reproduce(_run_config(args))
    for name in sorted(written):
        print(written[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="write a procedural fixture corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--per-subject", type=int, default=10)
    p.add_argument("--width", type=int, default=92)
    p.add_argument("--height", type=int, default=112)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_main_fixtures)

    p = sub.add_parser("mask", help="write a masked rendition of a corpus")
    _add_data(p)
    _add_mask(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_main_mask)

    p = sub.add_parser("split", help="print the split manifest as CSV")
    _add_data(p)
    _add_mask(p)
    p.add_argument("--masked", help="pre-rendered masked corpus root")
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=_main_split)

    p = sub.add_parser("features", help="export LBP features of a corpus as CSV")
    _add_data(p)
    _add_lbp(p)
    p.add_argument("--masked-input", action="store_true", help="label records as masked")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out")
    p.set_defaults(func=_main_features)

    p = sub.add_parser("train", help="train one model on one training split")
    _add_data(p)
    _add_mask(p)
    _add_lbp(p)
    _add_hyper(p)
    p.add_argument("--masked")
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--model", choices=classifiers.MODEL_NAMES, required=True)
    p.add_argument("--train-set", choices=("UM", "HM", "M"), default="UM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_main_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a test split")
    _add_data(p)
    _add_mask(p)
    _add_lbp(p)
    p.add_argument("--masked")
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--model-file", required=True)
    p.add_argument("--test-set", choices=("UM", "M"), default="UM")
    p.set_defaults(func=_main_eval)

    p = sub.add_parser("reproduce", help="run the whole benchmark and write all reports")
    _add_data(p)
    _add_mask(p)
    _add_lbp(p)
    _add_hyper(p)
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "markdown", "both"), default="both")
    p.set_defaults(func=_main_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"maskbench: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, ValueError, OSError, classifiers.ModelFormatError) as exc:
        print(f"maskbench: {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
