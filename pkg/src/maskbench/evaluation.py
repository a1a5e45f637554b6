"""Experiment matrix (3 training sets x 2 test sets x 6 models) and report tables."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from maskbench.classifiers import MODEL_NAMES, DimensionMismatchError, LabeledDataset, TrainedModel, train
from maskbench.dataset import DatasetSplit, SplitSet
from maskbench.features import LbpConfig, extract_features

log = logging.getLogger(__name__)

TRAIN_SETS = ("UM", "HM", "M")
TEST_SETS = ("UM", "M")
GROUP_NAMES = {"UM": "Unmasked", "M": "Masked"}


@dataclass(frozen=True, order=True)
class ExperimentId:
    train: str
    test: str

    def __post_init__(self):
        if self.train not in TRAIN_SETS or self.test not in TEST_SETS:
            raise ValueError(f"invalid experiment {self.train}/{self.test}")

    @property
    def label(self) -> str:
        return f"{self.train}/{self.test}"

    def __str__(self):
        return self.label


EXPERIMENTS = tuple(ExperimentId(tr, te) for tr in TRAIN_SETS for te in TEST_SETS)


class ExperimentError(RuntimeError):
    def __init__(self, model: str, experiment: str, cause: Exception):
        super().__init__(f"{model} [{experiment}]: {type(cause).__name__}: {cause}")
        self.model = model
        self.experiment = experiment


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Metrics:
    n_test: int
    misses: int
    accuracy: float
    macro_f1: float
    per_class: dict = field(default_factory=dict)  # class id -> ClassScores

    @property
    def miss_rate(self) -> float:
        return self.misses / self.n_test


def compute_metrics(y_true, y_pred) -> Metrics:
    """Accuracy and macro F1 over the union of true and predicted classes."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("need equal-length, non-empty label sequences")
    n = int(y_true.size)
    misses = int(np.count_nonzero(y_true != y_pred))
    per_class = {}
    for c in np.union1d(y_true, y_pred):
        tp = int(np.count_nonzero((y_pred == c) & (y_true == c)))
        fp = int(np.count_nonzero((y_pred == c) & (y_true != c)))
        fn = int(np.count_nonzero((y_pred != c) & (y_true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_class[int(c)] = ClassScores(p, r, f1)
    macro = float(np.mean([s.f1 for s in per_class.values()]))
    return Metrics(n, misses, (n - misses) / n, macro, per_class)


def split_features(split: DatasetSplit, cfg: LbpConfig, cache: dict | None = None) -> np.ndarray:
    rows = []
    for rec in split:
        key = (rec.subject, rec.index, rec.mask_state)
        if cache is not None and key in cache:
            rows.append(cache[key])
        else:
            rows.append(extract_features(rec.image, cfg))
    return np.vstack(rows)


def evaluate(m: TrainedModel, split: DatasetSplit, cfg: LbpConfig, features: np.ndarray | None = None) -> Metrics:
    if len(split) == 0:
        raise ValueError(f"split {split.name} is empty")
    if m.dim != cfg.dimension:
        raise DimensionMismatchError(
            f"model dimension {m.dim} does not match LBP configuration dimension {cfg.dimension}"
        )
    X = split_features(split, cfg) if features is None else features
    return compute_metrics(split.labels, m.predict(X))


def feature_cache(splits: SplitSet, cfg: LbpConfig, jobs: int = 1) -> dict:
    """Feature vector of every distinct record across all splits."""
    unique = {}
    for split in splits.as_dict().values():
        for rec in split:
            unique.setdefault((rec.subject, rec.index, rec.mask_state), rec)
    keys = sorted(unique, key=lambda k: (k[0], k[1], k[2].value))
    work = lambda k: extract_features(unique[k].image, cfg)  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            vectors = list(ex.map(work, keys))
    else:
        vectors = [work(k) for k in keys]
    return dict(zip(keys, vectors))


def _mean(values) -> float:
    return float(np.mean(list(values)))


@dataclass
class ReportBundle:
    """All matrix results plus derived tables.

    ``metrics`` maps ``(model, ExperimentId)`` to :class:`Metrics`.
    """

    models: tuple
    metrics: dict
    provenance: dict = field(default_factory=dict)

    def cell(self, model: str, exp: ExperimentId) -> Metrics:
        return self.metrics[(model, exp)]

    def _score_table(self, attr: str) -> dict:
        table = {}
        for m in self.models:
            for e in EXPERIMENTS:
                table[(m, e.label)] = getattr(self.cell(m, e), attr)
            table[(m, "AVERAGES")] = _mean(table[(m, e.label)] for e in EXPERIMENTS)
        for e in EXPERIMENTS:
            table[("AVERAGES", e.label)] = _mean(table[(m, e.label)] for m in self.models)
        table[("AVERAGES", "AVERAGES")] = _mean(
            table[(m, e.label)] for m in self.models for e in EXPERIMENTS
        )
        return table

    def accuracy_table(self) -> dict:
        return self._score_table("accuracy")

    def f1_table(self) -> dict:
        return self._score_table("macro_f1")

    def miss_table(self, train_set: str) -> dict:
        """``(model, group) -> (misses, out_of, rate)`` for one training set."""
        out = {}
        for m in self.models:
            for te in TEST_SETS:
                met = self.cell(m, ExperimentId(train_set, te))
                out[(m, GROUP_NAMES[te])] = (met.misses, met.n_test, met.miss_rate)
        return out

    def overall_miss_table(self) -> dict:
        """Average miss rate per (test group, training set), with averages."""
        out = {}
        for te in TEST_SETS:
            row = f"Average {GROUP_NAMES[te]} Miss Rate"
            for tr in TRAIN_SETS:
                out[(row, tr)] = _mean(self.cell(m, ExperimentId(tr, te)).miss_rate for m in self.models)
            out[(row, "Average")] = _mean(out[(row, tr)] for tr in TRAIN_SETS)
        for col in TRAIN_SETS + ("Average",):
            out[("Averages", col)] = _mean(
                out[(f"Average {GROUP_NAMES[te]} Miss Rate", col)] for te in TEST_SETS
            )
        return out


def run_experiment_matrix(
    splits: SplitSet,
    cfg: LbpConfig = LbpConfig(),
    hyper: dict | None = None,
    jobs: int = 1,
    features: dict | None = None,
    models=MODEL_NAMES,
    provenance: dict | None = None,
) -> ReportBundle:
    """Train every model on each training split and score it on both test splits."""
    hyper = hyper or {}
    if features is None:
        features = feature_cache(splits, cfg, jobs)
    mats = {f"train:{k}": split_features(v, cfg, features) for k, v in splits.training.items()}
    mats.update({f"test:{k}": split_features(v, cfg, features) for k, v in splits.testing.items()})

    def fit(task):
        model_name, tr = task
        try:
            ds = LabeledDataset(mats[f"train:{tr}"], splits.training[tr].labels)
            log.info("training %s on Training_%s", model_name, tr)
            return train(model_name, ds, **hyper.get(model_name, {}))
        except Exception as exc:
            raise ExperimentError(model_name, f"train {tr}", exc) from exc

    tasks = [(m, tr) for tr in TRAIN_SETS for m in models]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            trained = list(ex.map(fit, tasks))
    else:
        trained = [fit(t) for t in tasks]

    metrics = {}
    for (model_name, tr), model in zip(tasks, trained):
        for te in TEST_SETS:
            exp = ExperimentId(tr, te)
            try:
                metrics[(model_name, exp)] = evaluate(model, splits.testing[te], cfg, mats[f"test:{te}"])
            except Exception as exc:
                raise ExperimentError(model_name, exp.label, exc) from exc

    prov = {"f1_averaging": "macro", "lbp_config": cfg.fingerprint()}
    prov.update(provenance or {})
    return ReportBundle(models=tuple(models), metrics=metrics, provenance=prov)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

TABLE_NAMES = ("accuracy", "f1", "miss_UM", "miss_HM", "miss_M", "overall_miss")


def percent(value: float) -> int:
    """Integer percent, half-up, from the exact binary value."""
    return int((Decimal(value) * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _header_lines(bundle: ReportBundle) -> list[str]:
    return [f"# {k}: {bundle.provenance[k]}" for k in sorted(bundle.provenance)]


def _csv_rows(bundle: ReportBundle, table: str):
    if table in ("accuracy", "f1"):
        data = bundle.accuracy_table() if table == "accuracy" else bundle.f1_table()
        metric = "accuracy" if table == "accuracy" else "macro_f1"
        for m in bundle.models + ("AVERAGES",):
            for col in [e.label for e in EXPERIMENTS] + ["AVERAGES"]:
                tr, te = col.split("/") if "/" in col else ("ALL", "ALL")
                yield [table, m, tr, te, metric, repr(data[(m, col)])]
    elif table.startswith("miss_"):
        tr = table.split("_", 1)[1]
        data = bundle.miss_table(tr)
        for m in bundle.models:
            for te in TEST_SETS:
                misses, out_of, rate = data[(m, GROUP_NAMES[te])]
                yield [table, m, tr, te, "misses", str(misses)]
                yield [table, m, tr, te, "out_of", str(out_of)]
                yield [table, m, tr, te, "miss_rate", repr(rate)]
    elif table == "overall_miss":
        data = bundle.overall_miss_table()
        for te, row in [("UM", "Average Unmasked Miss Rate"), ("M", "Average Masked Miss Rate"), ("ALL", "Averages")]:
            for tr in TRAIN_SETS + ("Average",):
                yield [table, "ALL", "ALL" if tr == "Average" else tr, te, "miss_rate", repr(data[(row, tr)])]
    else:
        raise KeyError(table)


def _render_csv(bundle: ReportBundle, table: str) -> bytes:
    buf = io.StringIO()
    for line in _header_lines(bundle):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "model", "train_set", "test_set", "metric", "value"])
    w.writerows(_csv_rows(bundle, table))
    return buf.getvalue().encode("utf-8")


def _md_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _render_markdown(bundle: ReportBundle, table: str) -> bytes:
    cols = [e.label for e in EXPERIMENTS]
    if table in ("accuracy", "f1"):
        data = bundle.accuracy_table() if table == "accuracy" else bundle.f1_table()
        title = "Accuracy" if table == "accuracy" else "F1 score"
        rows = [
            [m] + [f"{percent(data[(m, c)])}%" for c in cols + ["AVERAGES"]]
            for m in bundle.models + ("AVERAGES",)
        ]
        body = _md_table([title] + cols + ["AVERAGES"], rows)
    elif table.startswith("miss_"):
        tr = table.split("_", 1)[1]
        data = bundle.miss_table(tr)
        rows = []
        for m in bundle.models:
            for te in TEST_SETS:
                misses, out_of, rate = data[(m, GROUP_NAMES[te])]
                rows.append([m, GROUP_NAMES[te], str(misses), str(out_of), f"{percent(rate)}%"])
        title = f"Miss rates, Training_{tr}"
        body = _md_table(["Model", "Group", "Misses", "Out Of", "Percent"], rows)
        body = f"**{title}**\n\n{body}"
    elif table == "overall_miss":
        data = bundle.overall_miss_table()
        header = ["Overall miss rates", "UM", "HM", "M", "Average"]
        rows = [
            [row] + [f"{percent(data[(row, c)])}%" for c in header[1:]]
            for row in ("Average Unmasked Miss Rate", "Average Masked Miss Rate", "Averages")
        ]
        body = _md_table(header, rows)
    else:
        raise KeyError(table)
    text = "\n".join(_header_lines(bundle)) + "\n\n" + body + "\n"
    return text.encode("utf-8")


def render_reports(bundle: ReportBundle, fmt: str = "markdown") -> dict[str, bytes]:
    """Rendered bytes per table name; deterministic for a given bundle."""
    if fmt == "csv":
        return {t: _render_csv(bundle, t) for t in TABLE_NAMES}
    if fmt == "markdown":
        return {t: _render_markdown(bundle, t) for t in TABLE_NAMES}
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv_report(data: bytes) -> list[dict]:
    lines = [ln for ln in data.decode("utf-8").splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
