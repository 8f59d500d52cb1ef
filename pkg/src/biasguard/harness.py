"""k-fold evaluation of the guardrail against the unmitigated model and two post-processors."""
from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .baselines import (
    DEFAULT_THETAS,
    GroupThresholds,
    RejectOptionPolicy,
    apply_reject_option,
    apply_thresholds,
    fit_reject_option,
    fit_thresholds,
)
from .classifier import ForestConfig, Predictor, train_forest
from .dataset import Dataset, Standardizer, fit_standardizer, kfold_split, load_dataset, load_schema
from .generator import SyntheticPool, fit_native_sampler, generate, load_external_pool
from .guardrail import BiasGuard, GuardrailConfig
from .metrics import FieldSummary, MetricBundle, Undefined, metric_bundle, summarize_folds

BASELINE = "baseline"
THRESHOLD_OPT = "Threshold Opt"
REJECT_OPTION = "Reject Option"
REPORT_FORMAT = "biasguard-report"
REPORT_VERSION = 1

ModelFactory = Callable[[Dataset, int], Predictor]


class ExperimentError(RuntimeError):
    pass


def biasguard_name(t: int) -> str:
    return f"BiasGuard-{t}"


@dataclass(frozen=True)
class LabelBias:
    """Flip favorable training labels of group ``pa_value`` to unfavorable with probability ``rate``.

    Applied to training folds only; evaluation labels stay clean.
    """

    rate: float = 0.3
    pa_value: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0 or self.pa_value not in (0, 1):
            raise ValueError(f"invalid label bias {self}")

    def apply(self, train: Dataset, seed: int) -> Dataset:
        values = train.values.copy()
        li, pi = train.schema.label_index, train.schema.protected_index
        u = np.random.default_rng(seed).random(len(train))
        hit = (values[:, pi] == self.pa_value) & (values[:, li] == 1.0) & (u < self.rate)
        values[hit, li] = 0.0
        return Dataset(train.schema, values, train.row_ids)


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str | None = None
    schema_path: str | None = None
    name: str = ""
    folds: int = 5
    seed: int = 0
    forest: ForestConfig = ForestConfig()
    pool_size: int = 1000
    pool_external: tuple[str, str] | None = None  # files for protected value 0 and 1
    resample_prob: float = 0.1
    weight: float = 0.5
    aggregation: str = "mean"
    t_sweep: tuple[int, ...] = (2, 4, 6, 8)
    theta_grid: tuple[float, ...] = DEFAULT_THETAS
    threshold_resolution: int = 100
    calibration_fraction: float = 0.2
    label_bias: LabelBias | None = None

    def validate(self) -> None:
        if not self.t_sweep:
            raise ValueError("augmentation sweep is empty")
        if any(int(t) != t or t < 1 for t in self.t_sweep):
            raise ValueError("sweep values must be integers >= 1")
        if len(set(self.t_sweep)) != len(self.t_sweep):
            raise ValueError("sweep values must be distinct")
        if self.pool_size < max(self.t_sweep) and self.pool_external is None:
            raise ValueError("pool_size must be at least the largest augmentation count")
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ValueError("calibration_fraction must lie in (0, 1)")
        for p in (self.data_path, self.schema_path, *(self.pool_external or ())):
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{p} does not exist")

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["t_sweep"] = list(self.t_sweep)
        raw["theta_grid"] = list(self.theta_grid)
        raw["pool_external"] = list(self.pool_external) if self.pool_external else None
        return raw

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def default_model_factory(cfg: ExperimentConfig) -> ModelFactory:
    return lambda train, seed: train_forest(train, cfg.forest, seed)


@dataclass(eq=False)
class FoldArtifacts:
    """Everything fitted from one training fold."""

    model: Predictor
    standardizer: Standardizer
    pools: tuple[SyntheticPool, SyntheticPool]
    reject_option: RejectOptionPolicy
    thresholds: GroupThresholds
    pool_seconds: float


def _seeds(seed: int, fold: int) -> dict[str, int]:
    names = ("label_bias", "calibration", "model", "pool0", "pool1")
    children = np.random.SeedSequence(seed, spawn_key=(fold,)).spawn(len(names))
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def fit_fold(train: Dataset, cfg: ExperimentConfig, fold: int,
             model_factory: ModelFactory | None = None) -> FoldArtifacts:
    """Fit model, standardizer, pools and baselines from training rows only.

    The model is trained on the training fold minus a seeded calibration
    share; both post-processing baselines are fitted on that share.
    """
    seeds = _seeds(cfg.seed, fold)
    if cfg.label_bias is not None:
        train = cfg.label_bias.apply(train, seeds["label_bias"])
    perm = np.random.default_rng(seeds["calibration"]).permutation(len(train))
    n_cal = max(1, int(round(cfg.calibration_fraction * len(train))))
    cal = train.take(np.sort(perm[:n_cal]))
    fit = train.take(np.sort(perm[n_cal:]))

    factory = model_factory or default_model_factory(cfg)
    model = factory(fit, seeds["model"])
    standardizer = fit_standardizer(train)

    t0 = time.perf_counter()
    if cfg.pool_external is not None:
        pools = tuple(load_external_pool(p, train.schema, v) for v, p in enumerate(cfg.pool_external))
    else:
        pools = tuple(
            generate(fit_native_sampler(train, v, seeds[f"pool{v}"], cfg.resample_prob),
                     cfg.pool_size, seeds[f"pool{v}"])
            for v in (0, 1)
        )
    pool_seconds = time.perf_counter() - t0

    cal_scores = model.predict_proba(cal.values)
    reject = fit_reject_option(cal_scores, cal.labels, cal.protected, cfg.theta_grid)
    thresholds = fit_thresholds(cal_scores, cal.labels, cal.protected, cfg.threshold_resolution)
    return FoldArtifacts(model, standardizer, pools, reject, thresholds, pool_seconds)


@dataclass
class MethodResult:
    name: str
    folds: list[MetricBundle] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    triggered: list[int] = field(default_factory=list)

    @property
    def summary(self) -> dict:
        return summarize_folds(self.folds)


@dataclass
class FairnessReport:
    dataset: str
    n_samples: int
    n_attributes: int
    methods: list[MethodResult]
    pool_seconds: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def guard_methods(self) -> list[MethodResult]:
        return [m for m in self.methods if m.name.startswith("BiasGuard-")]

    @property
    def ratio(self) -> float | None:
        """Mean guarded inference time over the unmitigated inference time."""
        try:
            base = sum(self.method(BASELINE).seconds)
        except KeyError:
            return None
        guards = self.guard_methods
        if not guards or base <= 0:
            return None
        return float(np.mean([sum(m.seconds) for m in guards]) / base)


def _method_order(t_sweep, include_baselines: bool) -> list[str]:
    names = [biasguard_name(t) for t in sorted(t_sweep, reverse=True)]
    if include_baselines:
        names += [THRESHOLD_OPT, REJECT_OPTION, BASELINE]
    return names


def evaluate_fold(art: FoldArtifacts, test: Dataset, cfg: ExperimentConfig,
                  results: dict[str, MethodResult], include_baselines: bool = True) -> None:
    labels, pa = test.labels, test.protected
    blind = test.without_labels()

    t0 = time.perf_counter()
    scores = art.model.predict_proba(blind.values)
    base = (scores >= 0.5).astype(np.int64)
    base_seconds = time.perf_counter() - t0

    def record(name, pred, seconds, triggered=0):
        r = results[name]
        r.folds.append(metric_bundle(labels, pred, pa, base))
        r.seconds.append(seconds)
        r.triggered.append(triggered)

    if include_baselines:
        record(BASELINE, base, base_seconds)
        t0 = time.perf_counter()
        pred = apply_thresholds(art.model.predict_proba(blind.values), pa, art.thresholds)
        record(THRESHOLD_OPT, pred, time.perf_counter() - t0)
        t0 = time.perf_counter()
        pred = apply_reject_option(art.model.predict_proba(blind.values), pa, art.reject_option)
        record(REJECT_OPTION, pred, time.perf_counter() - t0)

    for t in cfg.t_sweep:
        guard = BiasGuard(art.model, art.pools,
                          GuardrailConfig(t, cfg.weight, cfg.aggregation), art.standardizer)
        t0 = time.perf_counter()
        out, stats = guard.predict_batch(blind)
        seconds = time.perf_counter() - t0
        pred = np.array([p.final_score >= 0.5 for p in out], dtype=np.int64)
        record(biasguard_name(t), pred, seconds, stats.triggered)


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None,
                   model_factory: ModelFactory | None = None,
                   include_baselines: bool = True) -> FairnessReport:
    """Run every method over ``cfg.folds`` folds and collect per-fold metrics and timings."""
    cfg.validate()
    if data is None:
        if cfg.data_path is None or cfg.schema_path is None:
            raise ValueError("config needs data_path and schema_path when no dataset is given")
        data = load_dataset(cfg.data_path, load_schema(cfg.schema_path))
    names = _method_order(cfg.t_sweep, include_baselines)
    results = {n: MethodResult(n) for n in names}
    pool_seconds = []
    for fold, (train, test) in enumerate(kfold_split(data, cfg.folds, cfg.seed)):
        try:
            art = fit_fold(train, cfg, fold, model_factory)
            evaluate_fold(art, test, cfg, results, include_baselines)
        except Exception as exc:
            raise ExperimentError(f"fold {fold}: {type(exc).__name__}: {exc}") from exc
        pool_seconds.append(art.pool_seconds)
    return FairnessReport(
        dataset=cfg.name or (Path(cfg.data_path).stem if cfg.data_path else "dataset"),
        n_samples=len(data),
        n_attributes=len(data.schema.columns) - 1,
        methods=[results[n] for n in names],
        pool_seconds=pool_seconds,
        metadata={
            "seed": cfg.seed,
            "config_hash": cfg.digest(),
            "config": cfg.to_dict(),
            "versions": {
                "biasguard": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
        },
    )


def sweep_augmentations(cfg: ExperimentConfig, data: Dataset | None = None,
                        model_factory: ModelFactory | None = None) -> FairnessReport:
    """One guarded row per augmentation count, no baseline rows."""
    if not cfg.t_sweep:
        raise ValueError("augmentation sweep is empty")
    return run_experiment(cfg, data, model_factory, include_baselines=False)


def run_bench(cfg: ExperimentConfig, data: Dataset | None = None,
              model_factory: ModelFactory | None = None) -> tuple[FairnessReport, dict]:
    report = run_experiment(cfg, data, model_factory)
    return report, timing_table(report)


def timing_table(report: FairnessReport) -> dict:
    """Per-method inference seconds summed over folds, plus the overhead ratio.

    ``overhead_per_triggered`` is the extra guarded time over the plain scoring
    time, divided by the number of triggered instances.
    """
    base = sum(report.method(BASELINE).seconds)
    methods = {m.name: sum(m.seconds) for m in report.methods}
    per_fold = {m.name: list(m.seconds) for m in report.methods}
    overhead = {}
    for m in report.guard_methods:
        n = sum(m.triggered)
        overhead[m.name] = (sum(m.seconds) - base) / n if n else None
    return {
        "dataset": report.dataset,
        "n_samples": report.n_samples,
        "n_attributes": report.n_attributes,
        "seconds": methods,
        "seconds_per_fold": per_fold,
        "pool_generation_seconds": sum(report.pool_seconds),
        "triggered": {m.name: sum(m.triggered) for m in report.guard_methods},
        "overhead_per_triggered": overhead,
        "ratio": report.ratio,
    }


# ---------------------------------------------------------------- reporting

TABLE_COLUMNS = ("Method", "Accuracy (mean ± std)", "EOD (mean ± std)", "ΔFPR", "ΔTPR",
                 "DI (mean ± std)", "Flips")


def _fmt(v) -> str:
    return "undef" if isinstance(v, Undefined) else f"{v:.5f}"


def _pm(s: FieldSummary) -> str:
    cell = f"{_fmt(s.mean)} ± {_fmt(s.std)}"
    if not s.complete:
        cell += f" [{s.n_defined}/{s.n_total}]"
    return cell


def format_table(report: FairnessReport) -> str:
    rows = []
    for m in report.methods:
        s = m.summary
        rows.append((m.name, _pm(s["accuracy"]), _pm(s["eod"]), _fmt(s["delta_fpr"].mean),
                     _fmt(s["delta_tpr"].mean), _pm(s["di"]), str(s["flips"])))
    widths = [max(len(r[i]) for r in rows + [TABLE_COLUMNS]) for i in range(len(TABLE_COLUMNS))]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    out = [f"{report.dataset} (m={report.n_samples}, folds={len(report.methods[0].folds)})",
           line(TABLE_COLUMNS), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    out.append("Flips: summed over folds. [d/n]: metric defined in d of n folds.")
    return "\n".join(out)


def format_timing(table: dict) -> str:
    guards = [k for k in table["seconds"] if k.startswith("BiasGuard-")]
    head = ["Dataset", "#Samples", "#Attr", BASELINE, THRESHOLD_OPT, REJECT_OPTION, *guards, "Ratio"]
    ratio = table["ratio"]
    cells = [table["dataset"], str(table["n_samples"]), str(table["n_attributes"])]
    cells += [f"{table['seconds'][k]:.3f}" for k in (BASELINE, THRESHOLD_OPT, REJECT_OPTION, *guards)]
    cells.append("n/a" if ratio is None else f"{ratio:.1f}")
    widths = [max(len(a), len(b)) for a, b in zip(head, cells)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths)),
             "  ".join(c.rjust(w) for c, w in zip(cells, widths)),
             f"pool generation (amortised, excluded above): {table['pool_generation_seconds']:.3f} s"]
    for name in guards:
        o = table["overhead_per_triggered"][name]
        if o is not None:
            lines.append(f"{name}: {table['triggered'][name]} triggered, {o * 1e3:.3f} ms extra per triggered instance")
    return "\n".join(lines)


def _encode(v):
    return {"undefined": v.reason} if isinstance(v, Undefined) else v


def _decode(v):
    return Undefined(v["undefined"]) if isinstance(v, dict) else v


def report_to_dict(report: FairnessReport) -> dict:
    """Deterministic machine-readable form; wall-clock timings are left out."""
    methods = []
    for m in report.methods:
        s = m.summary
        summary = {"flips": s["flips"]}
        for k, v in s.items():
            if k != "flips":
                summary[k] = {"mean": _encode(v.mean), "std": _encode(v.std),
                              "n_defined": v.n_defined, "n_total": v.n_total}
        methods.append({
            "name": m.name,
            "summary": summary,
            "folds": [{f.name: _encode(getattr(b, f.name)) for f in fields(b)} for b in m.folds],
            "triggered": list(m.triggered),
        })
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "dataset": report.dataset,
        "n_samples": report.n_samples,
        "n_attributes": report.n_attributes,
        "metadata": report.metadata,
        "methods": methods,
    }


def report_from_dict(raw: dict) -> FairnessReport:
    if raw.get("format") != REPORT_FORMAT or raw.get("version") != REPORT_VERSION:
        raise ValueError("not a supported report")
    methods = []
    for m in raw["methods"]:
        folds = [MetricBundle(**{k: _decode(v) for k, v in b.items()}) for b in m["folds"]]
        methods.append(MethodResult(m["name"], folds, [], list(m["triggered"])))
    return FairnessReport(raw["dataset"], raw["n_samples"], raw["n_attributes"], methods,
                          metadata=raw["metadata"])


def emit_report(report: FairnessReport, out_dir: str | Path, timing: dict | None = None) -> list[Path]:
    """Write ``report.txt`` and ``report.json`` (plus ``timing.*`` when given) into ``out_dir``."""
    if not report.methods or not report.methods[0].folds:
        raise ValueError("report is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.txt", out / "report.json"]
    written[0].write_text(format_table(report) + "\n", encoding="utf-8")
    written[1].write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    if timing is not None:
        (out / "timing.txt").write_text(format_timing(timing) + "\n", encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")
        written += [out / "timing.txt", out / "timing.json"]
    return written


def load_report(path: str | Path) -> FairnessReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
