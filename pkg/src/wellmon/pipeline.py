"""End-to-end method pipelines and the pipeline driver.

Stage order: window -> transform -> standardize -> PCA -> classifier for
the classical methods; the CNN consumes per-channel standardized raw
windows. All intermediates (features, models, reports) are persisted under
the output directory, and every stage is deterministic given the seeds.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import dataset as dataset_mod
from .cnn import CnnClassifier
from .dtree import DecisionTree
from .evaluation import compare, format_table, reports_to_csv
from .logreg import LogisticRegression
from .pca import PCA
from .svm import SvmClassifier
from .transforms import FeatureMatrix, Standardizer, transform_segments


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Missing or inconsistent input data (CLI exit code 3)."""


METHODS = ("logreg", "dtree", "svm", "cnn")
TRANSFORMS = ("std", "cov")


@dataclass(frozen=True)
class PipelineConfig:
    """One pipeline run: data source, preprocessing, and method choice."""

    method: str = "logreg"
    transform: str = "cov"
    pcs: int = None
    noise: int = 1
    seed: int = 0
    n_series_per_class: int = 10
    series_len: int = dataset_mod.DEFAULT_SERIES_LEN
    preset: str = "slack"
    window_seconds: float = 60.0
    test_fraction: float = 0.2
    channels: tuple = None
    method_params: dict = field(default_factory=dict)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(
                f"transform must be one of {TRANSFORMS}, got {self.transform!r}"
            )
        if self.noise not in dataset_mod.NOISE_LEVELS:
            raise ConfigError(
                f"noise must be one of {dataset_mod.NOISE_LEVELS}, got {self.noise}"
            )
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        m = 6 if self.channels is None else len(self.channels)
        feature_count = m if self.transform == "std" else m * (m + 1) // 2
        if self.pcs is not None and not 1 <= self.pcs <= feature_count:
            raise ConfigError(
                f"pcs must lie in [1, {feature_count}] for the "
                f"{self.transform} transform, got {self.pcs}"
            )
        if not isinstance(self.method_params, dict):
            raise ConfigError("method_params must be an object")
        return self

    def to_json(self):
        payload = asdict(self)
        if payload["channels"] is not None:
            payload["channels"] = list(payload["channels"])
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        if payload.get("channels") is not None:
            payload["channels"] = tuple(payload["channels"])
        return cls(**payload)

    def hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# method pipelines (fit on segments, predict on segments)
# ---------------------------------------------------------------------------

class ClassicalPipeline:
    """transform -> standardize -> optional PCA -> classifier."""

    def __init__(self, name, transform, pcs, estimator, channel_names=None):
        self.name = name
        self.transform = transform
        self.pcs = pcs
        self.estimator = estimator
        self.channel_names = channel_names

    def _features(self, segments):
        return transform_segments(segments, self.transform, self.channel_names)

    def fit(self, train_segments):
        features = self._features(train_segments)
        self.scaler_ = Standardizer().fit(features)
        scaled = self.scaler_.transform(features)
        if self.pcs is not None:
            self.pca_ = PCA(self.pcs).fit(scaled)
            scaled = self.pca_.transform(scaled)
        else:
            self.pca_ = None
        self.estimator.fit(scaled.values, scaled.labels)
        return self

    def project(self, segments) -> FeatureMatrix:
        scaled = self.scaler_.transform(self._features(segments))
        return self.pca_.transform(scaled) if self.pca_ is not None else scaled

    def predict(self, segments):
        return self.estimator.predict(self.project(segments).values)

    def describe(self):
        pca_part = f"+pca({self.pcs})" if self.pcs is not None else ""
        return f"{self.transform}{pca_part} {type(self.estimator).__name__}"

    def save(self, out_dir, stem):
        out_dir = Path(out_dir)
        self.scaler_.save(out_dir / f"{stem}_scaler.json")
        if self.pca_ is not None:
            self.pca_.save(out_dir / f"{stem}_pca.json")
        self.estimator.save(out_dir / f"{stem}_model.json")


class CnnPipeline:
    """Per-channel standardization of raw windows, then the CNN."""

    def __init__(self, name, estimator):
        self.name = name
        self.estimator = estimator

    @staticmethod
    def _to_array(segments):
        # segments hold (n_w, m); the network wants (N, m, n_w)
        return np.stack([np.asarray(s.samples).T for s in segments])

    def fit(self, train_segments):
        X = self._to_array(train_segments)
        y = np.array([int(s.label) for s in train_segments], dtype=np.int64)
        self.channel_mean_ = X.mean(axis=(0, 2))
        std = X.std(axis=(0, 2))
        self.channel_std_ = np.where(std <= 1e-12, 1.0, std)
        self.estimator.fit(self._normalize(X), y)
        return self

    def _normalize(self, X):
        return (X - self.channel_mean_[None, :, None]) / self.channel_std_[None, :, None]

    def predict(self, segments):
        return self.estimator.predict(self._normalize(self._to_array(segments)))

    def embed(self, segments):
        return self.estimator.embed(self._normalize(self._to_array(segments)))

    def describe(self):
        e = self.estimator
        return (
            f"raw CnnClassifier act={e.activation} lr={e.learning_rate:g} "
            f"wd={e.weight_decay:g} bs={e.batch_size} epochs={e.epochs}"
        )

    def save(self, out_dir, stem):
        out_dir = Path(out_dir)
        self.estimator.save(out_dir / f"{stem}_model")
        channels = {
            "mean": self.channel_mean_.tolist(),
            "std": self.channel_std_.tolist(),
        }
        (out_dir / f"{stem}_channels.json").write_text(
            json.dumps(channels, indent=2) + "\n"
        )

    @classmethod
    def load(cls, out_dir, stem):
        out_dir = Path(out_dir)
        pipeline = cls("cnn", CnnClassifier.load(out_dir / f"{stem}_model"))
        channels = json.loads((out_dir / f"{stem}_channels.json").read_text())
        pipeline.channel_mean_ = np.array(channels["mean"], dtype=np.float64)
        pipeline.channel_std_ = np.array(channels["std"], dtype=np.float64)
        return pipeline


def _default_estimator(method, params, seed):
    params = dict(params)
    if method == "logreg":
        return LogisticRegression(**params)
    if method == "dtree":
        return DecisionTree(**params)
    if method == "svm":
        params.setdefault("seed", seed)
        return SvmClassifier(**params)
    if method == "cnn":
        params.setdefault("seed", seed)
        params.setdefault("epochs", 30)
        params.setdefault("learning_rate", 5e-3)
        params.setdefault("batch_size", 50)
        return CnnClassifier(**params)
    raise ConfigError(f"unknown method {method!r}")


def _params_for(cfg, method):
    """method_params either applies to cfg.method directly, or is keyed by
    method name (the form `compare` uses: {"cnn": {...}, "svm": {...}})."""
    params = cfg.method_params
    if params and all(key in METHODS for key in params):
        return params.get(method, {})
    return params if method == cfg.method else {}


def build_pipeline(cfg: PipelineConfig, method=None, channel_names=None):
    method = method or cfg.method
    estimator = _default_estimator(method, _params_for(cfg, method), cfg.seed)
    if method == "cnn":
        return CnnPipeline("cnn", estimator)
    return ClassicalPipeline(
        method, cfg.transform, cfg.pcs, estimator, channel_names
    )


# ---------------------------------------------------------------------------
# pipeline driver
# ---------------------------------------------------------------------------

def subset_channels(segments, channel_names, keep):
    """Restrict segments to the named channels (e.g. one physical direction)."""
    keep = tuple(keep)
    missing = [c for c in keep if c not in channel_names]
    if missing:
        raise DataError(f"unknown channel(s) {missing}; have {list(channel_names)}")
    idx = [channel_names.index(c) for c in keep]
    out = [
        dataset_mod.Segment(
            samples=s.samples[:, idx],
            source_index=s.source_index,
            window_index=s.window_index,
            label=s.label,
        )
        for s in segments
    ]
    return out, keep


def project_features(cfg: PipelineConfig, train_segments, test_segments,
                     channel_names=None):
    """transform + standardize + optional PCA, fit on train only.

    Returns (train_features, test_features, scaler, pca-or-None).
    """
    train_fm = transform_segments(train_segments, cfg.transform, channel_names)
    test_fm = transform_segments(test_segments, cfg.transform, channel_names)
    scaler = Standardizer().fit(train_fm)
    train_fm = scaler.transform(train_fm)
    test_fm = scaler.transform(test_fm)
    pca = None
    if cfg.pcs is not None:
        pca = PCA(cfg.pcs).fit(train_fm)
        train_fm = pca.transform(train_fm)
        test_fm = pca.transform(test_fm)
    return train_fm, test_fm, scaler, pca


def prepare_segments(cfg: PipelineConfig, series_set=None):
    """Generate (or accept) series, window them, and split train/test."""
    if series_set is None:
        gen_cfg = dataset_mod.preset_config(
            cfg.preset,
            n_series_per_class=cfg.n_series_per_class,
            noise_level=cfg.noise,
            seed=cfg.seed,
            series_len=cfg.series_len,
        )
        series_set = dataset_mod.generate(gen_cfg)
    segments = dataset_mod.window(series_set, cfg.window_seconds)
    channel_names = series_set.channel_names
    if cfg.channels is not None:
        segments, channel_names = subset_channels(
            segments, channel_names, cfg.channels
        )
    train, test = dataset_mod.split(segments, cfg.test_fraction, cfg.seed)
    return train, test, channel_names


def run_pipeline(cfg: PipelineConfig, out_dir, series_set=None):
    """Run one method end to end; persist features, model, and report."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test, channel_names = prepare_segments(cfg, series_set)
    pipeline = build_pipeline(cfg, channel_names=channel_names)
    reports = compare([pipeline], train, test)
    stem = cfg.method
    pipeline.save(out_dir, stem)
    if isinstance(pipeline, ClassicalPipeline):
        pipeline.project(train).to_csv(out_dir / f"{stem}_train_features.csv")
        pipeline.project(test).to_csv(out_dir / f"{stem}_test_features.csv")
    reports = [_stamp(r, cfg) for r in reports]
    reports_to_csv(reports, out_dir / "report.csv")
    (out_dir / "config.json").write_text(cfg.to_json() + "\n")
    return reports, pipeline


def run_compare(cfg: PipelineConfig, out_dir, series_set=None):
    """Fit all four methods on one split; write report CSV and text table."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test, channel_names = prepare_segments(cfg, series_set)
    pipelines = [
        build_pipeline(cfg, method, channel_names=channel_names)
        for method in METHODS
    ]
    reports = compare(pipelines, train, test)
    for pipeline in pipelines:
        pipeline.save(out_dir, pipeline.name)
    reports = [_stamp(r, cfg) for r in reports]
    reports_to_csv(reports, out_dir / "report.csv")
    table = format_table(reports)
    (out_dir / "report.txt").write_text(table + "\n")
    (out_dir / "config.json").write_text(cfg.to_json() + "\n")
    return reports, pipelines


def _stamp(report, cfg):
    from dataclasses import replace

    return replace(report, config=f"{report.config} cfg={cfg.hash()}")


# ---------------------------------------------------------------------------
# CSV bundles behind the plots
# ---------------------------------------------------------------------------

def emit_feature_scatter(features: FeatureMatrix, out_dir):
    """Pairwise scatter CSVs (one per feature pair) plus per-feature marginals."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if features.n_rows == 0:
        raise DataError("empty feature matrix")
    d = features.n_features
    written = []
    for i, j in combinations(range(d), 2):
        path = out_dir / f"pair_{i:02d}_{j:02d}.csv"
        _write_csv(
            path,
            [features.feature_names[i], features.feature_names[j], "label"],
            zip(features.values[:, i], features.values[:, j], features.labels),
        )
        written.append(path)
    for i in range(d):
        path = out_dir / f"marginal_{i:02d}.csv"
        _write_csv(
            path,
            [features.feature_names[i], "label"],
            zip(features.values[:, i], features.labels),
        )
        written.append(path)
    return written


def emit_pca_ratios(pca: PCA, path):
    """(component, ratio, cumulative) rows for the explained-ratio plot."""
    ratios = pca.explained_variance_ratio()
    rows = []
    cumulative = 0.0
    for i, ratio in enumerate(ratios, start=1):
        cumulative += ratio
        rows.append((i, ratio, cumulative))
    _write_csv(Path(path), ["component", "ratio", "cumulative"], rows)
    return path


def emit_baseline_cloud(lines, path):
    """(window_start, beta0, beta1) rows for the baseline line cloud."""
    if not lines:
        raise DataError("no baseline lines to emit")
    baseline_mod.write_lines_csv(lines, path)
    return path


def emit_cnn_embedding(pipeline: CnnPipeline, segments, path):
    """(x1, x2, label) rows: the 2-D embedding of each segment."""
    if not segments:
        raise DataError("no segments to embed")
    embedding = pipeline.embed(segments)
    labels = [int(s.label) for s in segments]
    _write_csv(
        Path(path),
        ["x1", "x2", "label"],
        zip(embedding[:, 0], embedding[:, 1], labels),
    )
    return path


def _write_csv(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.17g}" if isinstance(v, float) else v for v in row]
            )
