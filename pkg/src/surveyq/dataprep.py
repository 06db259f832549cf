"""Categorical survey data: ingestion, chi-squared feature ranking, encoding,
splitting, balanced resampling, and synthetic dataset generation.

All functions are pure with respect to their inputs; random draws always come
from a caller-supplied seed or ``numpy.random.Generator``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    DataError,
    EncodingError,
    InvalidTableError,
    UnbalancedSourceError,
)

MAX_CATEGORIES = 10
LABEL_COLUMN = "label"


@dataclass(frozen=True)
class FeatureSchema:
    """One categorical survey question: its name, category count, and wording."""

    name: str
    num_categories: int
    prompt: str = ""
    choice_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not (2 <= self.num_categories <= MAX_CATEGORIES):
            raise DataError(
                f"feature {self.name!r}: num_categories must be in "
                f"[2, {MAX_CATEGORIES}], got {self.num_categories}"
            )
        if not self.prompt:
            object.__setattr__(self, "prompt", f"{self.name}?")
        if not self.choice_labels:
            object.__setattr__(
                self,
                "choice_labels",
                tuple(f"option {i}" for i in range(self.num_categories)),
            )
        if len(self.choice_labels) != self.num_categories:
            raise DataError(
                f"feature {self.name!r}: {len(self.choice_labels)} choice labels "
                f"for {self.num_categories} categories"
            )


@dataclass(frozen=True)
class Record:
    """One fully-answered survey row: category codes plus a binary label."""

    features: tuple[int, ...]
    label: int


@dataclass(frozen=True)
class Dataset:
    schema: tuple[FeatureSchema, ...]
    records: tuple[Record, ...]
    feature_order: tuple[int, ...] = ()
    dropped: int = 0  # rows rejected during CSV ingestion

    def __post_init__(self):
        if not self.feature_order:
            object.__setattr__(
                self, "feature_order", tuple(range(len(self.schema)))
            )
        if sorted(self.feature_order) != list(range(len(self.schema))):
            raise DataError("feature_order is not a permutation of the schema")

    @property
    def num_features(self) -> int:
        return len(self.schema)

    @property
    def max_categories(self) -> int:
        return max(f.num_categories for f in self.schema)


class ChiSquareResult(NamedTuple):
    statistic: float
    dof: int
    p_value: float


@dataclass(frozen=True)
class FeatureRank:
    """Chi-squared association of one feature with the label."""

    index: int
    name: str
    statistic: float
    dof: int
    p_value: float


# ---------------------------------------------------------------------------
# chi-squared test of independence
# ---------------------------------------------------------------------------

_GAMMA_EPS = 1e-14
_GAMMA_ITMAX = 500


def _gamma_p_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series (x < a+1)."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_GAMMA_ITMAX):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a+1).

    Modified Lentz's method.
    """
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x), a > 0, x >= 0.

    Series expansion below the crossover x = a+1, continued fraction above;
    absolute error well under 1e-10 on both branches.
    """
    if a <= 0:
        raise ValueError(f"gamma shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"gamma argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_contfrac(a, x)


def chi2_sf(statistic: float, dof: int) -> float:
    """Survival function of the chi-squared distribution, 1 - CDF(statistic; dof)."""
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    if statistic < 0:
        raise ValueError(f"statistic must be nonnegative, got {statistic}")
    a = dof / 2.0
    x = statistic / 2.0
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi_square(observed: Sequence[Sequence[float]] | np.ndarray) -> ChiSquareResult:
    """Pearson's chi-squared test of independence on an r x s contingency table.

    Returns (statistic, dof, p_value). Raises InvalidTableError for negative
    counts or a zero row/column total.
    """
    obs = np.asarray(observed, dtype=float)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise InvalidTableError(f"need an r x s table with r, s >= 2, got shape {obs.shape}")
    if np.any(obs < 0):
        raise InvalidTableError("contingency table has negative counts")
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    if np.any(row == 0) or np.any(col == 0):
        raise InvalidTableError("contingency table has a zero row or column total")
    n = obs.sum()
    expected = np.outer(row, col) / n
    statistic = float(((obs - expected) ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return ChiSquareResult(statistic, dof, chi2_sf(statistic, dof))


def contingency_table(dataset: Dataset, feature_index: int) -> np.ndarray:
    """Feature-by-label count table over the full schema category range."""
    schema = dataset.schema[feature_index]
    n_classes = 1 + max(r.label for r in dataset.records)
    table = np.zeros((schema.num_categories, max(n_classes, 2)), dtype=float)
    for r in dataset.records:
        table[r.features[feature_index], r.label] += 1
    return table


def rank_features(dataset: Dataset) -> tuple[Dataset, list[FeatureRank]]:
    """Order features by chi-squared association with the label, best first.

    Sort key: ascending p-value, ties broken by descending statistic, then by
    original index. Features constant over the dataset (or otherwise yielding a
    degenerate table) rank last with p = 1 rather than aborting.
    """
    if not dataset.records:
        raise DataError("cannot rank features of an empty dataset")
    ranks = []
    for i, feat in enumerate(dataset.schema):
        table = contingency_table(dataset, i)
        # unobserved categories / classes contribute nothing to the test
        table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        if table.shape[0] < 2 or table.shape[1] < 2:
            ranks.append(FeatureRank(i, feat.name, 0.0, 0, 1.0))
            continue
        stat, dof, p = chi_square(table)
        ranks.append(FeatureRank(i, feat.name, stat, dof, p))
    order = sorted(ranks, key=lambda r: (r.p_value, -r.statistic, r.index))
    ranked = replace(dataset, feature_order=tuple(r.index for r in order))
    return ranked, [ranks[i] for i in ranked.feature_order]


# ---------------------------------------------------------------------------
# state encoding
# ---------------------------------------------------------------------------


def encode_state(
    schema: Sequence[FeatureSchema],
    answered: Mapping[int, int],
    dtype=np.float32,
) -> np.ndarray:
    """One-hot observation grid: one row per feature, padded to the widest feature.

    Unanswered rows are all zero; answered rows carry a single 1.0 at the
    answer's category column.
    """
    m = len(schema)
    width = max(f.num_categories for f in schema)
    state = np.zeros((m, width), dtype=dtype)
    for feature, code in answered.items():
        if not 0 <= feature < m:
            raise EncodingError(f"feature index {feature} outside schema of size {m}")
        if not 0 <= code < schema[feature].num_categories:
            raise EncodingError(
                f"code {code} out of range for feature "
                f"{schema[feature].name!r} ({schema[feature].num_categories} categories)"
            )
        state[feature, code] = 1.0
    return state


# ---------------------------------------------------------------------------
# splitting and resampling
# ---------------------------------------------------------------------------


def split(dataset: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniform random record-level split; disjoint, exhaustive, seed-deterministic."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(dataset.records)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    test_idx = set(perm[:n_test].tolist())
    train_records = tuple(r for i, r in enumerate(dataset.records) if i not in test_idx)
    test_records = tuple(dataset.records[i] for i in sorted(test_idx))
    return (
        replace(dataset, records=train_records),
        replace(dataset, records=test_records),
    )


class BalancedSampler:
    """Draws records class-first: class uniform over {0..c-1}, record uniform
    within the class, with replacement."""

    def __init__(self, dataset: Dataset, n_classes: int = 2):
        self.records = dataset.records
        self.by_class = [
            [i for i, r in enumerate(dataset.records) if r.label == c]
            for c in range(n_classes)
        ]
        missing = [c for c, idx in enumerate(self.by_class) if not idx]
        if missing:
            raise UnbalancedSourceError(
                f"dataset has no records of class(es) {missing}; cannot balance"
            )

    def draw(self, rng: np.random.Generator) -> Record:
        cls = int(rng.integers(len(self.by_class)))
        idx = self.by_class[cls]
        return self.records[idx[int(rng.integers(len(idx)))]]


def balanced_sample(dataset: Dataset, n: int, rng: np.random.Generator) -> list[Record]:
    """n records drawn with equal class probability (with replacement)."""
    if n == 0:
        return []
    sampler = BalancedSampler(dataset)
    return [sampler.draw(rng) for _ in range(n)]


# ---------------------------------------------------------------------------
# CSV and schema files
# ---------------------------------------------------------------------------


def load_schema(path: str | Path) -> tuple[FeatureSchema, ...]:
    """Schema JSON: a list of {name, num_categories, prompt?, choice_labels?}."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"schema file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"schema file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, list) or not raw:
        raise DataError(f"schema file {path} must hold a non-empty list of features")
    features = []
    for entry in raw:
        try:
            features.append(
                FeatureSchema(
                    name=entry["name"],
                    num_categories=int(entry["num_categories"]),
                    prompt=entry.get("prompt", ""),
                    choice_labels=tuple(entry.get("choice_labels", ())),
                )
            )
        except (KeyError, TypeError) as e:
            raise DataError(f"schema file {path}: bad feature entry {entry!r}") from e
    return tuple(features)


def save_schema(schema: Sequence[FeatureSchema], path: str | Path) -> None:
    payload = [
        {
            "name": f.name,
            "num_categories": f.num_categories,
            "prompt": f.prompt,
            "choice_labels": list(f.choice_labels),
        }
        for f in schema
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_csv(path: str | Path, schema: Sequence[FeatureSchema]) -> Dataset:
    """Parse a dataset CSV (feature columns by schema name plus a ``label`` column).

    Rows with missing cells, non-integer cells, out-of-range codes, or labels
    outside {0, 1} are dropped; the count of dropped rows is kept on the
    returned dataset.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"CSV file {path} is empty") from None
        expected = [f.name for f in schema] + [LABEL_COLUMN]
        if [h.strip() for h in header] != expected:
            raise DataError(
                f"CSV header mismatch in {path}: expected {expected}, got {header}"
            )
        records = []
        dropped = 0
        for row in reader:
            rec = _parse_row(row, schema)
            if rec is None:
                dropped += 1
            else:
                records.append(rec)
    if not records:
        raise DataError(f"CSV file {path} contains no valid rows ({dropped} dropped)")
    return Dataset(schema=tuple(schema), records=tuple(records), dropped=dropped)


def _parse_row(row: list[str], schema: Sequence[FeatureSchema]) -> Record | None:
    if len(row) != len(schema) + 1:
        return None
    try:
        values = [int(cell) for cell in row]
    except ValueError:
        return None
    codes, label = values[:-1], values[-1]
    if label not in (0, 1):
        return None
    for code, feat in zip(codes, schema):
        if not 0 <= code < feat.num_categories:
            return None
    return Record(features=tuple(codes), label=label)


def save_csv(dataset: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f.name for f in dataset.schema] + [LABEL_COLUMN])
        for r in dataset.records:
            writer.writerow(list(r.features) + [r.label])


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthFeature:
    """Class-conditional category distribution for one synthetic feature."""

    name: str
    num_categories: int
    class_probs: tuple[tuple[float, ...], ...]  # [class][category]
    prompt: str = ""
    choice_labels: tuple[str, ...] = ()

    def __post_init__(self):
        for c, probs in enumerate(self.class_probs):
            if len(probs) != self.num_categories:
                raise DataError(
                    f"synthetic feature {self.name!r}: class {c} has "
                    f"{len(probs)} probabilities for {self.num_categories} categories"
                )
            _check_prob_vector(probs, f"feature {self.name!r} class {c}")


@dataclass(frozen=True)
class SynthSpec:
    """Generative description of a synthetic dataset: class prior plus
    per-feature class-conditional distributions (features independent given
    the class)."""

    class_prior: tuple[float, ...]
    features: tuple[SynthFeature, ...]

    def __post_init__(self):
        _check_prob_vector(self.class_prior, "class prior")
        for f in self.features:
            if len(f.class_probs) != len(self.class_prior):
                raise DataError(
                    f"synthetic feature {f.name!r} has {len(f.class_probs)} "
                    f"class rows but the prior has {len(self.class_prior)} classes"
                )

    def schema(self) -> tuple[FeatureSchema, ...]:
        return tuple(
            FeatureSchema(f.name, f.num_categories, f.prompt, f.choice_labels)
            for f in self.features
        )


def _check_prob_vector(probs: Sequence[float], what: str) -> None:
    if any(p < 0 for p in probs):
        raise DataError(f"{what}: negative probability in {probs}")
    total = float(sum(probs))
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise DataError(f"{what}: probabilities sum to {total}, expected 1")


def load_synth_spec(path: str | Path) -> SynthSpec:
    path = Path(path)
    if not path.exists():
        raise DataError(f"synthetic spec file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"synthetic spec {path} is not valid JSON: {e}") from e
    try:
        features = tuple(
            SynthFeature(
                name=f["name"],
                num_categories=int(f["num_categories"]),
                class_probs=tuple(tuple(float(p) for p in row) for row in f["class_probs"]),
                prompt=f.get("prompt", ""),
                choice_labels=tuple(f.get("choice_labels", ())),
            )
            for f in raw["features"]
        )
        return SynthSpec(
            class_prior=tuple(float(p) for p in raw["class_prior"]), features=features
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"synthetic spec {path}: missing or malformed field ({e})") from e


def save_synth_spec(spec: SynthSpec, path: str | Path) -> None:
    payload = {
        "class_prior": list(spec.class_prior),
        "features": [
            {
                "name": f.name,
                "num_categories": f.num_categories,
                "class_probs": [list(row) for row in f.class_probs],
                "prompt": f.prompt,
                "choice_labels": list(f.choice_labels),
            }
            for f in spec.features
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def synth_generate(spec: SynthSpec, n: int, seed: int = 0) -> Dataset:
    """Sample n i.i.d. records: class from the prior, then each feature code from
    its class-conditional distribution. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    prior = np.asarray(spec.class_prior)
    prior = prior / prior.sum()
    per_feature = [
        [np.asarray(row) / sum(row) for row in f.class_probs] for f in spec.features
    ]
    labels = rng.choice(len(prior), size=n, p=prior)
    columns = np.empty((len(spec.features), n), dtype=int)
    for i, dists in enumerate(per_feature):
        for c, dist in enumerate(dists):
            mask = labels == c
            count = int(mask.sum())
            if count:
                columns[i, mask] = rng.choice(len(dist), size=count, p=dist)
    records = tuple(
        Record(features=tuple(int(columns[i, j]) for i in range(len(spec.features))),
               label=int(labels[j]))
        for j in range(n)
    )
    return Dataset(schema=spec.schema(), records=records)
