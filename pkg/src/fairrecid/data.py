"""Ingest, encode, split, and standardize the Broward County records CSV.

The loader keeps only the two studied race groups, drops rows that fail the
configured validity filters, and accounts for every dropped row in an ingest
report. Race never enters the feature matrix: it is mapped to the binary
group vector D (0 = white, 1 = black) and nothing else.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplitError,
    EmptyInputError,
    InputNotFoundError,
    MalformedHeaderError,
    ParseThresholdExceededError,
    SchemaMismatchError,
    UnknownCategoryError,
)

DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d")
DEFAULT_RECID_COLUMN = "two_year_recid"

REQUIRED_COLUMNS = (
    "race", "age", "sex", "priors_count", "c_charge_degree",
    "juv_fel_count", "juv_misd_count", "juv_other_count",
    "c_jail_in", "c_jail_out", "decile_score",
)


@dataclass
class RawRecord:
    """One defendant row after parsing and validity filtering."""

    age: int
    sex: str
    race: str
    priors_count: int
    charge_degree: str
    juv_fel_count: int
    juv_misd_count: int
    juv_other_count: int
    jail_in: datetime | None
    jail_out: datetime | None
    recid_label: int
    compas_decile: int | None


@dataclass
class FilterSpec:
    """Row-filter configuration for the loader.

    keep_races maps onto the group vector positionally: the first entry
    becomes group 0, the second group 1.
    """

    keep_races: tuple[str, str] = ("Caucasian", "African-American")
    require_recid_label: bool = True
    require_charge_degree: bool = True
    screening_window_days: int | None = None
    max_parse_failures: int = 50
    recid_column: str = DEFAULT_RECID_COLUMN


@dataclass
class IngestReport:
    """Row accounting for one load: what was read, kept, and dropped why."""

    rows_read: int = 0
    rows_kept: int = 0
    drops: dict = field(default_factory=dict)
    parse_failures: list = field(default_factory=list)  # [{"line": n, "error": msg}]

    def add_drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1

    def to_jsonable(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "drops": dict(sorted(self.drops.items())),
            "parse_failures": list(self.parse_failures),
        }


def _parse_int(raw: str, name: str, minimum: int | None = None,
               maximum: int | None = None) -> int:
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: {raw!r} is not an integer")
    if minimum is not None and value < minimum:
        raise ValueError(f"{name}: {value} below minimum {minimum}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name}: {value} above maximum {maximum}")
    return value


def _parse_date(raw: str, name: str) -> datetime | None:
    if raw is None or raw.strip() == "":
        return None
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(raw.strip(), fmt)
        except ValueError:
            continue
    raise ValueError(f"{name}: {raw!r} is not an ISO date")


def _parse_row(row: dict, filt: FilterSpec) -> RawRecord | str:
    """Parse one CSV row; returns a RawRecord or a drop reason string.

    Raises ValueError for malformed values (collected by the caller as a
    parse failure rather than a drop).
    """
    race = (row.get("race") or "").strip()
    if race not in filt.keep_races:
        return "race_not_studied"

    recid_raw = (row.get(filt.recid_column) or "").strip()
    if recid_raw == "" or recid_raw == "-1":
        if filt.require_recid_label:
            return "missing_recid_label"
        recid_raw = "0"
    charge = (row.get("c_charge_degree") or "").strip()
    if charge == "":
        if filt.require_charge_degree:
            return "missing_charge_degree"
        charge = "M"
    if charge not in ("F", "M"):
        raise ValueError(f"c_charge_degree: {charge!r} not in ('F', 'M')")

    if filt.screening_window_days is not None:
        if "days_b_screening_arrest" not in row:
            raise ValueError("days_b_screening_arrest column required by the "
                             "screening-window filter is missing")
        gap_raw = (row.get("days_b_screening_arrest") or "").strip()
        if gap_raw == "":
            return "missing_screening_gap"
        gap = float(gap_raw)
        if abs(gap) > filt.screening_window_days:
            return "outside_screening_window"

    sex = (row.get("sex") or "").strip()
    if sex not in ("Male", "Female"):
        raise ValueError(f"sex: {sex!r} not in ('Male', 'Female')")

    decile_raw = (row.get("decile_score") or "").strip()
    decile = None
    if decile_raw not in ("", "-1"):
        decile = _parse_int(decile_raw, "decile_score", 1, 10)

    return RawRecord(
        age=_parse_int(row.get("age"), "age", minimum=1),
        sex=sex,
        race=race,
        priors_count=_parse_int(row.get("priors_count"), "priors_count", minimum=0),
        charge_degree=charge,
        juv_fel_count=_parse_int(row.get("juv_fel_count"), "juv_fel_count", minimum=0),
        juv_misd_count=_parse_int(row.get("juv_misd_count"), "juv_misd_count", minimum=0),
        juv_other_count=_parse_int(row.get("juv_other_count"), "juv_other_count", minimum=0),
        jail_in=_parse_date(row.get("c_jail_in"), "c_jail_in"),
        jail_out=_parse_date(row.get("c_jail_out"), "c_jail_out"),
        recid_label=_parse_int(recid_raw, filt.recid_column, 0, 1),
        compas_decile=decile,
    )


def load_records(path: str | Path,
                 filt: FilterSpec | None = None) -> tuple[list[RawRecord], IngestReport]:
    """Read the records CSV, returning kept records plus the ingest report.

    Unparseable rows are collected (with line numbers) and tolerated up to
    filt.max_parse_failures; beyond that the whole load is rejected.
    """
    filt = filt or FilterSpec()
    p = Path(path)
    if not p.exists():
        raise InputNotFoundError(f"input file not found: {p}")

    report = IngestReport()
    records: list[RawRecord] = []
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedHeaderError(f"{p}: no header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if filt.recid_column not in reader.fieldnames:
            missing.append(filt.recid_column)
        if missing:
            raise MalformedHeaderError(f"{p}: missing required columns {missing}")
        for row in reader:
            report.rows_read += 1
            line = reader.line_num
            try:
                parsed = _parse_row(row, filt)
            except ValueError as exc:
                report.parse_failures.append({"line": line, "error": str(exc)})
                report.add_drop("parse_failure")
                if len(report.parse_failures) > filt.max_parse_failures:
                    raise ParseThresholdExceededError(
                        f"{p}: more than {filt.max_parse_failures} unparseable rows; "
                        f"last was line {line}: {exc}"
                    )
                continue
            if isinstance(parsed, str):
                report.add_drop(parsed)
                continue
            records.append(parsed)
            report.rows_kept += 1
    return records, report


# ------------------------------------------------------------------ encoding

CATEGORY_LEVELS = {"sex": ("Male", "Female"), "charge_degree": ("F", "M")}


@dataclass
class Schema:
    """Ordered encoded-column list with per-column kind flags."""

    names: list[str]
    continuous: list[bool]  # aligned with names; False marks one-hot columns

    @property
    def n_features(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Schema) and self.names == other.names
                and self.continuous == other.continuous)

    def to_jsonable(self) -> dict:
        return {"names": list(self.names), "continuous": list(self.continuous)}

    @classmethod
    def from_jsonable(cls, data: dict) -> "Schema":
        return cls(names=list(data["names"]), continuous=list(data["continuous"]))


def default_schema() -> Schema:
    names = []
    continuous = []
    for name in ("age",):
        names.append(name)
        continuous.append(True)
    for level in CATEGORY_LEVELS["sex"]:
        names.append(f"sex={level}")
        continuous.append(False)
    names.append("priors_count")
    continuous.append(True)
    for level in CATEGORY_LEVELS["charge_degree"]:
        names.append(f"charge_degree={level}")
        continuous.append(False)
    for name in ("juv_fel_count", "juv_misd_count", "juv_other_count", "length_of_stay"):
        names.append(name)
        continuous.append(True)
    return Schema(names=names, continuous=continuous)


@dataclass
class Dataset:
    """Model-ready matrix bundle: features X, labels Y, groups D, deciles."""

    X: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    compas_decile: np.ndarray  # float vector, NaN where the decile is absent
    schema: Schema

    def __post_init__(self):
        n = self.X.shape[0]
        if not (len(self.Y) == len(self.D) == len(self.compas_decile) == n):
            raise SchemaMismatchError("X, Y, D and compas_decile row counts differ")
        if self.X.shape[1] != self.schema.n_features:
            raise SchemaMismatchError("X column count does not match the schema")
        if len(self.D) and not np.isin(self.D, (0, 1)).all():
            raise SchemaMismatchError("D must be binary")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            X=self.X[indices].copy(),
            Y=self.Y[indices].copy(),
            D=self.D[indices].copy(),
            compas_decile=self.compas_decile[indices].copy(),
            schema=self.schema,
        )


def length_of_stay_days(record: RawRecord) -> float:
    """Jail stay length in days; 0 when either date is missing."""
    if record.jail_in is None or record.jail_out is None:
        return 0.0
    return (record.jail_out - record.jail_in).total_seconds() / 86400.0


def encode_record(record: RawRecord, schema: Schema) -> np.ndarray:
    """Encode one record into the schema's column order."""
    values = {
        "age": float(record.age),
        "priors_count": float(record.priors_count),
        "juv_fel_count": float(record.juv_fel_count),
        "juv_misd_count": float(record.juv_misd_count),
        "juv_other_count": float(record.juv_other_count),
        "length_of_stay": length_of_stay_days(record),
    }
    for fld, levels in CATEGORY_LEVELS.items():
        observed = getattr(record, fld)
        if observed not in levels:
            raise UnknownCategoryError(f"{fld}: unknown category {observed!r}")
        for level in levels:
            values[f"{fld}={level}"] = 1.0 if observed == level else 0.0
    try:
        return np.array([values[name] for name in schema.names], dtype=np.float64)
    except KeyError as exc:
        raise SchemaMismatchError(f"schema column {exc} has no encoder") from exc


def encode_dataset(records: list[RawRecord], schema: Schema | None = None) -> Dataset:
    """One-hot encode categoricals and assemble the model-ready Dataset.

    Race is consumed here: it becomes the group vector D and never appears
    as a feature column.
    """
    if not records:
        raise EmptyInputError("no records to encode")
    schema = schema or default_schema()
    races = sorted({r.race for r in records})
    if len(races) > 2:
        raise UnknownCategoryError(f"more than two race groups present: {races}")
    default_order = FilterSpec().keep_races
    if set(races) <= set(default_order):
        race_to_group = {race: default_order.index(race) for race in races}
    else:
        race_to_group = {race: i for i, race in enumerate(races)}

    X = np.stack([encode_record(r, schema) for r in records])
    Y = np.array([r.recid_label for r in records], dtype=np.int64)
    D = np.array([race_to_group[r.race] for r in records], dtype=np.int64)
    decile = np.array(
        [np.nan if r.compas_decile is None else float(r.compas_decile) for r in records],
        dtype=np.float64,
    )
    return Dataset(X=X, Y=Y, D=D, compas_decile=decile, schema=schema)


# ----------------------------------------------------------------- splitting


@dataclass
class SplitSpec:
    """Deterministic shuffled-partition parameters."""

    train_fraction: float = 0.788
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DegenerateSplitError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffled split into ceil(n * fraction) train rows and the rest.

    Both partitions keep the original row order internally, so row indices
    within each partition are stable references.
    """
    n = ds.n_rows
    if n < 2:
        raise DegenerateSplitError("need at least 2 rows to split")
    n_train = math.ceil(n * spec.train_fraction)
    if n_train <= 0 or n_train >= n:
        raise DegenerateSplitError(
            f"split of {n} rows at fraction {spec.train_fraction} leaves an empty partition"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return ds.subset(train_idx), ds.subset(test_idx)


# ----------------------------------------------------------- standardization


@dataclass
class Scaler:
    """Per-column affine transform fitted on the training partition.

    One-hot columns pass through untouched (mean 0, scale 1); constant
    continuous columns are centered but get scale 1 to avoid dividing by 0.
    """

    schema: Schema
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.schema.n_features:
            raise SchemaMismatchError("matrix width does not match the scaler schema")
        return (X - self.mean) / self.scale

    def transform_record(self, record: RawRecord) -> np.ndarray:
        return self.transform(encode_record(record, self.schema)[None, :])[0]

    def to_jsonable(self) -> dict:
        return {
            "schema": self.schema.to_jsonable(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "Scaler":
        return cls(
            schema=Schema.from_jsonable(data["schema"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
        )


def standardize_features(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, Scaler]:
    """Z-score continuous columns using train-set statistics only."""
    if train.schema != test.schema:
        raise SchemaMismatchError("train and test schemas differ")
    mean = np.zeros(train.schema.n_features)
    scale = np.ones(train.schema.n_features)
    for j, is_cont in enumerate(train.schema.continuous):
        if not is_cont:
            continue
        col = train.X[:, j]
        mean[j] = col.mean()
        std = col.std()
        scale[j] = std if std > 0.0 else 1.0
    scaler = Scaler(schema=train.schema, mean=mean, scale=scale)
    train_std = Dataset(
        X=scaler.transform(train.X), Y=train.Y.copy(), D=train.D.copy(),
        compas_decile=train.compas_decile.copy(), schema=train.schema,
    )
    test_std = Dataset(
        X=scaler.transform(test.X), Y=test.Y.copy(), D=test.D.copy(),
        compas_decile=test.compas_decile.copy(), schema=test.schema,
    )
    return train_std, test_std, scaler


# -------------------------------------------------------------- cache on disk


def save_dataset_cache(directory: str | Path, train: Dataset, test: Dataset,
                       scaler: Scaler, report: IngestReport,
                       extra: dict | None = None) -> None:
    """Persist a prepared train/test pair as .npy files plus a JSON sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for tag, ds in (("train", train), ("test", test)):
        np.save(d / f"{tag}_X.npy", ds.X)
        np.save(d / f"{tag}_Y.npy", ds.Y)
        np.save(d / f"{tag}_D.npy", ds.D)
        np.save(d / f"{tag}_decile.npy", ds.compas_decile)
    sidecar = {
        "scaler": scaler.to_jsonable(),
        "ingest_report": report.to_jsonable(),
        "extra": extra or {},
    }
    (d / "prep.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_dataset_cache(directory: str | Path) -> tuple[Dataset, Dataset, Scaler, dict]:
    """Load a cache written by save_dataset_cache."""
    d = Path(directory)
    sidecar_path = d / "prep.json"
    if not sidecar_path.exists():
        raise InputNotFoundError(f"no dataset cache at {d}")
    sidecar = json.loads(sidecar_path.read_text())
    scaler = Scaler.from_jsonable(sidecar["scaler"])
    out = []
    for tag in ("train", "test"):
        out.append(Dataset(
            X=np.load(d / f"{tag}_X.npy"),
            Y=np.load(d / f"{tag}_Y.npy"),
            D=np.load(d / f"{tag}_D.npy"),
            compas_decile=np.load(d / f"{tag}_decile.npy"),
            schema=scaler.schema,
        ))
    return out[0], out[1], scaler, sidecar
