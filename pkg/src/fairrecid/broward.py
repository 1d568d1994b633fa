"""Statistical reconstruction of the Broward County pretrial records file.

The real ProPublica-compiled CSV cannot be redistributed here, so this
module synthesizes a stand-in with the same column layout and aggregate
statistics: the race mix of the study population, per-race COMPAS decile
distributions, decile-conditional two-year recidivism rates (nearly
race-independent, i.e. the score is calibrated), and the resulting
high-risk/error-rate disparities and decile AUC of the published corpus.
Rows are synthetic people, not real ones.

Counts are allocated by deterministic largest-remainder quotas inside each
(race, decile, outcome) cell, so the generated file realizes the target
joint distribution almost exactly at any size; sampling noise only enters
through the per-row feature draws and the train/test subsampling done by
consumers. Everything is reproducible from the seed.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

DEFAULT_ROWS = 12432
DEFAULT_SEED = 7

# share of the pretrial file belonging to the two studied race groups, and
# the white share within them
STUDY_SHARE = 0.84
WHITE_SHARE_OF_STUDY = 0.41
EXTRA_RACES = (("Hispanic", 0.56), ("Other", 0.44))  # split of the remainder

# P(decile | race) for the studied groups
DECILE_PMF_WHITE = np.array([
    0.2751, 0.2031, 0.1499, 0.1106, 0.0816,
    0.0603, 0.0445, 0.0328, 0.0242, 0.0179,
])
DECILE_PMF_BLACK = np.array([
    0.1618, 0.1435, 0.1273, 0.1129, 0.1001,
    0.0888, 0.0788, 0.0699, 0.0620, 0.0550,
])

# P(two-year recidivism | decile, race); the small white/black offset keeps
# the score calibrated to within a few points per decile
RECID_RATE_WHITE = np.array([
    0.2741, 0.2910, 0.3079, 0.3249, 0.5725,
    0.5925, 0.6125, 0.6325, 0.6525, 0.6725,
])
RECID_RATE_BLACK = np.array([
    0.2421, 0.2590, 0.2759, 0.2929, 0.5325,
    0.5525, 0.5725, 0.5925, 0.6125, 0.6325,
])

COLUMNS = (
    "id", "sex", "age", "race",
    "juv_fel_count", "juv_misd_count", "juv_other_count", "priors_count",
    "days_b_screening_arrest", "c_jail_in", "c_jail_out", "c_charge_degree",
    "decile_score", "two_year_recid",
)

_EPOCH = datetime(2013, 1, 1)


def _quota_counts(total: int, probs: np.ndarray) -> np.ndarray:
    """Integer allocation of `total` across cells by largest remainder."""
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    raw = probs * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _study_cells(n_study: int) -> list[tuple[str, int, int, int]]:
    """(race, decile, recid, count) quota cells for the two studied groups."""
    n_white = int(round(n_study * WHITE_SHARE_OF_STUDY))
    n_black = n_study - n_white
    cells = []
    for race, n_race, pmf, rates in (
        ("Caucasian", n_white, DECILE_PMF_WHITE, RECID_RATE_WHITE),
        ("African-American", n_black, DECILE_PMF_BLACK, RECID_RATE_BLACK),
    ):
        decile_counts = _quota_counts(n_race, pmf)
        for d in range(10):
            n_cell = int(decile_counts[d])
            n_pos = int(round(n_cell * rates[d]))
            cells.append((race, d + 1, 1, n_pos))
            cells.append((race, d + 1, 0, n_cell - n_pos))
    return cells


def _extra_cells(n_extra: int) -> list[tuple[str, int, int, int]]:
    """Out-of-study races; filtered away by consumers, kept for realism."""
    cells = []
    shares = np.array([s for _, s in EXTRA_RACES])
    for (race, _), n_race in zip(EXTRA_RACES, _quota_counts(n_extra, shares)):
        decile_counts = _quota_counts(int(n_race), DECILE_PMF_WHITE)
        for d in range(10):
            n_cell = int(decile_counts[d])
            n_pos = int(round(n_cell * RECID_RATE_WHITE[d]))
            cells.append((race, d + 1, 1, n_pos))
            cells.append((race, d + 1, 0, n_cell - n_pos))
    return cells


def _fmt_date(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%d %H:%M:%S")


def _row_features(rng: np.random.Generator, race: str, decile: int, recid: int) -> dict:
    """Draw one defendant's attributes conditioned on (race, decile, outcome)."""
    black = 1.0 if race == "African-American" else 0.0
    d0 = decile - 1

    male = rng.random() < (0.74 + 0.016 * d0)
    mean_excess = max(26.0 - 1.1 * d0 - 4.2 * recid, 4.0)
    age = int(np.clip(18 + round(rng.gamma(2.5, mean_excess / 2.5)), 18, 80))

    priors_mean = np.exp(-0.66 + 0.16 * d0 + 0.54 * recid + 0.45 * black)
    priors = int(rng.poisson(rng.gamma(1.5, priors_mean / 1.5)))

    juv_scale = ((1.0 + 0.20 * d0) * (1.7 if age < 23 else 0.55)
                 * (1.25 if black else 0.9) * (1.5 if recid else 0.75))
    juv_fel = int(rng.poisson(0.035 * juv_scale))
    juv_misd = int(rng.poisson(0.05 * juv_scale))
    juv_other = int(rng.poisson(0.07 * juv_scale))

    z = 0.05 + 0.08 * d0 + 0.25 * black + 0.12 * recid - (0.1 if age > 45 else 0.0)
    felony = rng.random() < 1.0 / (1.0 + np.exp(-z))

    if rng.random() < 0.025:
        jail_in_s, jail_out_s = "", ""   # dates genuinely missing in the source
    else:
        stay_mu = 0.8 + 0.15 * d0 + (0.4 if felony else 0.0) + 0.12 * black + 0.28 * recid
        stay = int(np.clip(round(np.exp(rng.normal(stay_mu, 1.25))), 0, 750))
        jail_in = _EPOCH + timedelta(days=int(rng.integers(0, 730)),
                                     hours=int(rng.integers(0, 24)))
        jail_in_s = _fmt_date(jail_in)
        jail_out_s = _fmt_date(jail_in + timedelta(days=stay, hours=int(rng.integers(0, 24))))

    u = rng.random()
    if u < 0.92:
        gap = int(rng.integers(-2, 3))
    elif u < 0.98:
        gap = int(rng.integers(3, 31)) * (1 if rng.random() < 0.5 else -1)
    else:
        gap = int(rng.integers(31, 501)) * (1 if rng.random() < 0.5 else -1)

    return {
        "sex": "Male" if male else "Female",
        "age": age,
        "race": race,
        "juv_fel_count": juv_fel,
        "juv_misd_count": juv_misd,
        "juv_other_count": juv_other,
        "priors_count": priors,
        "days_b_screening_arrest": gap,
        "c_jail_in": jail_in_s,
        "c_jail_out": jail_out_s,
        "c_charge_degree": "F" if felony else "M",
        "decile_score": decile,
        "two_year_recid": recid,
    }


def _dirty_rows(rng: np.random.Generator, n_rows: int, start_id: int) -> list[dict]:
    """Rows exercising the loader's drop/parse-failure paths."""
    per_kind = max(n_rows // 800, 2)
    rows = []
    races = ("Caucasian", "African-American", "Hispanic")
    for kind in range(4):
        for i in range(per_kind):
            race = races[(kind + i) % len(races)]
            row = _row_features(rng, race, int(rng.integers(1, 11)), int(rng.integers(0, 2)))
            if kind == 0:
                row["two_year_recid"] = ""          # missing label -> dropped
            elif kind == 1:
                row["c_charge_degree"] = ""         # missing degree -> dropped
            elif kind == 2:
                row["age"] = "unknown"              # parse failure
            else:
                row["c_jail_in"] = "not a date"     # parse failure
            rows.append(row)
    for i, row in enumerate(rows):
        row["id"] = start_id + i
    return rows


def generate_rows(n_rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED,
                  messy: bool = True) -> list[dict]:
    """Build the synthetic corpus as a list of CSV row dicts.

    n_rows counts the clean rows; when messy is set, a small batch of
    malformed/incomplete rows is appended on top so ingest accounting has
    something to report.
    """
    if n_rows < 100:
        raise ValueError("need at least 100 rows for the quota allocation to make sense")
    rng = np.random.default_rng(seed)
    n_study = int(round(n_rows * STUDY_SHARE))
    cells = _study_cells(n_study) + _extra_cells(n_rows - n_study)
    tags = []
    for race, decile, recid, count in cells:
        tags.extend([(race, decile, recid)] * count)
    order = rng.permutation(len(tags))
    rows = []
    for new_id, k in enumerate(order):
        race, decile, recid = tags[k]
        row = _row_features(rng, race, decile, recid)
        row["id"] = new_id + 1
        rows.append(row)
    if messy:
        rows.extend(_dirty_rows(rng, n_rows, start_id=len(rows) + 1))
    return rows


def write_csv(path: str | Path, n_rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED,
              messy: bool = True) -> dict:
    """Write the synthetic corpus to `path`; returns basic counts."""
    rows = generate_rows(n_rows=n_rows, seed=seed, messy=messy)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    study = sum(1 for r in rows if r["race"] in ("Caucasian", "African-American"))
    return {"rows_written": len(rows), "study_race_rows": study, "seed": seed}
