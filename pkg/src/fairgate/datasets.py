"""Built-in cohorts: schema definitions for the three cardiac datasets and
seeded synthetic replicas for offline use.

The replicas reproduce the published cohort shapes (row counts, sex margins,
disease rates by sex, feature distributions) so the full pipeline — biased
baseline, reweighting, gates, drift, decision curves — exercises the same
regimes as the real data. When the real CSV files are present (see
``scripts/fetch_datasets.py``) loaders prefer them; every artifact records
which source it saw.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tabular import ColumnSchema, DataTable, Schema

CLEVELAND_SCHEMA = Schema(
    (
        ColumnSchema("age", "numeric"),
        ColumnSchema("sex", "sensitive", audited=True),
        ColumnSchema("cp", "categorical", categories=("1", "2", "3", "4")),
        ColumnSchema("trestbps", "numeric"),
        ColumnSchema("chol", "numeric"),
        ColumnSchema("fbs", "numeric"),
        ColumnSchema("restecg", "categorical", categories=("0", "1", "2")),
        ColumnSchema("thalach", "numeric"),
        ColumnSchema("exang", "numeric"),
        ColumnSchema("oldpeak", "numeric"),
        ColumnSchema("slope", "categorical", categories=("1", "2", "3")),
        ColumnSchema("ca", "numeric"),
        ColumnSchema("thal", "categorical", categories=("3", "6", "7")),
        ColumnSchema("target", "target"),
    )
)

# Statlog carries the same 13 clinical variables.
STATLOG_SCHEMA = CLEVELAND_SCHEMA

KAGGLE_SCHEMA = Schema(
    (
        ColumnSchema("age", "numeric"),
        ColumnSchema("gender", "sensitive", audited=True),
        ColumnSchema("height", "numeric"),
        ColumnSchema("weight", "numeric"),
        ColumnSchema("ap_hi", "numeric"),
        ColumnSchema("ap_lo", "numeric"),
        ColumnSchema("cholesterol", "categorical", categories=("1", "2", "3")),
        ColumnSchema("gluc", "categorical", categories=("1", "2", "3")),
        ColumnSchema("smoke", "numeric"),
        ColumnSchema("alco", "numeric"),
        ColumnSchema("active", "numeric"),
        ColumnSchema("cardio", "target"),
    )
)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _heart_cohort(rng: np.random.Generator, group_sizes: dict[int, int],
                  positives: dict[int, int], separation: float,
                  missing_rows: int) -> list[tuple]:
    """Cohort with exact (sex, disease) margins and sex-exchangeable severity.

    Disease counts per sex are fixed, then the latent severity h is drawn
    from N(+-separation, 1) conditional on disease only, identically for both
    sexes. The whole sex-label association therefore lives in the margins,
    which is precisely the channel inverse-conditional-frequency reweighting
    removes; severity-given-disease (and so every clinical feature) is
    exchangeable across the sexes.
    """
    s_parts, y_parts = [], []
    for sex, size in group_sizes.items():
        labels = np.zeros(size, dtype=np.int64)
        labels[: positives[sex]] = 1
        rng.shuffle(labels)
        s_parts.append(np.full(size, sex, dtype=np.int64))
        y_parts.append(labels)
    s = np.concatenate(s_parts)
    y = np.concatenate(y_parts)
    order = rng.permutation(s.size)
    s, y = s[order], y[order]
    h = separation * (2 * y - 1) + rng.normal(0.0, 1.0, s.size)
    return _heart_rows(rng, s, y, h, missing_rows)


def _heart_rows(rng: np.random.Generator, s: np.ndarray, y: np.ndarray,
                h: np.ndarray, missing_rows: int) -> list[tuple]:
    """Clinical features are noisy views of the severity factor only; a few
    carry most of the signal (ST depression, max heart rate, chest pain),
    the rest are close to noise, as in the source cohorts."""
    n = s.size
    age = np.clip(np.round(54 + 2.0 * h + rng.normal(0, 8.5, n)), 29, 77)
    trestbps = np.clip(np.round(131 + 3.0 * h + rng.normal(0, 17, n)), 94, 200)
    chol = np.clip(np.round(247 + 6.0 * h + rng.normal(0, 50, n)), 126, 564)
    thalach = np.clip(np.round(149 - 11.0 * h + rng.normal(0, 18, n)), 71, 202)
    oldpeak = np.round(np.clip(1.05 + 0.55 * h + rng.normal(0, 0.9, n), 0.0, 6.2), 1)
    ca = np.clip(np.round(0.5 + 0.35 * h + rng.normal(0, 0.95, n)), 0, 3)
    fbs = (rng.random(n) < 0.15).astype(float)
    exang = (rng.random(n) < _sigmoid(-0.9 + 0.55 * h)).astype(float)
    cp4 = rng.random(n) < _sigmoid(-0.4 + 0.7 * h)
    cp_other = rng.choice(np.array(["1", "2", "3"]), size=n, p=[0.15, 0.45, 0.40])
    cp = np.where(cp4, "4", cp_other)
    restecg = np.where(rng.random(n) < _sigmoid(-0.15 + 0.2 * h), "2",
                       np.where(rng.random(n) < 0.01, "1", "0"))
    slope = np.where(rng.random(n) < _sigmoid(-0.9 - 0.5 * h), "1",
                     np.where(rng.random(n) < 0.07, "3", "2"))
    thal7 = rng.random(n) < _sigmoid(-0.55 + 0.5 * h)
    thal = np.where(thal7, "7", np.where(rng.random(n) < 0.12, "6", "3"))
    rows = []
    for i in range(n):
        rows.append((
            float(age[i]), float(s[i]), str(cp[i]), float(trestbps[i]),
            float(chol[i]), float(fbs[i]), str(restecg[i]), float(thalach[i]),
            float(exang[i]), float(oldpeak[i]), str(slope[i]), float(ca[i]),
            str(thal[i]), float(y[i]),
        ))
    # a handful of missing ca/thal cells, like the published file
    ca_idx = CLEVELAND_SCHEMA.index("ca")
    thal_idx = CLEVELAND_SCHEMA.index("thal")
    for i in rng.choice(n, size=missing_rows, replace=False):
        cells = list(rows[i])
        cells[ca_idx if i % 2 == 0 else thal_idx] = None
        rows[i] = tuple(cells)
    return rows


def cleveland_like(seed: int = 41) -> DataTable:
    """303-row replica of the Cleveland cohort: 206 male / 97 female with
    disease counts 105 and 37, a visibly male-skewed label margin. Clinical
    signal is deliberately modest, as in the source cohort, which makes the
    baseline model lean on the sex margin."""
    rng = np.random.default_rng([0xC1E5, seed])
    rows = _heart_cohort(rng, {1: 206, 0: 97}, {1: 105, 0: 37},
                         separation=0.55, missing_rows=6)
    return DataTable(CLEVELAND_SCHEMA, rows)


def statlog_like(seed: int = 5) -> DataTable:
    """270-row replica of the Statlog cohort (no missing values), with a
    crisper clinical signal than the Cleveland replica."""
    rng = np.random.default_rng([0x57A7, seed])
    rows = _heart_cohort(rng, {1: 183, 0: 87}, {1: 95, 0: 25},
                         separation=1.2, missing_rows=0)
    return DataTable(STATLOG_SCHEMA, rows)


def kaggle_like(n: int = 70_000, seed: int = 17) -> DataTable:
    """Large cardiovascular replica: ~0.49 prevalence, systolic pressure the
    dominant risk driver, fairness already within gates."""
    rng = np.random.default_rng([0xCA66, seed])
    bp = rng.normal(0.0, 1.0, n)
    ap_hi = np.round(126.5 + 16.0 * bp + rng.normal(0, 7.0, n))
    ap_lo = np.round(81.5 + 8.0 * bp + rng.normal(0, 7.5, n))
    chol_level = np.clip(np.floor(rng.random(n) * 1.35 + 0.45 * _sigmoid(bp)), 0, 2)
    gluc_level = np.clip(np.floor(rng.random(n) * 1.25 + 0.2 * _sigmoid(bp)), 0, 2)
    age = np.round(52.8 + 2.2 * bp + rng.normal(0, 6.3, n))
    gender = (rng.random(n) < 0.35).astype(float)  # 1 = male, ~35%
    height = np.round(161.5 + 9.5 * gender + rng.normal(0, 7.0, n))
    weight = np.round(72.0 + 6.0 * gender + 2.0 * bp + rng.normal(0, 13.0, n), 1)
    smoke = (rng.random(n) < 0.088).astype(float)
    alco = (rng.random(n) < 0.054).astype(float)
    active = (rng.random(n) < 0.803).astype(float)
    logit = (
        -0.265
        + 1.55 * bp
        + 0.55 * chol_level
        + 0.14 * gluc_level
        + 0.035 * (age - 52.8)
        + 0.012 * (weight - 72.0)
        - 0.12 * active
    )
    y = (rng.random(n) < _sigmoid(logit)).astype(float)
    rows = []
    for i in range(n):
        rows.append((
            float(age[i]), float(gender[i]), float(height[i]), float(weight[i]),
            float(ap_hi[i]), float(ap_lo[i]), str(int(chol_level[i] + 1)),
            str(int(gluc_level[i] + 1)), float(smoke[i]), float(alco[i]),
            float(active[i]), float(y[i]),
        ))
    return DataTable(KAGGLE_SCHEMA, rows)


def load_or_replicate(name: str, data_dir: str | Path | None = None,
                      n: int | None = None) -> tuple[DataTable, str]:
    """Return (table, source) where source is 'real' when a fetched CSV is
    available under ``data_dir`` and 'replica' otherwise."""
    from .tabular import load_csv

    paths = {
        "cleveland": ("cleveland.csv", CLEVELAND_SCHEMA),
        "statlog": ("statlog.csv", STATLOG_SCHEMA),
        "kaggle": ("kaggle_cardio.csv", KAGGLE_SCHEMA),
    }
    if name not in paths:
        raise ValueError(f"unknown dataset {name!r}")
    filename, schema = paths[name]
    if data_dir is not None:
        candidate = Path(data_dir) / filename
        if candidate.exists():
            return load_csv(candidate, schema), "real"
    if name == "cleveland":
        return cleveland_like(), "replica"
    if name == "statlog":
        return statlog_like(), "replica"
    return kaggle_like(n or 70_000), "replica"
