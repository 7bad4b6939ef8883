#!/usr/bin/env python3
"""Materialize the seeded replica cohorts, their schema files, and a default
policy under data/, ready for the CLI.

    python scripts/make_replica_data.py [--kaggle-rows N]
"""

import argparse
import sys
from pathlib import Path

from fairgate.datasets import (
    CLEVELAND_SCHEMA,
    KAGGLE_SCHEMA,
    STATLOG_SCHEMA,
    cleveland_like,
    kaggle_like,
    statlog_like,
)
from fairgate.hashing import canonical_json
from fairgate.tabular import write_csv

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

DEFAULT_POLICY = """\
# Deployment gates and monitoring thresholds.
gates:
  dpd_max: 0.05
  eo_max: 0.05
audit:
  dpd_warn: 0.10
drift:
  ks_max: 0.20
utility:
  band: [0.10, 0.20]
  delta_nb_max: 0.001
label_threshold: 0.5
seed: 42
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kaggle-rows", type=int, default=70_000)
    args = parser.parse_args()
    DATA_DIR.mkdir(exist_ok=True)
    for name, table, schema in (
        ("cleveland_replica", cleveland_like(), CLEVELAND_SCHEMA),
        ("statlog_replica", statlog_like(), STATLOG_SCHEMA),
        ("kaggle_replica", kaggle_like(args.kaggle_rows), KAGGLE_SCHEMA),
    ):
        csv_path = DATA_DIR / f"{name}.csv"
        write_csv(table, csv_path)
        schema_path = DATA_DIR / f"{name}.schema.json"
        schema_path.write_text(canonical_json(schema.to_jsonable()),
                               encoding="utf-8")
        print(f"wrote {csv_path} ({table.n} rows) and {schema_path}")
    policy_path = DATA_DIR / "policy.yaml"
    policy_path.write_text(DEFAULT_POLICY, encoding="utf-8")
    print(f"wrote {policy_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
