"""Machine-readable experiment results: one JSON record plus CSV series.

Scalar results are stored with full float repr so a re-run with the same
config and seed reproduces them byte-for-byte.  Wall-clock time is
recorded for reporting but excluded from the determinism contract and
from the fingerprint.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field


def config_fingerprint(kind: str, params: dict, seed: int, replicas: int) -> str:
    payload = json.dumps(
        {"kind": kind, "params": params, "seed": seed, "replicas": replicas},
        sort_keys=True, default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    """One experiment run: scalars, tabular series, and verdicts."""

    kind: str
    fingerprint: str
    params: dict
    seed: int
    replicas: int
    scalars: dict = field(default_factory=dict)     # name -> {value, stderr?}
    series: dict = field(default_factory=dict)      # name -> {columns, rows}
    verdicts: dict = field(default_factory=dict)    # name -> bool
    wall_clock: float = 0.0
    version: str = "0.1.0"

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "params": self.params,
            "seed": self.seed,
            "replicas": self.replicas,
            "scalars": self.scalars,
            "series": {k: v["columns"] for k, v in self.series.items()},
            "verdicts": self.verdicts,
            "passed": self.passed,
            "wall_clock": self.wall_clock,
            "version": self.version,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def write(self, out_dir) -> list:
        """Write `<kind>-<fingerprint>.json` plus one CSV per series.

        Returns the list of written paths.
        """
        import os

        os.makedirs(out_dir, exist_ok=True)
        stem = f"{self.kind}-{self.fingerprint}"
        paths = [os.path.join(out_dir, stem + ".json")]
        with open(paths[0], "w") as f:
            f.write(self.to_json() + "\n")
        for name, table in self.series.items():
            path = os.path.join(out_dir, f"{stem}-{name}.csv")
            with open(path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(table["columns"])
                w.writerows(table["rows"])
            paths.append(path)
        return paths
