"""Write the 332-row Pima Indian diabetes test set (R's MASS::Pima.te) to CSV.

The data ship with R; `rdatasets` (pip install rdatasets) bundles the same
table for Python. From R the equivalent one-liner is

    Rscript -e 'write.csv(MASS::Pima.te, "pima_te.csv", row.names = FALSE)'

Usage: python scripts/export_pima.py [OUT]   (default: data/pima_te.csv)
"""

from __future__ import annotations

import sys
from pathlib import Path


def export(out: Path) -> Path:
    import rdatasets

    frame = rdatasets.data("MASS", "Pima.te")
    frame = frame.drop(columns=[c for c in ("rownames",) if c in frame.columns])
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False)
    return out


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/pima_te.csv")
    path = export(target)
    print(f"wrote {path} ({sum(1 for _ in path.open()) - 1} rows)")
