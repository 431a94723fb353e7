"""Regenerate the bundled synthetic log-CD4 fixture and its analysis config."""
import argparse
import csv
import json
import math
from pathlib import Path

from nirdd.simulation import generate_hiv_like


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    batch = generate_hiv_like(args.n, args.seed)
    with open(out / "hiv_like.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["z", "y", "w"])
        for z, y, w in zip(batch.z, batch.y, batch.w):
            wr.writerow([repr(float(z)), int(y), int(w)])
    cfg = {"cutoff": math.log(350), "noise": {"type": "gaussian", "nu": 0.19},
           "target": {"kind": "constant", "M": 1.0}, "seed": args.seed}
    (out / "hiv_like.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out / 'hiv_like.csv'} ({batch.n} rows) and {out / 'hiv_like.json'}")


if __name__ == "__main__":
    main()
