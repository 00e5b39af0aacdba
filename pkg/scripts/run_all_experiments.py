"""Run experiments 1-4 with one seed and write every artifact under one directory."""

import argparse
from pathlib import Path

from flowmarket.expcli import ExperimentConfig, emit, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    status = 0
    for k in (1, 2, 3, 4):
        cfg = ExperimentConfig(k, seed=args.seed, out=str(Path(args.out) / f"exp{k}"))
        records = run(cfg)
        emit(records, cfg.out)
        for r in records:
            status |= not r.ok
            print(f"exp{k}", "ok" if r.ok else f"FAILED {r.errors}",
                  {k2: v for k2, v in r.metrics.items() if isinstance(v, (int, float, str))})
    raise SystemExit(status)


if __name__ == "__main__":
    main()
