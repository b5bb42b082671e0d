"""Dump the Finsler identity table for a config as CSV on stdout."""
import argparse
import csv
import sys

from ncgeom.config import load_config
from ncgeom.finsler import IDENTITY_KEYS, finsler_identity_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--directions", type=int, default=16)
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = finsler_identity_table(cfg.fields, directions=args.directions)
    rows = out["rows"]
    if not rows:
        print("no rows", file=sys.stderr)
        return
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
    worst = max(out["max_residuals"][k] for k in IDENTITY_KEYS)
    print(f"{len(rows)} rows, {len(out['skipped'])} skipped, max residual {worst:.2e}", file=sys.stderr)


if __name__ == "__main__":
    main()
