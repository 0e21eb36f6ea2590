"""Run every experiment config in a directory and write CSV + manifest pairs."""

import argparse
from dataclasses import replace
from pathlib import Path

from fas_sic import __version__
from fas_sic.harness import load_config, run_experiment
from fas_sic.harness.report import write_outputs

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", type=Path, help="defaults to every configs/*.toml")
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--trials", type=int, help="override the trial count of every config")
    args = ap.parse_args()

    paths = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    for path in paths:
        cfg = load_config(path)
        if args.trials:
            cfg = replace(cfg, trials=args.trials)
        report = run_experiment(cfg, threads=args.threads)
        manifest = {"command": "run", "version": __version__, "config": cfg.to_dict()}
        csv_path, _ = write_outputs(report, args.out, cfg.name, manifest)
        print(f"{path.name}: {len(report.rows)} rows, {len(report.errors)} cell errors -> {csv_path}")


if __name__ == "__main__":
    main()
