"""Command line front end.

Commands:
    slplink run <config>                      simulate and write the CSV
    slplink export-pilots <config>            write pooled pilot sets as JSON lines
    slplink demod-with-params <config> <params.jsonl>
                                              demodulate with injected mixtures
    slplink selftest                          quick end-to-end smoke check

Configuration files are flat key=value text; see the config module for keys.
Errors in configuration or interchange files exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, parse_config
from .metrics import write_csv
from .runner import export_pilot_sets, run_experiment


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    records = run_experiment(cfg)
    write_csv(records, cfg.out)
    for record in records:
        coded = "" if record.ber_coded is None else f" ber_coded={record.ber_coded:.3g}"
        print(f"snr={record.snr_db:g} demod={record.demod} mi={record.mi:.4f} "
              f"ser={record.ser:.3g}{coded}")
    print(f"wrote {cfg.out}")
    return 0


def _cmd_export(args) -> int:
    cfg = parse_config(args.config)
    out = export_pilot_sets(cfg)
    print(f"wrote {out}")
    return 0


def _cmd_demod_with_params(args) -> int:
    cfg = parse_config(args.config)
    cfg = replace(cfg, demod="pfen")
    records = run_experiment(cfg, params_path=args.params)
    write_csv(records, cfg.out)
    for record in records:
        print(f"snr={record.snr_db:g} demod=pfen mi={record.mi:.4f} ser={record.ser:.3g}")
    print(f"wrote {cfg.out}")
    return 0


def _cmd_selftest(args) -> int:
    del args
    with tempfile.TemporaryDirectory() as tmp:
        out = str(Path(tmp) / "selftest.csv")
        cases = [
            ExperimentConfig(constellation="psk8", precoder="cisb", mode="wor",
                             demod="gaus", n=4, k=4, snr_db=(20.0,), lp=64, ld=128,
                             blocks=2, seed=7, out=out),
            ExperimentConfig(constellation="qam16", precoder="cisb", mode="wr",
                             demod="mgaus", n=4, k=4, snr_db=(25.0,), lp=64, ld=128,
                             blocks=2, seed=7, out=out),
            ExperimentConfig(constellation="psk8", precoder="zf", mode="wor",
                             demod="gmm", n=4, k=4, snr_db=(20.0,), lp=128, ld=128,
                             blocks=1, seed=7, em_components=3, out=out),
        ]
        for cfg in cases:
            records = run_experiment(cfg)
            for record in records:
                if not (0.0 <= record.mi <= 1.0 and 0.0 <= record.ser <= 1.0):
                    print(f"selftest failure: implausible metrics {record}", file=sys.stderr)
                    return 1
                print(f"ok {cfg.precoder}/{cfg.mode}/{cfg.demod} "
                      f"mi={record.mi:.3f} ser={record.ser:.3g}")
    print("selftest passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="slplink", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a configuration, write CSV results")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_exp = sub.add_parser("export-pilots", help="write pooled pilot sets as JSON lines")
    p_exp.add_argument("config")
    p_exp.set_defaults(func=_cmd_export)

    p_dwp = sub.add_parser("demod-with-params",
                           help="demodulate with mixture parameters from a JSON-lines file")
    p_dwp.add_argument("config")
    p_dwp.add_argument("params")
    p_dwp.set_defaults(func=_cmd_demod_with_params)

    p_self = sub.add_parser("selftest", help="quick end-to-end smoke check")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
