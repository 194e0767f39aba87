"""Command line: gsquant run|report|validate."""
import argparse
import sys

from . import __version__
from .errors import GsquantError, NumericError, PreconditionError, StructuralError
from .runner import THREADS_ENV, ValidationFailed, load_config, report, run, validate_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for validation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_list(text):
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects comma-separated integers, got {text!r}")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("--k needs at least one positive integer")
    return ks


def _parser():
    p = _Parser(prog="gsquant", description="Quantization-commutes-with-reduction numerics on toric models.")
    p.add_argument("--version", action="version", version=f"gsquant {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", help="scenario config (JSON)")
        sp.add_argument("--k", type=_k_list, help="override the uncorrected k list, e.g. 8,16,32")
        sp.add_argument("--quad-level", type=int, help="fixed zero-set quadrature level (default: adaptive)")

    r = sub.add_parser("run", help="validate, sweep k and write result files")
    common(r)
    r.add_argument("--out", help="output directory (default: the config's output field)")
    r.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    v = sub.add_parser("validate", help="check the scenario preconditions for every k")
    common(v)
    rep = sub.add_parser("report", help="PASS/FAIL summary of a finished run")
    rep.add_argument("manifest", help="manifest.json or the run directory")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "report":
            lines, ok = report(args.manifest)
            print("\n".join(lines))
            return EXIT_OK if ok else EXIT_NUMERIC
        cfg = load_config(args.config, k=args.k, quad_level=args.quad_level,
                          output=getattr(args, "out", None))
        if args.cmd == "validate":
            ok, text = validate_config(cfg)
            print(text)
            return EXIT_OK if ok else EXIT_VALIDATION
        manifest = run(cfg, threads=args.threads)
        print(f"wrote {len(manifest['files']) + 1} files to {cfg.output} (config {manifest['config_hash']})")
        return EXIT_OK
    except ValidationFailed as e:
        print("validation failed:\n" + e.text, file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, PreconditionError) as e:
        diag = getattr(e, "diagnostics", None)
        print(f"numeric failure: {e}" + (f" {diag}" if diag else ""), file=sys.stderr)
        return EXIT_NUMERIC
    except StructuralError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except GsquantError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
