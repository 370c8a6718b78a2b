"""Command-line entry point.

Values come from flags, then the ``--config`` JSON file (top-level keys, or
a section named after the command), then built-in defaults.  Exit codes:
0 success, 2 domain or validation failure (one ``code: message`` line on
stderr), 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, QKernelError

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_USAGE = 64

DEFAULTS = {
    "common": {"out": ".", "threads": None, "seed": 12345},
    "kernel": {"sigma": 0.2, "t": 1.0 / 252.0, "epsilon": "0", "svg": True},
    "moments": {"epsilon": 0.01, "alpha": 0.0, "order": 8},
    "fit-metric": {"blur": "triangular", "epsilon": 0.01, "lo": None, "hi": None, "order": 8},
    "simulate": {"engine": "oracle", "sigma": 0.2, "t": 1.0 / 252.0, "epsilon": 0.01,
                 "n": 100_000, "steps": 50},
    "price": {"sigma": 0.2, "t": 1.0 / 252.0, "epsilon": 0.0, "spot": 1.0, "strike": "1.0",
              "side": "call", "convention": "normal"},
    "smile": {"sigma": 0.2, "epsilon": 0.01, "maturities": "0.003968253968253968,0.019230769230769232,0.08333333333333333,1",
              "offsets": None, "z_max": 2.0, "z_count": 41, "convention": "normal", "spot": 1.0,
              "svg": True},
    "validate": {"only": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkernel", description="Translation-model transition kernels, "
                                                 "nonlocal diffusions and option smiles.")
    parser.add_argument("--version", action="version", version=f"qkernel {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    common.add_argument("--config", default=s, help="JSON file with option values")
    common.add_argument("--out", default=s, help="output directory (default: .)")
    common.add_argument("--threads", type=int, default=s, help="worker threads (default: logical cores)")
    common.add_argument("--seed", type=int, default=s)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("kernel", parents=[common], help="transition kernels as CSV and SVG")
    p.add_argument("--sigma", type=float, default=s)
    p.add_argument("--t", type=float, default=s, help="horizon in years")
    p.add_argument("--epsilon", default=s, help="comma-separated translations")
    p.add_argument("--no-svg", dest="svg", action="store_false", default=s)

    p = sub.add_parser("moments", parents=[common], help="blurring-density moment sequences")
    p.add_argument("--epsilon", type=float, default=s)
    p.add_argument("--alpha", type=float, default=s, help="metric exponent; 0 is the flat case")
    p.add_argument("--order", type=int, default=s)

    p = sub.add_parser("fit-metric", parents=[common], help="fit metric weights to a blurring density")
    p.add_argument("--blur", choices=["triangular", "uniform", "dirac"], default=s)
    p.add_argument("--epsilon", type=float, default=s)
    p.add_argument("--lo", type=float, default=s, help="uniform blur lower end")
    p.add_argument("--hi", type=float, default=s, help="uniform blur upper end")
    p.add_argument("--order", type=int, default=s)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo ensembles")
    p.add_argument("--engine", choices=["oracle", "particle"], default=s)
    p.add_argument("--sigma", type=float, default=s)
    p.add_argument("--t", type=float, default=s)
    p.add_argument("--epsilon", type=float, default=s,
                   help="kernel translation (oracle) or triangular blur width (particle)")
    p.add_argument("--n", type=int, default=s, help="samples or particles")
    p.add_argument("--steps", type=int, default=s, help="Euler steps (particle engine)")

    p = sub.add_parser("price", parents=[common], help="European option prices and implied vols")
    p.add_argument("--sigma", type=float, default=s)
    p.add_argument("--t", type=float, default=s)
    p.add_argument("--epsilon", type=float, default=s)
    p.add_argument("--spot", type=float, default=s)
    p.add_argument("--strike", default=s, help="comma-separated strikes")
    p.add_argument("--side", choices=["call", "put"], default=s)
    p.add_argument("--convention", choices=["normal", "lognormal"], default=s)

    p = sub.add_parser("smile", parents=[common], help="implied-vol smiles and ATM skew")
    p.add_argument("--sigma", type=float, default=s)
    p.add_argument("--epsilon", type=float, default=s)
    p.add_argument("--maturities", default=s, help="comma-separated maturities in years")
    p.add_argument("--offsets", default=s, help="comma-separated strike offsets in stdevs")
    p.add_argument("--z-max", dest="z_max", type=float, default=s)
    p.add_argument("--z-count", dest="z_count", type=int, default=s)
    p.add_argument("--convention", choices=["normal", "lognormal"], default=s)
    p.add_argument("--spot", type=float, default=s)
    p.add_argument("--no-svg", dest="svg", action="store_false", default=s)

    p = sub.add_parser("validate", parents=[common], help="run the invariant suite")
    p.add_argument("--only", default=s, help="comma-separated check names")
    return parser


def resolve(command: str, flags: dict) -> dict:
    """Merge defaults, config file and flags (highest precedence last)."""
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[command])
    path = flags.get("config")
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError("config file must hold a JSON object")
        section = doc.get(command, {})
        top = {k: v for k, v in doc.items() if not isinstance(v, dict)}
        # shared top-level keys may target other commands; section keys must fit this one
        for key, value in top.items():
            key = key.replace("-", "_")
            if key in cfg:
                cfg[key] = value
        for key, value in section.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise ConfigurationError(f"unknown config key {key!r} for {command}")
            cfg[key] = value
    for key, value in flags.items():
        if key not in ("command", "config"):
            cfg[key] = value
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _header(command: str, cfg: dict) -> str:
    echo = " ".join(f"{k}={cfg[k]!r}" for k in sorted(cfg) if k not in ("out", "threads"))
    return f"# qkernel {__version__} {command} {echo}\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_kernel(cfg: dict, out: Path) -> int:
    from .kernel import kernel_family
    from .model import ModelParams
    from .svg import write_chart

    eps = _floats(cfg["epsilon"])
    kernels = kernel_family(float(cfg["sigma"]), float(cfg["t"]), eps)
    rows = [_header("kernel", cfg), "epsilon,x,density\n"]
    series = []
    for e, k in zip(eps, kernels):
        rows.extend(f"{e!r},{x:.17g},{v:.17g}\n" for x, v in zip(k.x, k.values))
        sd = ModelParams(float(cfg["sigma"]), e, float(cfg["t"])).stdev
        keep = np.abs(k.x) <= 5 * sd
        series.append((f"eps={e:g}", k.x[keep], k.values[keep] * (k.grid.spacing if k.lattice else 1.0)))
    _write(out / "kernel.csv", "".join(rows))
    if cfg["svg"]:
        lattice = any(k.lattice for k in kernels)
        ylabel = "mass per node" if lattice else "density"
        write_chart(out / "kernel.svg", series, title=f"kernels sigma={cfg['sigma']} t={float(cfg['t']):.6g}",
                    xlabel="x", ylabel=ylabel, step=lattice)
    print(f"wrote {out / 'kernel.csv'} ({len(kernels)} curves)")
    return EXIT_OK


def cmd_moments(cfg: dict, out: Path) -> int:
    from .geometry import lemma1_moments, lemma2_moments

    alpha = float(cfg["alpha"])
    order = int(cfg["order"])
    seq = lemma1_moments(float(cfg["epsilon"]), order) if alpha == 0 else \
        lemma2_moments(float(cfg["epsilon"]), alpha, order)
    seq.to_csv(out / "moments.csv")
    print(f"wrote {out / 'moments.csv'} (H_0..H_{order})")
    return EXIT_OK


def cmd_fit_metric(cfg: dict, out: Path) -> int:
    from .geometry import dirac_blur, fit_metric_weights, triangular_blur, uniform_blur

    eps = float(cfg["epsilon"])
    kind = cfg["blur"]
    if kind == "triangular":
        blur = triangular_blur(eps)
    elif kind == "dirac":
        blur = dirac_blur(eps)
    else:
        lo = 0.0 if cfg["lo"] is None else float(cfg["lo"])
        hi = 2.0 * eps if cfg["hi"] is None else float(cfg["hi"])
        blur = uniform_blur(lo, hi)
    fit = fit_metric_weights(blur, eps, int(cfg["order"]))
    res = [_header("fit-metric", cfg), "order,residual,target\n"]
    res.extend(f"{i},{r:.17g},{t:.17g}\n" for i, (r, t) in enumerate(zip(fit.residuals, fit.targets)))
    _write(out / "residuals.csv", "".join(res))
    if not fit.feasible:
        print(f"geometry.infeasible: no non-negative metric weights reproduce the moments "
              f"(max residual {fit.max_residual:.3g}); see {out / 'residuals.csv'}", file=sys.stderr)
        return EXIT_FAILURE
    fit.to_csv(out / "weights.csv")
    print(f"wrote {out / 'weights.csv'} (max residual {fit.max_residual:.3g})")
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path) -> int:
    from .errors import GridError
    from .geometry import triangular_blur
    from .kernel import compute_kernel
    from .model import ModelParams
    from .simulate import ParticleConfig, ensemble_stats, run_particle_method, sample_oracle

    sigma, t, eps = float(cfg["sigma"]), float(cfg["t"]), float(cfg["epsilon"])
    seed = int(cfg["seed"])
    if cfg["engine"] == "oracle":
        ens = sample_oracle(ModelParams(sigma, eps, t), int(cfg["n"]), seed, workers=int(cfg["threads"]))
    else:
        from .geometry import dirac_blur
        blur = triangular_blur(eps) if eps != 0 else dirac_blur()
        ens = run_particle_method(blur, sigma, t, ParticleConfig(int(cfg["n"]), int(cfg["steps"])), seed)
    try:
        reference = compute_kernel(ens.params)
    except GridError:
        reference = None
    st = ensemble_stats(ens, reference)
    ens.to_csv(out / "ensemble.csv")
    extra = {"engine": ens.engine, "seed": seed, "sigma": sigma, "horizon": t,
             "kernel_epsilon": ens.params.epsilon, "meta": ens.meta}
    st.to_json(out / "ensemble.json", extra)
    print(f"wrote {out / 'ensemble.csv'} and {out / 'ensemble.json'}: mean={st.mean:.4g} "
          f"var={st.variance:.4g} skew={st.skewness:.4g} kurt={st.excess_kurtosis:.4g}"
          + ("" if st.ks is None else f" ks={st.ks:.4g}"))
    return EXIT_OK


def cmd_price(cfg: dict, out: Path) -> int:
    from .model import ModelParams
    from .pricing import OptionSpec, implied_vol_or_nan, price_european
    from .kernel import compute_kernel

    params = ModelParams(float(cfg["sigma"]), float(cfg["epsilon"]), float(cfg["t"]))
    kernel = compute_kernel(params)
    rows = [_header("price", cfg), "side,strike,maturity,price,vol\n"]
    for k in _floats(cfg["strike"]):
        spec = OptionSpec(float(cfg["spot"]), k, params.horizon, cfg["side"])
        price = price_european(spec, params, kernel)
        vol = implied_vol_or_nan(price, spec, cfg["convention"])
        rows.append(f"{spec.side},{k:.17g},{params.horizon:.17g},{price:.17g},{vol:.17g}\n")
    _write(out / "price.csv", "".join(rows))
    print(f"wrote {out / 'price.csv'}")
    return EXIT_OK


def cmd_smile(cfg: dict, out: Path) -> int:
    from .model import ModelParams
    from .pricing import build_smile, skew_term_structure
    from .svg import write_chart

    params = ModelParams(float(cfg["sigma"]), float(cfg["epsilon"]), 1.0)
    offsets = (_floats(cfg["offsets"]) if cfg["offsets"] is not None else
               np.linspace(-float(cfg["z_max"]), float(cfg["z_max"]), int(cfg["z_count"])))
    surface = build_smile(params, _floats(cfg["maturities"]), offsets, cfg["convention"],
                          float(cfg["spot"]), workers=int(cfg["threads"]))
    surface.to_csv(out / "smile.csv")
    rows = [_header("smile", cfg), "maturity,skew\n"]
    try:
        slopes = skew_term_structure(surface)
        rows.extend(f"{t:.17g},{s:.17g}\n" for t, s in zip(surface.maturities, slopes))
    except ConfigurationError as exc:
        print(f"note: no skew table ({exc})", file=sys.stderr)
    else:
        _write(out / "skew.csv", "".join(rows))
    if cfg["svg"]:
        series = [(f"T={t:.4g}", surface.offsets, v) for t, v in zip(surface.maturities, surface.vols)]
        series = [(lab, z[np.isfinite(v)], v[np.isfinite(v)]) for lab, z, v in series]
        write_chart(out / "smile.svg", series, title=f"{cfg['convention']} vols eps={cfg['epsilon']}",
                    xlabel="strike offset (stdev)", ylabel="implied vol")
    print(f"wrote {out / 'smile.csv'}")
    return EXIT_OK


def cmd_validate(cfg: dict, out: Path) -> int:
    from .validate import run_all

    names = None if cfg["only"] is None else [n.strip() for n in str(cfg["only"]).split(",")]
    results = run_all(names)
    if not results:
        raise ConfigurationError(f"no checks named {cfg['only']!r}")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.2f}s)")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"kernel.validation: {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {
    "kernel": cmd_kernel,
    "moments": cmd_moments,
    "fit-metric": cmd_fit_metric,
    "simulate": cmd_simulate,
    "price": cmd_price,
    "smile": cmd_smile,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a command is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qkernel: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve(ns.command, vars(ns))
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[ns.command](cfg, out)
    except QKernelError as exc:
        print(exc.reason(), file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"io.error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
