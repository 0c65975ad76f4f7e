"""Command-line front end: ``fraclap {fit, solve, verify-be, schrod, bench}``.

Values come from three layers, highest precedence first: command-line flags,
a JSON ``--config`` file, built-in defaults. Reports are JSON with sorted
keys and a schema version, tables are CSV. Exit status is 0 on success, 2 for
invalid configuration or unusable output paths and 3 when a numerical check
fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .grid import GridFunction, GridSpec, discrete_l2_norm, sample_rhs
from .ratapprox import (
    AAAConvergenceError,
    PoleStructureError,
    fit_rational,
    fit_rational_order,
    spectrum_interval,
    sup_error,
)
from .refsolve import (
    NormBoundViolation,
    builtin_field,
    condition_number_Htilde,
    convergence_study,
    norm_bounds_check,
    rational_solution,
    solve_shifted,
    spectral_fractional_reference,
)

log = logging.getLogger("fraclap")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


class NumericalCheckFailed(ArithmeticError):
    pass


# -- argument plumbing ---------------------------------------------------------

def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


DEFAULTS = {
    "common": {"s": 0.5, "d": 1, "a": 0.0, "b": 1.0, "seed": 0, "tol": 1e-8, "max_order": 32},
    "fit": {"interval": None, "n_terms": None, "M": None, "out": None},
    "solve": {"M": 8, "f": "sin", "f_csv": None, "n_terms": None, "out_dir": "."},
    "verify-be": {"M": [3, 5, 9], "n_r": [1, 2, 4], "d_list": None, "out": None, "export_unitary": None,
                  "max_eps": 1e-9},
    "schrod": {"M": 9, "n_terms": 4, "f": "sin", "delta": 1e-2, "T": None, "R": 9.0, "N_p": 64,
               "N_t": 64, "mode": "exact", "depth": "outer", "auto_R": False, "dp_max": None, "out": None,
               "marginals": None, "check_tol": None},
    "bench": {"study": "convergence", "M": None, "f": "sin", "n_terms": None, "N_t": None,
              "count": 20, "out": None},
}


def _add_common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", type=str, default=S, help="JSON file of option values")
    p.add_argument("--s", type=float, default=S, help="fractional order in (0, 1]")
    p.add_argument("--d", type=int, default=S, help="space dimension")
    p.add_argument("--a", type=float, default=S, help="left end of the domain")
    p.add_argument("--b", type=float, default=S, help="right end of the domain")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--tol", type=float, default=S, help="rational fit tolerance")
    p.add_argument("--max-order", dest="max_order", type=int, default=S)
    p.add_argument("-v", "--verbose", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="fraclap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="rational approximation of x^-s -> model JSON")
    _add_common(p)
    p.add_argument("--interval", type=float, nargs=2, default=S, metavar=("LO", "HI"))
    p.add_argument("--M", type=int, default=S, help="take the interval from a grid with M cells")
    p.add_argument("--n-terms", dest="n_terms", type=int, default=S, help="fixed number of poles")
    p.add_argument("--out", type=str, default=S)

    p = sub.add_parser("solve", help="classical rational solve -> solution CSV + report JSON")
    _add_common(p)
    p.add_argument("--M", type=int, default=S)
    p.add_argument("--f", type=str, default=S, choices=["sin", "ones", "zero", "gaussian-bump"])
    p.add_argument("--f-csv", dest="f_csv", type=str, default=S, help="sampled right-hand side (j1..jd,value)")
    p.add_argument("--n-terms", dest="n_terms", type=int, default=S)
    p.add_argument("--out-dir", dest="out_dir", type=str, default=S)

    p = sub.add_parser("verify-be", help="construct and verify block-encodings -> report JSON")
    _add_common(p)
    p.add_argument("--M", type=_int_list, default=S, help="comma-separated M values")
    p.add_argument("--n-r", dest="n_r", type=_int_list, default=S, help="comma-separated pole counts")
    p.add_argument("--d-list", dest="d_list", type=_int_list, default=S, help="dimensions (default: --d)")
    p.add_argument("--max-eps", dest="max_eps", type=float, default=S)
    p.add_argument("--out", type=str, default=S)
    p.add_argument("--export-unitary", dest="export_unitary", type=str, default=S,
                   help="write the first H~ unitary as a flat binary matrix")

    p = sub.add_parser("schrod", help="Schrödingerization pipeline -> report JSON")
    _add_common(p)
    p.add_argument("--M", type=int, default=S)
    p.add_argument("--n-terms", dest="n_terms", type=int, default=S)
    p.add_argument("--f", type=str, default=S, choices=["sin", "ones", "zero", "gaussian-bump"])
    p.add_argument("--delta", type=float, default=S)
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--R", type=float, default=S)
    p.add_argument("--N-p", dest="N_p", type=int, default=S)
    p.add_argument("--N-t", dest="N_t", type=int, default=S)
    p.add_argument("--mode", choices=["exact", "trotter"], default=S)
    p.add_argument("--depth", choices=["outer", "inner", "full"], default=S)
    p.add_argument("--auto-R", dest="auto_R", action="store_true", default=S,
                   help="enlarge R so the warped profile cannot wrap around")
    p.add_argument("--dp-max", dest="dp_max", type=float, default=S,
                   help="refine N_p until the p spacing is at most this value")
    p.add_argument("--check-tol", dest="check_tol", type=float, default=S,
                   help="exit 3 if the steady-state error exceeds this value")
    p.add_argument("--marginals", type=str, default=S, help="CSV of |W(T)|^2 summed per p grid point")
    p.add_argument("--out", type=str, default=S)

    p = sub.add_parser("bench", help="studies -> CSV tables")
    _add_common(p)
    p.add_argument("--study", choices=["convergence", "conditioning", "trotter", "decay", "norms"], default=S)
    p.add_argument("--M", type=_int_list, default=S)
    p.add_argument("--f", type=str, default=S, choices=["sin", "ones", "gaussian-bump"])
    p.add_argument("--n-terms", dest="n_terms", type=_int_list, default=S)
    p.add_argument("--N-t", dest="N_t", type=_int_list, default=S)
    p.add_argument("--count", type=int, default=S, help="models in the randomized norm study")
    p.add_argument("--out", type=str, default=S)
    return parser


def resolve_config(parser: argparse.ArgumentParser, argv=None) -> dict:
    """Merge defaults < config file < flags and type-check config values."""
    ns = parser.parse_args(argv)
    cmd = ns.command
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    merged = dict(DEFAULTS["common"])
    merged.update(DEFAULTS[cmd])
    if getattr(ns, "config", None):
        path = Path(ns.config)
        try:
            file_cfg = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        sub = _subparser(parser, cmd)
        actions = {a.dest: a for a in sub._actions}
        for key, value in file_cfg.items():
            if key == "schema_version":
                continue
            if key not in merged or key not in actions:
                raise ConfigError(f"unknown config key {key!r} for {cmd}")
            merged[key] = _coerce(actions[key], value)
    merged.update(given)
    merged["command"] = cmd
    _validate(merged)
    return merged


def _subparser(parser, cmd):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[cmd]
    raise KeyError(cmd)


def _coerce(action, value):
    try:
        if value is None:
            return None
        if action.nargs in (2, "+", "*") and isinstance(value, list):
            return [action.type(v) for v in value]
        if action.type is None:
            if isinstance(action, argparse._StoreTrueAction):
                if not isinstance(value, bool):
                    raise TypeError("expected a boolean")
                return value
            return str(value)
        if action.type in (_int_list, _float_list):
            return action.type(value)
        if action.type is int and isinstance(value, float) and not value.is_integer():
            raise TypeError("expected an integer")
        out = action.type(value)
        if action.choices is not None and out not in action.choices:
            raise ValueError(f"{out!r} not in {sorted(action.choices)}")
        return out
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config value for {action.dest!r} is invalid: {exc}") from exc


def _validate(cfg: dict) -> None:
    if not 0 < cfg["s"] <= 1:
        raise ConfigError("s must lie in (0, 1]")
    if cfg["d"] < 1:
        raise ConfigError("d must be positive")
    if not cfg["b"] > cfg["a"]:
        raise ConfigError("domain requires b > a")
    if not cfg["tol"] > 0:
        raise ConfigError("tol must be positive")
    for key in ("out", "export_unitary", "marginals"):
        if cfg.get(key):
            parent = Path(cfg[key]).parent
            if not parent.is_dir():
                raise ConfigError(f"output directory {parent} does not exist")
    if cfg.get("out_dir") is not None and cfg["command"] == "solve" and not Path(cfg["out_dir"]).is_dir():
        raise ConfigError(f"output directory {cfg['out_dir']} does not exist")
    Ms = cfg.get("M")
    if Ms is not None:
        for M in Ms if isinstance(Ms, list) else [Ms]:
            if M < 2:
                raise ConfigError("M must be at least 2")


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _fit(cfg, spec: GridSpec | None = None, interval=None):
    if interval is None:
        interval = spectrum_interval(spec.d, spec.h)
    if cfg.get("n_terms"):
        return fit_rational_order(cfg["s"], interval, int(cfg["n_terms"]))
    return fit_rational(cfg["s"], interval, tol=cfg["tol"], max_order=cfg["max_order"])


# -- subcommands ------------------------------------------------------------------

def cmd_fit(cfg) -> int:
    if cfg["interval"] is not None:
        interval = tuple(cfg["interval"])
    elif cfg["M"] is not None:
        interval = spectrum_interval(cfg["d"], (cfg["b"] - cfg["a"]) / cfg["M"])
    else:
        raise ConfigError("fit needs --interval or --M")
    if not 0 < interval[0] <= interval[1]:
        raise ConfigError("interval must satisfy 0 < lo <= hi")
    model = _fit(cfg, interval=interval)
    _emit(fio.dump_json(model.to_dict(), kind="rational-model"), cfg["out"])
    return EXIT_OK


def _rhs(cfg, spec: GridSpec) -> GridFunction:
    if cfg.get("f_csv"):
        try:
            return fio.read_grid_csv(cfg["f_csv"], spec)
        except OSError as exc:
            raise ConfigError(f"cannot read {cfg['f_csv']}: {exc}") from exc
    return sample_rhs(builtin_field(cfg["f"], spec), spec)


def cmd_solve(cfg) -> int:
    from .system import build_combined, recover_hadamard, solve_combined

    spec = GridSpec(cfg["a"], cfg["b"], cfg["M"], cfg["d"])
    f = _rhs(cfg, spec)
    model = _fit(cfg, spec)
    uh = rational_solution(model, spec, f)
    ref = spectral_fractional_reference(spec, cfg["s"], f)
    kappa, kappa_bound = condition_number_Htilde(spec, model)
    report = {
        "grid": spec.to_dict(),
        "s": cfg["s"],
        "N_r": model.order,
        "n_active": model.n_active,
        "model_sup_error": model.sup_error,
        "error_vs_discrete_fractional": discrete_l2_norm(uh - ref),
        "solution_norm_h": discrete_l2_norm(uh),
        "condition_number": kappa,
        "condition_bound": kappa_bound,
    }
    if np.any(f.values):
        report["norms"] = norm_bounds_check(model, spec, f, raise_on_violation=False)
    system = build_combined(spec, model, f)
    x = solve_combined(system)
    blocks = system.blocks(x)
    block_gap = max(
        float(np.abs(blocks[l] - c * solve_shifted(spec, b, f).values).max())
        for l, (b, c) in enumerate(zip(system.model.poles, system.model.residues))
    )
    report["combined"] = {
        "block_max_diff": block_gap,
        "trailing_max_abs": float(np.abs(blocks[system.N_r + 1:]).max(initial=0.0)),
        "hadamard_max_diff": float(np.abs(recover_hadamard(x, system.n_r) - uh.values).max()),
    }
    out = Path(cfg["out_dir"])
    fio.write_grid_csv(uh, out / "solution.csv")
    fio.dump_json(report, out / "report.json", kind="solve-report")
    return EXIT_OK


def cmd_verify_be(cfg) -> int:
    import scipy.sparse as sp

    from .blockencoding import phase_flip
    from .grid import laplacian_1d, laplacian_dd
    from .ratapprox import RationalModel
    from .system import be_diagonal_B, be_Htilde, be_laplacian_1d, be_laplacian_dd, verify_block_encoding

    rng = np.random.default_rng(cfg["seed"])
    d_list = cfg["d_list"] or [cfg["d"]]
    M_list = cfg["M"] if isinstance(cfg["M"], list) else [cfg["M"]]
    records, worst = [], 0.0
    exported = False
    for d in d_list:
        for M in M_list:
            spec = GridSpec(cfg["a"], cfg["b"], M, d)
            for n_r in cfg["n_r"]:
                if n_r < 1 or n_r & (n_r - 1):
                    raise ConfigError("pole counts must be powers of two")
                b = np.sort(rng.uniform(0.0, 50.0, n_r))
                model = RationalModel(poles=b, residues=rng.uniform(0.1, 1.0, n_r))
                A1 = be_laplacian_1d(spec)
                Ad = be_laplacian_dd(spec)
                B = be_diagonal_B(model)
                Ht = be_Htilde(spec, model)
                L = laplacian_dd(spec).sparse()
                H = sp.kron(sp.identity(n_r), L) + sp.kron(sp.diags(b), sp.identity(L.shape[0]))
                target = sp.block_diag([H, sp.identity(H.shape[0])]).toarray()
                entry = {"M": M, "d": d, "N_r": n_r, "encodings": {}}
                for name, be, tgt in (("laplacian_1d", A1, laplacian_1d(spec)), ("laplacian_dd", Ad, L),
                                      ("B", B, np.diag(b)), ("Htilde", Ht, target)):
                    eps = verify_block_encoding(be, tgt)
                    worst = max(worst, eps)
                    entry["encodings"][name] = {**be.summary(), "eps_measured": eps,
                                                "unitarity_defect": be.unitarity_defect()}
                h = spec.h
                entry["alpha_bound"] = 2 * (4 * d / h**2 + float(b.max()))
                entry["alpha_ok"] = Ht.alpha <= entry["alpha_bound"]
                entry["tally_ok"] = Ht.tally["A_h"] == d and Ht.tally["B"] == 1
                entry["negative_control_eps"] = verify_block_encoding(phase_flip(A1, 0), laplacian_1d(spec))
                records.append(entry)
                if cfg["export_unitary"] and not exported:
                    fio.write_matrix_binary(Ht.matrix(), cfg["export_unitary"])
                    exported = True
    ok = worst <= cfg["max_eps"] and all(r["alpha_ok"] and r["tally_ok"] for r in records)
    doc = {"configs": records, "max_eps_measured": worst, "max_eps_allowed": cfg["max_eps"], "passed": ok}
    _emit(fio.dump_json(doc, kind="block-encoding-report"), cfg["out"])
    if not ok:
        raise NumericalCheckFailed(f"block-encoding verification failed (max eps {worst:.3e})")
    return EXIT_OK


def cmd_schrod(cfg) -> int:
    from dataclasses import replace

    from .schrod import SchrodConfig, build_augmented, default_T, run_pipeline
    from .system import build_combined

    spec = GridSpec(cfg["a"], cfg["b"], cfg["M"], cfg["d"])
    f = sample_rhs(builtin_field(cfg["f"], spec), spec)
    model = _fit(cfg, spec)
    system = build_combined(spec, model, f)
    T = cfg["T"] if cfg["T"] is not None else default_T(system, cfg["delta"])
    scfg = SchrodConfig(T=T, R=cfg["R"], N_p=cfg["N_p"], N_t=cfg["N_t"], delta=cfg["delta"])
    uq, report = run_pipeline(spec, model, f, scfg, mode=cfg["mode"], depth=cfg["depth"],
                              auto_R=bool(cfg["auto_R"]), dp_max=cfg["dp_max"])
    runtime = report.pop("runtime_s", None)
    log.info("schrod pipeline finished in %.2f s", runtime or 0.0)
    report["grid"] = spec.to_dict()
    report["s"] = cfg["s"]
    report["N_r"] = model.order
    if cfg["marginals"]:
        _write_marginals(spec, model, f, report, cfg["marginals"])
    _emit(fio.dump_json(report, kind="schrod-report"), cfg["out"])
    if cfg["check_tol"] is not None and report["steady_state_error"] > cfg["check_tol"]:
        raise NumericalCheckFailed(
            f"steady-state error {report['steady_state_error']:.3e} exceeds {cfg['check_tol']:.3e}")
    return EXIT_OK


def _write_marginals(spec, model, f, report, path) -> None:
    from .schrod import SchrodConfig, build_augmented, evolve_exact, evolve_trotter, init_warped
    from .system import build_combined

    c = report["config"]
    scfg = SchrodConfig(T=c["T"], R=c["R"], N_p=c["N_p"], N_t=c["N_t"])
    system = build_combined(spec, model, f)
    factors = build_augmented(system, scfg.T)
    state = init_warped(factors, scfg, system.F_tilde)
    if report["mode"] == "trotter":
        state = evolve_trotter(state, factors, scfg, depth=report["depth"])
    else:
        state = evolve_exact(state, factors, scfg)
    marg = (np.abs(state.amplitudes) ** 2).sum(axis=1)
    fio.write_table_csv(["k", "p", "weight"], zip(range(scfg.N_p), scfg.p, marg), path)


def cmd_bench(cfg) -> int:
    study = cfg["study"]
    if study == "convergence":
        M = cfg["M"] or [8, 16, 32, 64, 128]
        rep = convergence_study(cfg["s"], cfg["d"], f=cfg["f"], M_list=M, a=cfg["a"], b=cfg["b"])
        log.info("observed order %.4f", rep.observed_order)
        _emit(fio.write_convergence_csv(rep), cfg["out"])
    elif study == "conditioning":
        from .ratapprox import RationalModel

        M = cfg["M"] or [4, 8, 16, 32]
        zero = RationalModel(poles=np.zeros(1), residues=np.ones(1))
        rows = []
        for m in M:
            spec = GridSpec(cfg["a"], cfg["b"], m, cfg["d"])
            kappa, bound = condition_number_Htilde(spec, zero)
            rows.append((m, spec.h, kappa, bound))
        _emit(fio.write_table_csv(["M", "h", "kappa", "kappa_bound"], rows), cfg["out"])
    elif study == "decay":
        interval = (1.0, 1e4)
        rows = []
        for n in cfg["n_terms"] or list(range(1, 17)):
            model = fit_rational_order(cfg["s"], interval, n)
            rows.append((n, model.n_active, sup_error(model)))
        _emit(fio.write_table_csv(["n_terms", "n_active", "sup_error"], rows), cfg["out"])
    elif study == "trotter":
        from .schrod import SchrodConfig, build_augmented, trotter_order_study
        from .system import build_combined

        M = (cfg["M"] or [5])[0]
        spec = GridSpec(cfg["a"], cfg["b"], M, cfg["d"])
        n_terms = (cfg["n_terms"] or [2])[0]
        model = fit_rational_order(cfg["s"], spectrum_interval(spec.d, spec.h), n_terms)
        system = build_combined(spec, model, sample_rhs(builtin_field(cfg["f"], spec), spec))
        factors = build_augmented(system, 1.0)
        res = trotter_order_study(factors, SchrodConfig(T=1.0), system.F_tilde,
                                  N_t_list=cfg["N_t"] or [256, 512, 1024, 2048, 4096])
        log.info("Trotter slope %.4f", res["slope"])
        _emit(fio.write_table_csv(["N_t", "dt", "gap"], zip(res["N_t"], res["dt"], res["gap"])), cfg["out"])
    elif study == "norms":
        rows = norm_study(cfg["count"], cfg["seed"], field=cfg["f"])
        cols = ["trial", "s", "d", "M", "N_r", "upper_slack", "lower_slack", "eta1", "eta1_bound"]
        _emit(fio.write_table_csv(cols, [[r[c] for c in cols] for r in rows]), cfg["out"])
        if any(r["upper_slack"] < 0 or r["lower_slack"] < 0 for r in rows):
            raise NumericalCheckFailed("a norm bound was violated")
    return EXIT_OK


def norm_study(count: int = 20, seed: int = 0, field: str = "sin", tol: float = 1e-8) -> list[dict]:
    """Both norm bounds and the repetition factor on randomized fitted models."""
    from .system import build_combined, eta1_estimate, solve_combined

    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(count):
        s = float(rng.uniform(0.1, 0.9))
        d = int(rng.integers(1, 3))
        M = int(rng.choice([5, 9, 17] if d == 1 else [5, 9]))
        spec = GridSpec(0.0, 1.0, M, d)
        model = fit_rational(s, spectrum_interval(d, spec.h), tol=tol)
        f = sample_rhs(builtin_field(field, spec), spec)
        nb = norm_bounds_check(model, spec, f, raise_on_violation=False)
        system = build_combined(spec, model, f)
        x = solve_combined(system)
        try:
            eta, eta_bound = eta1_estimate(x, rational_solution(model, spec, f), model, d)
        except AssertionError:
            eta, eta_bound = math.inf, math.nan
        rows.append({"trial": trial, "s": s, "d": d, "M": M, "N_r": model.order,
                     "upper_slack": nb["upper_slack"], "lower_slack": nb["lower_slack"],
                     "eta1": eta, "eta1_bound": eta_bound})
    return rows


COMMANDS = {"fit": cmd_fit, "solve": cmd_solve, "verify-be": cmd_verify_be, "schrod": cmd_schrod,
            "bench": cmd_bench}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"status": "error", "exit_code": code, "kind": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        cfg = resolve_config(parser, argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    logging.basicConfig(level=logging.INFO if cfg.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[cfg["command"]](cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (NumericalCheckFailed, AAAConvergenceError, PoleStructureError, NormBoundViolation,
            ArithmeticError, AssertionError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", f"{type(exc).__name__}: {exc}")
    except (ValueError, OverflowError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except OSError as exc:
        return _fail(EXIT_CONFIG, "io", str(exc))
    log.info("%s done in %.2f s", cfg["command"], time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
