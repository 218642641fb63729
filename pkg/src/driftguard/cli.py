"""Command-line interface for fitting drift chains and optimizing test limits.

Exit codes: 0 success, 1 a validation or verification check failed,
2 input error, 3 no feasible test limits.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .csvio import format_panel_csv, format_tidy_csv, read_panel_csv
from .data_model import LatticePmf, NormalizationMeta
from .drift_model import TAIL_TOL, DriftChain, KernelSpec, PoolingMode, fit_chain, propagate
from .errors import DriftGuardError
from .guardband import LimitSpec, QualityTarget, Sidedness, optimize, optimize_with_initial, survival_profile
from .oracle import MAX_ENUM_STATES, MAX_ENUM_STEPS, enumerate_paths, mc_exceedance, random_chain
from .preprocess import OffsetEstimator, normalize_panels, physical_to_state
from .simulate import (
    RNG_NAME,
    PatternKind,
    PatternSpec,
    generate_pattern,
    make_rng,
    sample_trajectories,
    validate_roundtrip,
)

log = logging.getLogger("driftguard")

CHAIN_FORMAT = "driftguard-chain/1"
SECTION = "driftguard"
EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3


@dataclass
class RunConfig:
    kernel: str = "gaussian"
    bandwidth: str = "silverman"
    pooling: str = "increments"
    fail_budget: float = 1e-6
    usl: float | None = None
    lsl: float | None = None
    sided: str | None = None
    estimator: str = "median"
    seed: int = 0
    tail_tol: float = TAIL_TOL
    initial: str = "worst-case"
    step: float | None = None
    n: int = 10000

    def kernel_spec(self) -> KernelSpec:
        bw = self.bandwidth
        return KernelSpec(self.kernel, bw if bw == "silverman" else float(bw))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        """Defaults, then the config file, then non-None ``overrides``."""
        values = {}
        if path is not None:
            text = Path(path).read_text()
            parser = configparser.ConfigParser()
            try:
                parser.read_string(text)
            except configparser.MissingSectionHeaderError:
                parser.read_string(f"[{SECTION}]\n" + text)
            if parser.has_section(SECTION):
                values.update(parser.items(SECTION))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise DriftGuardError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls()
        for key, raw in values.items():
            setattr(cfg, key, _coerce(key, raw))
        cfg.validate()
        return cfg

    def validate(self):
        self.kernel_spec()
        PoolingMode(self.pooling)
        OffsetEstimator(self.estimator)
        QualityTarget(self.fail_budget)
        if self.initial not in ("worst-case", "empirical"):
            raise DriftGuardError(f"initial must be worst-case or empirical, got {self.initial!r}")
        if self.sided is not None:
            Sidedness(self.sided)
        if self.n < 2:
            raise DriftGuardError("n must be at least 2")


_FLOATS = {"fail_budget", "usl", "lsl", "tail_tol", "step"}
_INTS = {"seed", "n"}


def _coerce(key, raw):
    if isinstance(raw, str):
        raw = raw.strip()
        if raw.lower() in ("", "none"):
            return None
    try:
        if key in _FLOATS:
            return float(raw)
        if key in _INTS:
            return int(raw)
    except ValueError:
        raise DriftGuardError(f"config key {key!r} has invalid value {raw!r}") from None
    return str(raw)


# --------------------------------------------------------------------------
# output helpers


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _limit_spec(cfg: RunConfig, meta: NormalizationMeta) -> LimitSpec:
    if cfg.usl is None and cfg.lsl is None:
        raise DriftGuardError("give at least one of --usl / --lsl")
    side = cfg.sided
    if side is None:
        side = "two-sided" if cfg.usl is not None and cfg.lsl is not None else (
            "upper" if cfg.usl is not None else "lower")
    side = Sidedness(side)
    usl = physical_to_state(cfg.usl, meta, "upper") if cfg.usl is not None else None
    lsl = physical_to_state(cfg.lsl, meta, "lower") if cfg.lsl is not None else None
    if side is Sidedness.UPPER:
        return LimitSpec.upper(usl)
    if side is Sidedness.LOWER:
        return LimitSpec.lower(lsl)
    return LimitSpec.two_sided(lsl, usl)


# --------------------------------------------------------------------------
# pipeline pieces


def fit_document(input_csv, cfg: RunConfig) -> dict:
    stressed, reference = read_panel_csv(input_csv)
    panel, meta = normalize_panels(stressed, reference, cfg.estimator, cfg.step)
    chain = fit_chain(panel, cfg.kernel_spec(), cfg.pooling, cfg.tail_tol)
    init = LatticePmf.from_samples(panel.values[:, 0])
    diagnostics = {
        "devices": panel.n_devices,
        "reference_devices": 0 if reference is None else reference.n_devices,
        "n_states": chain.states.size,
        "beta0": [f.beta0 for f in chain.fits],
        "beta1": [f.beta1 for f in chain.fits],
        "sigma2_eps": [f.sigma2_eps for f in chain.fits],
        "bandwidths": list(chain.bandwidths),
        "offset_shifts": list(meta.offset_shifts),
        "offset_residuals": list(meta.offset_residuals),
    }
    return {
        "format": CHAIN_FORMAT,
        "version": __version__,
        "chain": chain.to_dict(),
        "meta": meta.to_dict(),
        "initial_pmf": init.to_dict(),
        "diagnostics": diagnostics,
        "config": cfg.to_dict(),
    }


def load_fit(path, cfg: RunConfig) -> dict:
    """A fit document from a chain JSON file or, for anything else, a CSV."""
    if str(path).endswith(".json"):
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHAIN_FORMAT:
            raise DriftGuardError(f"{path} is not a {CHAIN_FORMAT} document")
        return doc
    return fit_document(path, cfg)


def _pmf_rows(chain: DriftChain):
    pmfs = propagate(chain)
    for r, v in enumerate(pmfs, start=1):
        for i in np.flatnonzero(v):
            yield r, int(chain.states.lo + i), repr(float(v[i]))


def guardband_document(doc: dict, cfg: RunConfig):
    chain = DriftChain.from_dict(doc["chain"])
    meta = NormalizationMeta.from_dict(doc["meta"])
    spec = _limit_spec(cfg, meta)
    target = QualityTarget(cfg.fail_budget)
    if cfg.initial == "empirical":
        result = optimize_with_initial(chain, LatticePmf.from_dict(doc["initial_pmf"]), spec, target)
    else:
        result = optimize(chain, spec, target)
    out = {
        "result": result.to_dict(),
        "physical": result.to_physical(meta),
        "limits_input": {"usl": cfg.usl, "lsl": cfg.lsl},
        "schedule": doc["chain"]["schedule"],
        "config": cfg.to_dict(),
    }
    return result, out


def _table(out: dict) -> str:
    res, phys = out["result"], out["physical"]

    def f(x):
        return "-" if x is None else f"{x:g}"

    lines = [
        f"mode        {res['mode']}",
        f"feasible    {res['feasible']}",
        f"USL / LSL   {f(phys['usl'])} / {f(phys['lsl'])}",
        f"UTL / LTL   {f(phys['utl'])} / {f(phys['ltl'])}",
        f"GBU / GBL   {f(phys['gbu'])} / {f(phys['gbl'])}",
        f"fail prob   {f(res['achieved_fail_prob'])}",
    ]
    return "\n".join(lines) + "\n"


def verify_document(cfg: RunConfig, chain: DriftChain | None = None, n_chains=20, mc_n=10**5) -> dict:
    """Cross-check restricted propagation against path enumeration and Monte Carlo."""
    rng = make_rng(cfg.seed)
    chains = [chain] if chain is not None else [
        random_chain(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5))) for _ in range(n_chains)
    ]
    cases, worst = [], 0.0
    enumerable = all(ch.states.size <= MAX_ENUM_STATES and ch.steps <= MAX_ENUM_STEPS for ch in chains)
    for c_idx, ch in enumerate(chains):
        for _ in range(3):
            a, b = sorted(int(x) for x in rng.integers(ch.states.lo, ch.states.hi + 1, 2))
            if not a <= 0 <= b:
                a, b = min(a, 0), max(b, 0)
            surv, exc = survival_profile(ch, None, a, b)
            case = {"chain": c_idx, "lo": a, "hi": b, "survival": surv,
                    "exceedance": float(np.sum(exc)), "enumerated": None, "abs_error": None}
            if enumerable:
                e_surv, e_exc = enumerate_paths(ch, None, a, b)
                err = float(max(abs(surv - e_surv), np.max(np.abs(exc - np.array(e_exc)))))
                worst = max(worst, err)
                case.update(enumerated=e_surv, abs_error=err)
            cases.append(case)
    ch, case = chains[0], cases[0]
    est, (ci_lo, ci_hi) = mc_exceedance(ch, case["lo"], case["hi"], mc_n, cfg.seed)
    exact = case["exceedance"]
    mc = {"n": mc_n, "estimate": est, "ci99": [ci_lo, ci_hi], "exact": exact,
          "covered": bool(ci_lo - 1e-12 <= exact <= ci_hi + 1e-12)}
    return {
        "cases": cases,
        "max_abs_error": worst if enumerable else None,
        # chains beyond the enumeration limits are checked by Monte Carlo only
        "enumeration_agrees": bool(worst <= 1e-12) if enumerable else None,
        "monte_carlo": mc,
        "rng": RNG_NAME,
        "seed": cfg.seed,
    }


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args, cfg):
    doc = fit_document(args.input, cfg)
    _emit(dumps(doc), args.out)
    if args.pmf_csv:
        chain = DriftChain.from_dict(doc["chain"])
        Path(args.pmf_csv).write_text(
            format_tidy_csv(("readout", "state", "probability"), _pmf_rows(chain)))
    return EXIT_OK


def cmd_guardband(args, cfg):
    doc = load_fit(args.input, cfg)
    result, out = guardband_document(doc, cfg)
    _emit(dumps(out), args.out)
    if args.out is not None:
        sys.stdout.write(_table(out))
    if args.curve_csv:
        times = doc["chain"]["schedule"]["times"][1:]
        rows = [(r, repr(float(t)), repr(float(e))) for r, (t, e) in
                enumerate(zip(times, result.per_readout_exceedance), start=1)]
        Path(args.curve_csv).write_text(format_tidy_csv(("readout", "time_hours", "exceedance"), rows))
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_simulate(args, cfg):
    if args.pattern:
        spec = PatternSpec(args.pattern, devices=cfg.n, readouts=args.readouts, seed=cfg.seed)
        panel = generate_pattern(spec)
        meta = {"source": "pattern", "pattern": spec.kind.value, "readouts": spec.readouts}
    else:
        if args.input is None:
            raise DriftGuardError("simulate needs an input chain/CSV or --pattern")
        doc = load_fit(args.input, cfg)
        chain = DriftChain.from_dict(doc["chain"])
        init = LatticePmf.from_dict(doc["initial_pmf"]) if cfg.initial == "empirical" else None
        panel = sample_trajectories(chain, cfg.n, cfg.seed, init)
        meta = {"source": "chain", "initial": cfg.initial}
    meta.update({"rng": RNG_NAME, "seed": cfg.seed, "devices": panel.n_devices})
    _emit(format_panel_csv(panel), args.out)
    if args.out is not None:
        Path(str(args.out) + ".json").write_text(dumps(meta))
    return EXIT_OK


def cmd_validate(args, cfg):
    reports = {}
    if args.input:
        stressed, reference = read_panel_csv(args.input)
        panel, _ = normalize_panels(stressed, reference, cfg.estimator, cfg.step)
        cases = {"input": (panel, ())}
    else:
        cases = {}
        for kind in PatternKind:
            spec = PatternSpec(kind, seed=cfg.seed)
            cases[kind.value] = (generate_pattern(spec), spec.designed_pairs())
    all_ok = True
    for name, (panel, designed) in cases.items():
        rep = validate_roundtrip(panel, cfg.kernel_spec(), cfg.pooling, cfg.n, cfg.seed, designed)
        d = rep.to_dict()
        d["passed"] = rep.passed()
        all_ok &= d["passed"]
        reports[name] = d
    _emit(dumps({"reports": reports, "all_passed": all_ok}), args.out)
    return EXIT_OK if all_ok else EXIT_CHECK


def cmd_verify(args, cfg):
    chain = None
    if args.input:
        chain = DriftChain.from_dict(load_fit(args.input, cfg)["chain"])
    rep = verify_document(cfg, chain)
    _emit(dumps(rep), args.out)
    agrees = rep["enumeration_agrees"] is not False
    return EXIT_OK if agrees and rep["monte_carlo"]["covered"] else EXIT_CHECK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--kernel", choices=("gaussian", "rectangular", "epanechnikov"))
    common.add_argument("--bandwidth", help="'silverman' or a positive number (states)")
    common.add_argument("--pooling", choices=("increments", "residuals"))
    common.add_argument("--fail-budget", dest="fail_budget", type=float)
    common.add_argument("--usl", type=float, help="upper spec limit, physical units")
    common.add_argument("--lsl", type=float, help="lower spec limit, physical units")
    common.add_argument("--sided", choices=("upper", "lower", "two-sided"))
    common.add_argument("--estimator", choices=("median", "mean"))
    common.add_argument("--seed", type=int)
    common.add_argument("--tail-tol", dest="tail_tol", type=float)
    common.add_argument("--step", type=float, help="quantization step, detected if omitted")
    common.add_argument("--initial", choices=("worst-case", "empirical"))
    common.add_argument("-n", "--n", dest="n", type=int, help="devices to simulate")
    common.add_argument("--out", help="output file (stdout if omitted)")

    p = argparse.ArgumentParser(prog="driftguard", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", parents=[common], help="fit a drift chain from CSV")
    s.add_argument("input")
    s.add_argument("--pmf-csv", help="write per-readout drift pmfs as readout,state,probability")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("guardband", parents=[common], help="optimize test limits")
    s.add_argument("input", help="CSV panel or chain JSON from 'fit'")
    s.add_argument("--curve-csv", help="write the per-readout exceedance curve")
    s.set_defaults(func=cmd_guardband)

    s = sub.add_parser("simulate", parents=[common], help="sample devices from a chain or pattern")
    s.add_argument("input", nargs="?")
    s.add_argument("--pattern", choices=[k.value for k in PatternKind])
    s.add_argument("--readouts", type=int, default=5)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("validate", parents=[common], help="fit/resample round trip")
    s.add_argument("input", nargs="?", help="CSV panel; the built-in patterns if omitted")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("verify", parents=[common], help="audit survival against the oracles")
    s.add_argument("input", nargs="?", help="chain JSON or CSV with at most 10 states")
    s.set_defaults(func=cmd_verify)
    return p


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def main(argv=None) -> int:
    level = os.environ.get("DRIFTGUARD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
        cfg = RunConfig.load(args.config, overrides)
        return args.func(args, cfg)
    except (DriftGuardError, ValueError, KeyError, OSError, configparser.Error) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
