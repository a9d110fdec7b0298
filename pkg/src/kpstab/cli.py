"""``kpstab`` command line: simulate, probe-operator, stability, check-identities.

Exit status: 0 success, 1 usage or configuration error, 2 a tolerance or
run failure (a machine-readable ``failure.json`` is written to ``--out``).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from . import config as cfgmod
from . import io as kio
from . import spectral as sp
from .errors import ConfigError, KPStabError

log = logging.getLogger("kpstab")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)
    status: str = "running"
    command: str = ""

    def add(self, path: Path):
        self.outputs.append(str(path.name))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Failure(Exception):
    """A tolerance failure: the report is written and the exit status is 2."""

    def __init__(self, report: dict):
        super().__init__(report.get("error", "tolerance failure"))
        self.report = report


# initial data ---------------------------------------------------------------------------
def build_perturbation(cfg: dict, grid, c: float):
    from .ensembles import random_perturbation

    p = cfg["perturbation"]
    kind, delta = p["type"], p["delta"]
    if kind == "none" or delta == 0:
        return sp.zeros(grid)
    if kind == "random-smooth":
        return random_perturbation(grid, delta, p["seed"], norm=p["norm"], band=p["band"])
    if kind == "single-mode":
        from .ensembles import window

        n = p["mode"]
        prof = window(grid) * np.exp(-(grid.x**2) / 16.0)
        f = sp.from_function(lambda X, Y: np.interp(X[:, 0], grid.x, prof)[:, None] * np.cos(n * Y), grid)
        w = sp.dX(f)
        size = sp.e_norm(w) if p["norm"] == "E" else w.norm()
        return w * (delta / size)
    fld, _ = kio.read_snapshot(p["path"])
    if fld.grid.nx != grid.nx or fld.grid.ny != grid.ny or fld.grid.lx != grid.lx:
        raise ConfigError("perturbation file grid does not match the configured grid")
    fld = sp.SpectralField(fld.coeffs, grid)
    size = sp.e_norm(fld) if p["norm"] == "E" else fld.norm()
    return fld * (delta / size) if size > 0 else fld


# commands ----------------------------------------------------------------------------
def cmd_simulate(args, cfg: dict, out: Path, man: RunManifest) -> dict:
    from .evolution import Equation, integrate, norm_observer
    from .profiles import phi_field

    grid = cfgmod.grid_of(cfg)
    spec = cfgmod.flow_spec(cfg)
    extra = {"config": cfgmod.canonical(cfg)}
    man.config_hash = spec.config_hash(grid, extra)
    ck_every = cfg["diagnostics"]["checkpoint_every"]
    written = []
    start = 0
    if args.resume:
        ck = kio.read_checkpoint(args.resume, grid)
        if ck.config_hash and ck.config_hash != spec.config_hash(grid, extra):
            raise ConfigError("checkpoint was written by a different configuration")
        u0, start = ck.field, ck.step
    else:
        u0 = build_perturbation(cfg, grid, spec.c)
        if spec.equation is Equation.KP2 and cfg["background"] == "soliton":
            u0 = phi_field(grid, spec.c) + u0
    times = sorted(float(t) for t in cfg["diagnostics"]["snapshot_times"])
    keep = None
    for t in times:
        step = int(round(t / spec.dt))
        keep = step if keep is None else math.gcd(keep, step)
    keep = keep or None
    observer = norm_observer if spec.equation is Equation.KP2 else _local_norms

    def checkpoint(step, t, f):
        path = out / f"checkpoint_{step:08d}.bin"
        kio.write_checkpoint(path, f, t, step, spec.config_hash(grid, extra))
        written.append(path)

    res = integrate(u0, spec, observers=(observer,), keep_every=keep, start_step=start,
                    config_extra=extra, checkpoint=checkpoint if ck_every else None,
                    checkpoint_every=ck_every or None)
    csv_path = out / "norms.csv"
    kio.write_series_csv(csv_path, res.series, ["l2", "dx", "dxinv_dy", "e_total"])
    man.add(csv_path)
    for t in times:
        hit = [f for (ts, f) in res.snapshots if abs(ts - t) <= 0.5 * spec.dt]
        if hit:
            path = out / f"snapshot_t{t:g}.bin"
            kio.write_snapshot(path, hit[0], t)
            man.add(path)
    final = out / "final.bin"
    kio.write_snapshot(final, res.final, res.t_final)
    man.add(final)
    for path in written:
        man.add(path)
    return {"t_final": res.t_final, "steps": res.steps, "final_l2": res.final.norm()}


def _local_norms(t, f):
    return {
        "l2": sp.l2_norm(f),
        "dx": sp.l2_norm(sp.dX(f)),
        "dxinv_dy": sp.l2_norm(sp.dXinv_dY_local(f)),
        "e_total": sp.e_norm_local(f),
    }


def cmd_probe_operator(args, cfg: dict, out: Path, man: RunManifest) -> dict:
    from . import linear

    grid = cfgmod.grid_of(cfg)
    c = args.c if args.c is not None else cfg["flow"]["c"]
    weight = sp.WeightSpec(args.eps) if args.eps else None
    rep = linear.coercivityProbe(c, args.variant, args.ensemble, grid, weight, seed=args.seed or 0)
    nmax = min(args.modes, grid.ny // 2)
    rep.mode_constants = {str(k): v for k, v in linear.mode_bound_table(grid, c, args.variant, range(1, nmax + 1)).items()}
    rep.kernel_decay = [linear.green_decay_fit(n, c, args.variant) for n in (1, 2, 4, 8)]
    vals = list(rep.mode_constants.values())
    payload = {**asdict(rep), "mode_constant_spread": max(vals) / min(vals) if vals else None,
               "exponents": [linear.exponents(n, c, args.variant).as_dict() for n in range(0, nmax + 1)]}
    path = out / "operator_probe.json"
    kio.write_json(path, payload)
    man.add(path)
    if not (math.isfinite(rep.min_ratio) and rep.min_ratio > 0):
        raise Failure({"error": "coercivity floor is not positive", **payload})
    return {"min_ratio": rep.min_ratio, "median_ratio": rep.median_ratio}


def _stamp(series, tag: str) -> None:
    series.config_hash = tag
    for r in series.records:
        r["config_hash"] = tag


def cmd_stability(args, cfg: dict, out: Path, man: RunManifest) -> dict:
    from . import stability as st

    grid = cfgmod.grid_of(cfg)
    f, p, d = cfg["flow"], cfg["perturbation"], cfg["diagnostics"]
    given = None
    if p["type"] in ("single-mode", "given-file"):
        given = build_perturbation(cfg, grid, f["c"])
    layer = {k: cfg["stability"][k] for k in ("sponge", "sponge_start", "sponge_end")
             if cfg["stability"][k] is not None}
    scfg = st.StabilityConfig(
        grid=grid, c=f["c"], delta=p["delta"], seed=p["seed"], band=p["band"], dt=f["dt"],
        t_end=f["t_end"], observe_every=f["observe_every"], eps=d["eps"], window_speed=d["window_speed"],
        delta_inv=cfg["stability"]["delta_inv"], side=p["side"], perturbation=given, **layer,
    )
    kind = cfg["stability"]["kind"]
    run = st.orbitalStabilityExperiment if kind == "orbital" else st.asymptoticStabilityExperiment
    res = run(scfg)
    _stamp(res.series, man.config_hash)
    csv_path = out / f"{kind}.csv"
    kio.write_series_csv(csv_path, res.series)
    js = out / "summary.json"
    kio.write_json(js, {"kind": kind, **res.summary})
    man.add(csv_path)
    man.add(js)
    return res.summary


def cmd_check_identities(args, cfg: dict, out: Path, man: RunManifest) -> dict:
    from . import linear
    from .ensembles import random_perturbation
    from .evolution import Equation, FlowSpec, integrate, katoBalance
    from .profiles import (kink_periodic, miuraMinus, miuraMinusComposite, miuraPlus,
                           miuraPlusComposite, phi, phi_field, wrap)
    from .spectral import Grid

    grid = cfgmod.grid_of(cfg)
    c = cfg["flow"]["c"]
    z = sp.zeros(grid)
    phic = phi_field(grid, c)
    checks = {}

    def record(name, value, tol):
        checks[name] = {"value": float(value), "tol": tol, "ok": bool(value <= tol)}

    img = sp.to_physical(miuraPlusComposite(z, c) - phic)
    record("algebra_plus", np.max(np.abs(img)), 1e-12)
    record("algebra_minus", np.max(np.abs(sp.to_physical(miuraMinusComposite(z, c)))), 1e-12)
    # the raw maps on the sampled periodic kink, on a grid fine enough for 1e-12
    fine = Grid(2 * grid.nx, 8, grid.lx)
    qf = sp.from_profile(kink_periodic(c, fine.x, fine.lx), fine)
    record("algebra_plus_raw", np.max(np.abs(sp.to_physical(miuraPlus(qf, c))[:, 0] - phi(c, fine.x))), 1e-12)
    seam = phi(c, wrap(fine.x - fine.lx, fine.lx))
    record("algebra_minus_raw", np.max(np.abs(sp.to_physical(miuraMinus(qf, c))[:, 0] - seam)), 1e-12)
    record("kernel_adjoint", sp.l2_norm(linear.applyLAdj(phic, c, check=False)) / phic.norm(), 1e-10)
    a = random_perturbation(grid, 1.0, 1, band=0.125)
    b = random_perturbation(grid, 1.0, 2, band=0.125)
    lhs = sp.inner(linear.applyL(a, c), b)
    rhs = sp.inner(a, linear.applyLAdjSigned(b, c))
    record("adjoint_pairing", abs(lhs - rhs) / max(abs(lhs), 1e-300), 1e-10)
    u0 = random_perturbation(grid, 0.05, 3, norm="L2", band=0.125)
    spec = FlowSpec(Equation.KP2, c=c, dt=2.5e-3, t_end=0.5, observe_every=10**9)
    res = integrate(u0, spec, observers=(), keep_every=1)
    bal = katoBalance(res.snapshots, sp.WeightSpec(0.1), 1.0)
    r = bal.column("residual")[2:-2]
    scale = np.max(bal.column("term_scale"))
    record("kato_balance", np.max(np.abs(r)) / scale, 1e-5)
    path = out / "identities.json"
    kio.write_json(path, checks)
    man.add(path)
    bad = [k for k, v in checks.items() if not v["ok"]]
    if bad:
        raise Failure({"error": "tolerance failure", "failed": bad, "checks": checks})
    return checks


COMMANDS = {
    "simulate": cmd_simulate,
    "probe-operator": cmd_probe_operator,
    "stability": cmd_stability,
    "check-identities": cmd_check_identities,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kpstab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"kpstab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None, help="YAML experiment config")
        s.add_argument("--out", type=Path, default=Path("kpstab-out"), help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides perturbation.seed")
        s.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        s.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "probe-operator":
            s.add_argument("--variant", choices=("L", "L_ADJ"), default="L")
            s.add_argument("--c", type=float, default=None)
            s.add_argument("--ensemble", type=int, default=200)
            s.add_argument("--eps", type=float, default=None, help="weight steepness (weighted probe)")
            s.add_argument("--modes", type=int, default=16)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"kpstab: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"perturbation": {"seed": args.seed}} if args.seed is not None else None
        cfg = cfgmod.load_config(args.config, overrides=overrides)
        if args.resume is not None and not Path(args.resume).is_file():
            raise ConfigError(f"checkpoint not found: {args.resume}")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as err:
        print(f"kpstab: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfgmod.cfg_hash(cfg), started=_now(), command=args.command)
    status, result = EXIT_OK, {}
    try:
        with sfft.set_workers(args.threads):
            result = COMMANDS[args.command](args, cfg, out, man)
        man.status = "ok"
    except Failure as fail:
        status, man.status = EXIT_FAIL, "failed"
        kio.write_json(out / "failure.json", fail.report)
        man.add(out / "failure.json")
        print(f"kpstab: {fail}", file=sys.stderr)
    except ConfigError as err:
        print(f"kpstab: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except KPStabError as err:
        status, man.status = EXIT_FAIL, "failed"
        kio.write_json(out / "failure.json", {"error": err.code, "message": str(err)})
        man.add(out / "failure.json")
        print(f"kpstab: {err.code}: {err}", file=sys.stderr)
    except (OSError, ValueError) as err:
        status, man.status = EXIT_FAIL, "failed"
        kio.write_json(out / "failure.json", {"error": type(err).__name__, "message": str(err)})
        man.add(out / "failure.json")
        print(f"kpstab: {type(err).__name__}: {err}", file=sys.stderr)
    man.finished = _now()
    kio.write_json(out / "manifest.json", {**asdict(man), "result": result})
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
