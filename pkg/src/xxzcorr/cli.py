"""Command-line front end: config ingestion, pipelines, verification, caching.

Configs are flat ``key = value`` text files with a typed schema; unknown
keys are rejected.  Complex values are written as ``re, im`` pairs and
lists of complex values use ``;`` between entries.  Every output carries
the sha256 hash of the canonicalized config and a provenance tag, so runs
are reproducible and cache hits are byte-identical.

Subcommands: solve-aux, rho, omega, density, oracle, verify, sweep.
The cache root honours the XXZCORR_CACHE environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

from . import density as density_mod
from . import expform, oracle
from . import special
from .contour import build_contour
from .errors import ConfigurationError, XXZCorrError
from .nlie import solve_aux
from .params import MODE_TEMPERATURE, ModelParams

SCHEMA = {
    # model
    "mode": ("str", MODE_TEMPERATURE),
    "gamma": ("float", 0.6),
    "J": ("float", 1.0),
    "N": ("int", 16),
    "T": ("float", 1.0),
    "h": ("float", 0.0),
    "kappa": ("complex", None),
    "alpha": ("complex", 0.1 + 0.0j),
    "trotter_limit": ("bool", False),
    "nu": ("complex_list", [0.04 + 0.02j, -0.09 - 0.015j]),
    "beta_inhom": ("complex_list", None),
    # grid
    "half_width": ("float", None),
    "cutoff": ("float", 20.0),
    "points_per_side": ("int", 768),
    # solver
    "tol": ("float", 1e-12),
    "damping": ("float", 0.5),
    "max_iter": ("int", 800),
    # run control
    "verify_suite": ("str", "fast"),
    "output_dir": ("str", "."),
    "cache_dir": ("str", None),
    "physical_eps_alpha": ("float", 1e-3),
}

BOOL_TRUE = {"1", "true", "yes", "on"}
BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_complex(text: str) -> complex:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return complex(float(parts[0]), 0.0)
    if len(parts) == 2:
        return complex(float(parts[0]), float(parts[1]))
    raise ConfigurationError(f"complex values are 're' or 're, im', got {text!r}")


def parse_config_text(text: str) -> dict:
    """Parse the flat key-value document against the schema."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        kind = SCHEMA[key][0]
        try:
            if kind == "str":
                out[key] = val
            elif kind == "float":
                out[key] = float(val)
            elif kind == "int":
                out[key] = int(val)
            elif kind == "bool":
                low = val.lower()
                if low in BOOL_TRUE:
                    out[key] = True
                elif low in BOOL_FALSE:
                    out[key] = False
                else:
                    raise ValueError(val)
            elif kind == "complex":
                out[key] = _parse_complex(val)
            elif kind == "complex_list":
                out[key] = [_parse_complex(p) for p in val.split(";") if p.strip()]
        except ConfigurationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(
                f"line {lineno}: cannot parse {key} = {val!r} as {kind}") from exc
    return out


class RunConfig:
    """Validated run settings: model, grid, solver and output control."""

    def __init__(self, values: dict):
        self.values = {}
        for key, (kind, default) in SCHEMA.items():
            self.values[key] = values.get(key, default)
        extra = set(values) - set(SCHEMA)
        if extra:
            raise ConfigurationError(f"unknown keys: {sorted(extra)}")
        self.params = ModelParams(
            gamma=self.values["gamma"], J=self.values["J"],
            mode=self.values["mode"], N=self.values["N"],
            T=self.values["T"], h=self.values["h"],
            kappa=self.values["kappa"], alpha=self.values["alpha"],
            beta_inhom=self.values["beta_inhom"],
            trotter_limit=self.values["trotter_limit"],
            nu=self.values["nu"])

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(parse_config_text(fh.read()))

    def canonical(self) -> str:
        def enc(v):
            if isinstance(v, complex):
                return [v.real, v.imag]
            if isinstance(v, list):
                return [enc(x) for x in v]
            return v
        return json.dumps({k: enc(v) for k, v in sorted(self.values.items())},
                          sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def cache_dir(self) -> str:
        cd = self.values["cache_dir"] or os.environ.get("XXZCORR_CACHE") \
            or os.path.join(self.values["output_dir"], ".xxzcorr-cache")
        os.makedirs(cd, exist_ok=True)
        return cd

    def grid(self, foci=(0.0,)):
        return build_contour(self.values["gamma"],
                             half_width=self.values["half_width"],
                             cutoff=self.values["cutoff"],
                             points_per_side=self.values["points_per_side"],
                             foci=foci)


def atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


# -- pipelines ---------------------------------------------------------------


def solve_aux_cached(cfg: RunConfig, twist_tag: str):
    """Solve (or load) one auxiliary solution; cache by config+twist hash."""
    params = cfg.params
    twist = params.kappa if twist_tag == "base" else params.kappa + params.alpha
    key = hashlib.sha256(
        (cfg.config_hash() + twist_tag).encode()).hexdigest()[:16]
    path = os.path.join(cfg.cache_dir(), f"aux-{key}.json")
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh), path, True
    grid = cfg.grid()
    sol = solve_aux(params, twist, grid, tol=cfg.values["tol"],
                    max_iter=cfg.values["max_iter"],
                    damping=cfg.values["damping"])
    record = sol.to_record()
    record["config_hash"] = cfg.config_hash()
    record["twist_tag"] = twist_tag
    atomic_write(path, dump_json(record))
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh), path, False


def build_pipeline(cfg: RunConfig):
    grid = cfg.grid()
    rf = special.build_rho_field(cfg.params, grid, tol=cfg.values["tol"],
                                 max_iter=cfg.values["max_iter"],
                                 damping=cfg.values["damping"])
    return grid, rf


def cmd_solve_aux(cfg: RunConfig, args) -> int:
    record, path, hit = solve_aux_cached(cfg, args.twist)
    print(f"{'cache hit' if hit else 'solved'}: {path} "
          f"(residual {record['residual']:.3e})")
    return 0


def cmd_rho(cfg: RunConfig, args) -> int:
    grid, rf = build_pipeline(cfg)
    zeta = complex(args.zeta_re, args.zeta_im)
    value = rf.rho(zeta)
    out = {"schema": "rho-eval/1", "config_hash": cfg.config_hash(),
           "zeta": [zeta.real, zeta.imag], "rho": [value.real, value.imag]}
    if args.slope:
        eps = 1e-4
        par_p = cfg.params.with_(alpha=eps)
        par_m = cfg.params.with_(alpha=-eps)
        rf_p = special.build_rho_field(par_p, grid, aux_base=rf.aux_base)
        rf_m = special.build_rho_field(par_m, grid, aux_base=rf.aux_base)
        slope = (rf_p.rho(zeta) - rf_m.rho(zeta)) / (2.0 * eps)
        out["alpha_slope"] = [slope.real, slope.imag]
        out["magnetization_estimate"] = [
            (slope / (2.0 * cfg.params.eta)).real,
            (slope / (2.0 * cfg.params.eta)).imag]
    path = os.path.join(cfg.values["output_dir"],
                        f"rho-{cfg.config_hash()}.json")
    atomic_write(path, dump_json(out))
    print(path)
    return 0


def cmd_omega(cfg: RunConfig, args) -> int:
    params = cfg.params
    if len(params.nu) != 2:
        raise ConfigurationError("omega needs exactly two nu entries")
    grid, rf = build_pipeline(cfg)
    nu1, nu2 = params.nu
    om12, om21, phi1, phi2 = special.omega_pair(params, rf, nu1, nu2)
    ctx = special.AlphaZeroContext(params, grid)
    om_prime = special.omega_prime(params, nu1, nu2, context=ctx)
    out = {"schema": "omega-eval/1", "config_hash": cfg.config_hash(),
           "nu": [[nu1.real, nu1.imag], [nu2.real, nu2.imag]],
           "omega12": [om12.real, om12.imag],
           "omega21": [om21.real, om21.imag],
           "phi1": [phi1.real, phi1.imag], "phi2": [phi2.real, phi2.imag],
           "omega_prime": [om_prime.real, om_prime.imag]}
    path = os.path.join(cfg.values["output_dir"],
                        f"omega-{cfg.config_hash()}.json")
    atomic_write(path, dump_json(out))
    print(path)
    return 0


def _physical_family(cfg: RunConfig, grid, aux_base):
    eps = cfg.values["physical_eps_alpha"]
    fam = {}
    for a in (eps, -eps, 2 * eps, -2 * eps):
        par = cfg.params.with_(alpha=a)
        rf = special.build_rho_field(par, grid, aux_base=aux_base)
        nu1, nu2 = par.nu
        om12, om21, p1, p2 = special.omega_pair(par, rf, nu1, nu2)
        fam[a] = density_mod.density_m2(par, rf, om12, om21, p1, p2)
    return fam


def cmd_density(cfg: RunConfig, args) -> int:
    params = cfg.params
    grid, rf = build_pipeline(cfg)
    m = len(params.nu)
    outputs_extra = {}
    if m == 1:
        dm = density_mod.density_m1(params, rf, params.nu[0])
        outputs_extra["rho_at_nu"] = rf.rho_lambda(params.nu[0])
    elif m == 2:
        if args.route == "multint":
            dm = density_mod.multint_matrix(params, rf)
        else:
            om12, om21, p1, p2 = special.omega_pair(params, rf, *params.nu)
            dm = density_mod.density_m2(params, rf, om12, om21, p1, p2)
            outputs_extra = {"omega12": om12, "omega21": om21,
                             "phi1": p1, "phi2": p2}
    else:
        raise ConfigurationError("density command handles m in {1, 2}")

    record = dm.to_record()
    record["config_hash"] = cfg.config_hash()
    for k, v in outputs_extra.items():
        record[k] = [v.real, v.imag]
    jpath = os.path.join(cfg.values["output_dir"],
                         f"density-{cfg.config_hash()}.json")
    atomic_write(jpath, dump_json(record))

    if args.physical and m == 2:
        fam = _physical_family(cfg, grid, rf.aux_base)
        d0 = density_mod.physical_limit(cfg.params, fam)
        sz = oracle.kron_sites([oracle.SIGMA_Z, oracle.ID2])
        szsz = oracle.kron_sites([oracle.SIGMA_Z, oracle.SIGMA_Z])
        spsm = oracle.kron_sites([oracle.SIGMA_P, oracle.SIGMA_M])
        smsp = oracle.kron_sites([oracle.SIGMA_M, oracle.SIGMA_P])
        sz_v = d0.expectation(sz)
        szsz_v = d0.expectation(szsz)
        sxsx_v = d0.expectation(spsm) + d0.expectation(smsp)
        cpath = os.path.join(cfg.values["output_dir"],
                             f"correlators-{cfg.config_hash()}.csv")
        buf = ["T,h,gamma,J,sz,szsz,sxsx,provenance,config_hash"]
        buf.append(f"{params.T},{params.h},{params.gamma},{params.J},"
                   f"{sz_v.real:.12g},{szsz_v.real:.12g},{sxsx_v.real:.12g},"
                   f"{d0.provenance},{cfg.config_hash()}")
        atomic_write(cpath, "\n".join(buf) + "\n")
        print(cpath)
    print(jpath)
    return 0


def cmd_oracle(cfg: RunConfig, args) -> int:
    params = cfg.params
    st = oracle.OracleState(params)
    dm = density_mod.DensityMatrix(
        m=len(params.nu), entries=st.density_matrix(), nu=list(params.nu),
        kappa=params.kappa, alpha=params.alpha,
        provenance=density_mod.PROVENANCE_ORACLE)
    record = dm.to_record()
    record["config_hash"] = cfg.config_hash()
    record["dominant_eigenvalue"] = [st.pair_base.eigenvalue.real,
                                     st.pair_base.eigenvalue.imag]
    record["gap_ratio"] = st.pair_base.gap_ratio
    path = os.path.join(cfg.values["output_dir"],
                        f"oracle-{cfg.config_hash()}.json")
    atomic_write(path, dump_json(record))
    print(path)
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    values = [float(v) for v in args.values.split(",")]
    key = args.param
    if key not in ("T", "h", "gamma", "J"):
        raise ConfigurationError(f"sweep parameter {key!r} not supported")
    results = [None] * len(values)

    def run_one(i, v):
        sub = RunConfig({**cfg.values, key: v})
        grid, rf = build_pipeline(sub)
        params = sub.params
        om12, om21, p1, p2 = special.omega_pair(params, rf, *params.nu)
        dm = density_mod.density_m2(params, rf, om12, om21, p1, p2)
        record = dm.to_record()
        record["config_hash"] = sub.config_hash()
        record[key] = v
        path = os.path.join(sub.values["output_dir"],
                            f"sweep-{key}-{sub.config_hash()}.json")
        atomic_write(path, dump_json(record))
        results[i] = (v, dm.trace().real, path)

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        futures = [pool.submit(run_one, i, v) for i, v in enumerate(values)]
        for f in futures:
            f.result()
    cpath = os.path.join(cfg.values["output_dir"], f"sweep-{key}.csv")
    lines = [f"{key},trace_re,point_file"]
    for v, trc, path in sorted(results):
        lines.append(f"{v},{trc:.12g},{os.path.basename(path)}")
    atomic_write(cpath, "\n".join(lines) + "\n")
    print(cpath)
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verify import run_verification
    report = run_verification(cfg, suite=args.suite or cfg.values["verify_suite"])
    path = os.path.join(cfg.values["output_dir"],
                        f"verify-{cfg.config_hash()}.json")
    atomic_write(path, dump_json(report))
    n_fail = sum(0 if item["pass"] else 1 for item in report["checks"])
    for item in report["checks"]:
        status = "PASS" if item["pass"] else "FAIL"
        print(f"[{status}] {item['id']}: residual {item['residual']:.3e} "
              f"(tol {item['tol']:.1e}) {item.get('detail', '')}")
    print(path)
    return 0 if n_fail == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xxzcorr",
        description="Correlation functions of the critical XXZ chain via "
                    "nonlinear/linear integral equations")
    parser.add_argument("--config", required=True, help="flat key=value file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-aux", help="solve and cache the auxiliary function")
    p.add_argument("--twist", choices=("base", "twisted"), default="base")

    p = sub.add_parser("rho", help="evaluate the eigenvalue-ratio function")
    p.add_argument("--zeta-re", type=float, default=1.0)
    p.add_argument("--zeta-im", type=float, default=0.0)
    p.add_argument("--slope", action="store_true",
                   help="also emit the alpha-derivative at alpha=0")

    sub.add_parser("omega", help="two-point function and its alpha-derivative")

    p = sub.add_parser("density", help="density matrix (JSON + correlator CSV)")
    p.add_argument("--route", choices=("factorized", "multint"),
                   default="factorized")
    p.add_argument("--physical", action="store_true",
                   help="extrapolate alpha -> 0 and emit correlators")

    sub.add_parser("oracle", help="dense transfer-matrix ground truth")

    p = sub.add_parser("verify", help="run the named invariant suite")
    p.add_argument("--suite", choices=("fast", "full"), default=None)

    p = sub.add_parser("sweep", help="parameter sweep with a worker pool")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, default=2)

    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        handler = {
            "solve-aux": cmd_solve_aux, "rho": cmd_rho, "omega": cmd_omega,
            "density": cmd_density, "oracle": cmd_oracle,
            "verify": cmd_verify, "sweep": cmd_sweep,
        }[args.command]
        return handler(cfg, args)
    except XXZCorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
